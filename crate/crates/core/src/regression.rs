//! Per-cell multiple linear regression from anthropometry to PC weights.
//!
//! One least-squares fit per (ear, direction, component), all sharing the
//! same design matrix [1, x1, x3, x6, x12, d1, d3, d5, d6].

use rayon::prelude::*;

use crate::dataset::{AnthropometryTable, MEASUREMENT_NAMES};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, QrLeastSquares};
use crate::pca::PcaModel;

/// Column indices of x1, x3, x6, x12, d1, d3, d5, d6 in the 27-column table.
pub const DEFAULT_FEATURES: [usize; 8] = [0, 2, 5, 11, 17, 19, 21, 22];

/// Intercept plus eight features.
pub const DESIGN_COLUMNS: usize = 9;

pub fn feature_names(indices: &[usize]) -> Vec<&'static str> {
    indices.iter().map(|&i| MEASUREMENT_NAMES[i]).collect()
}

pub fn validate_feature_indices(indices: &[usize]) -> Result<()> {
    if indices.len() != DESIGN_COLUMNS - 1 {
        return Err(Error::Config(format!(
            "exactly {} feature indices are required, got {}",
            DESIGN_COLUMNS - 1,
            indices.len()
        )));
    }
    for (i, &f) in indices.iter().enumerate() {
        if f >= MEASUREMENT_NAMES.len() {
            return Err(Error::Config(format!("feature index {f} out of range")));
        }
        if indices[..i].contains(&f) {
            return Err(Error::Config(format!("feature index {f} repeated")));
        }
    }
    Ok(())
}

/// Rows are subjects; column 0 is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: Matrix,
    pub subjects: Vec<String>,
    pub feature_indices: Vec<usize>,
}

impl DesignMatrix {
    /// Builds [1, features] rows from already-selected feature vectors.
    pub fn from_features(
        subjects: Vec<String>,
        feature_indices: Vec<usize>,
        features: &[Vec<f64>],
    ) -> Result<Self> {
        if subjects.len() != features.len() {
            return Err(Error::Dimension(format!(
                "{} subjects for {} feature rows",
                subjects.len(),
                features.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::Empty("design matrix has no subjects".into()));
        }
        let rows: Vec<Vec<f64>> = features
            .iter()
            .zip(&subjects)
            .map(|(f, s)| {
                if f.len() != feature_indices.len() {
                    return Err(Error::Dimension(format!(
                        "subject '{s}' has {} features, expected {}",
                        f.len(),
                        feature_indices.len()
                    )));
                }
                if let Some(k) = f.iter().position(|v| !v.is_finite()) {
                    return Err(Error::MissingFeature {
                        subject: s.clone(),
                        feature: MEASUREMENT_NAMES[feature_indices[k]].to_string(),
                    });
                }
                Ok(std::iter::once(1.0).chain(f.iter().copied()).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            matrix: Matrix::from_rows(&rows)?,
            subjects,
            feature_indices,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }
}

/// Design matrix for `subjects` (in that order) from the anthropometry table.
pub fn build_design_matrix(
    table: &AnthropometryTable,
    subjects: &[String],
    feature_indices: &[usize],
) -> Result<DesignMatrix> {
    validate_feature_indices(feature_indices)?;
    let features = subjects
        .iter()
        .map(|s| table.features(s, feature_indices))
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::from_features(subjects.to_vec(), feature_indices.to_vec(), &features)
}

/// A factorized design matrix ready to solve for many right-hand sides.
///
/// With `standardize`, non-intercept columns are z-scored before the QR and
/// the solution is mapped back, so returned β always applies to raw features.
#[derive(Debug, Clone)]
pub struct LinearFit {
    qr: QrLeastSquares,
    scaling: Option<Vec<(f64, f64)>>,
}

impl LinearFit {
    pub fn new(x: &Matrix, standardize: bool) -> Result<Self> {
        if x.cols() == 0 || x.rows() == 0 {
            return Err(Error::Empty("design matrix".into()));
        }
        if !standardize {
            return Ok(Self {
                qr: QrLeastSquares::new(x)?,
                scaling: None,
            });
        }
        let m = x.rows() as f64;
        let mut z = x.clone();
        let mut scaling = Vec::with_capacity(x.cols() - 1);
        for j in 1..x.cols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / m;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
            if !(sd > 0.0) {
                return Err(Error::Singular { pivot: 0.0 });
            }
            for i in 0..x.rows() {
                z[(i, j)] = (x[(i, j)] - mean) / sd;
            }
            scaling.push((mean, sd));
        }
        Ok(Self {
            qr: QrLeastSquares::new(&z)?,
            scaling: Some(scaling),
        })
    }

    /// Condition diagnostic of the (possibly standardized) factorization.
    pub fn condition(&self) -> f64 {
        self.qr.condition()
    }

    pub fn min_pivot(&self) -> f64 {
        self.qr.min_pivot()
    }

    pub fn solve(&self, w: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.qr.solve(w)?;
        let Some(scaling) = &self.scaling else {
            return Ok(gamma);
        };
        let mut beta = gamma.clone();
        for (j, &(mean, sd)) in scaling.iter().enumerate() {
            beta[j + 1] = gamma[j + 1] / sd;
            beta[0] -= gamma[j + 1] * mean / sd;
        }
        Ok(beta)
    }
}

/// Least-squares β minimizing ‖w − X·β‖².
pub fn fit(x: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    LinearFit::new(x, false)?.solve(w)
}

/// w − X·β.
pub fn residuals(x: &Matrix, w: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let fitted = x.matvec(beta)?;
    Ok(w.iter().zip(&fitted).map(|(a, b)| a - b).collect())
}

/// Regression coefficients for every (ear, direction, component) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub ears: usize,
    pub directions: usize,
    pub q: usize,
    /// ears × directions × q × 9, row-major.
    pub coefficients: Vec<f64>,
    /// Per-cell condition diagnostic, ears × directions × q.
    pub conditioning: Vec<f64>,
    pub feature_indices: Vec<usize>,
}

impl RegressionModel {
    pub fn cells(&self) -> usize {
        self.ears * self.directions * self.q
    }

    pub fn cell_index(&self, ear: usize, direction: usize, pc: usize) -> usize {
        (ear * self.directions + direction) * self.q + pc
    }

    pub fn beta(&self, ear: usize, direction: usize, pc: usize) -> &[f64] {
        let c = self.cell_index(ear, direction, pc);
        &self.coefficients[c * DESIGN_COLUMNS..(c + 1) * DESIGN_COLUMNS]
    }

    /// Predicted weights for one listener, laid out [ear][direction][pc].
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != DESIGN_COLUMNS - 1 {
            return Err(Error::Dimension(format!(
                "expected {} features, got {}",
                DESIGN_COLUMNS - 1,
                features.len()
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingFeature {
                subject: "listener".into(),
                feature: MEASUREMENT_NAMES[self.feature_indices[k]].to_string(),
            });
        }
        Ok(self
            .coefficients
            .chunks_exact(DESIGN_COLUMNS)
            .map(|beta| beta[0] + features.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>())
            .collect())
    }
}

/// Fits every cell of the PCA weight matrix against the design matrix.
pub fn fit_all(pca: &PcaModel, x: &DesignMatrix, standardize: bool) -> Result<RegressionModel> {
    let layout = pca.layout;
    if layout.subjects != x.rows() {
        return Err(Error::SubjectMismatch(format!(
            "PCA model covers {} subjects, design matrix has {} rows",
            layout.subjects,
            x.rows()
        )));
    }
    let solver = LinearFit::new(&x.matrix, standardize)?;
    let condition = solver.condition();
    let q = pca.q();
    let cells = layout.ears * layout.directions * q;
    let betas = (0..cells)
        .into_par_iter()
        .map(|c| {
            let pc = c % q;
            let direction = (c / q) % layout.directions;
            let ear = c / (q * layout.directions);
            let w: Vec<f64> = (0..layout.subjects)
                .map(|s| pca.weights[(pc, layout.column(s, ear, direction))])
                .collect();
            let beta = solver.solve(&w).map_err(|e| Error::Cell {
                ear,
                direction,
                pc,
                source: Box::new(e),
            })?;
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::Cell {
                    ear,
                    direction,
                    pc,
                    source: Box::new(Error::NonFinite {
                        what: "regression coefficients".into(),
                        index: 0,
                    }),
                });
            }
            Ok(beta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionModel {
        ears: layout.ears,
        directions: layout.directions,
        q,
        coefficients: betas.into_iter().flatten().collect(),
        conditioning: vec![condition; cells],
        feature_indices: x.feature_indices.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[[f64; 3]]) -> Matrix {
        Matrix::from_rows(
            &rows
                .iter()
                .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
                .collect::<Vec<Vec<f64>>>(),
        )
        .unwrap()
    }

    #[test]
    fn default_features_are_the_selected_eight() {
        assert_eq!(
            feature_names(&DEFAULT_FEATURES),
            ["x1", "x3", "x6", "x12", "d1", "d3", "d5", "d6"]
        );
        validate_feature_indices(&DEFAULT_FEATURES).unwrap();
        assert!(validate_feature_indices(&[0, 0, 1, 2, 3, 4, 5, 6]).is_err());
        assert!(validate_feature_indices(&[0, 1]).is_err());
    }

    #[test]
    fn two_subject_design_of_ones() {
        let table = AnthropometryTable::new(vec!["a".into(), "b".into()], vec![[1.0; 27]; 2]).unwrap();
        let x = build_design_matrix(&table, &["a".into(), "b".into()], &DEFAULT_FEATURES).unwrap();
        assert_eq!(x.matrix.rows(), 2);
        for i in 0..2 {
            assert_eq!(x.matrix.row(i), &[1.0; 9]);
        }
    }

    #[test]
    fn constant_target_gives_intercept_only() {
        let x = design(&[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 4.0, 1.0], [2.0, 2.0, -3.0], [5.0, 1.0, 0.0]]);
        let beta = fit(&x, &[2.5; 5]).unwrap();
        assert!((beta[0] - 2.5).abs() < 1e-12);
        assert!(beta[1..].iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn standardize_matches_raw_solution() {
        let x = design(&[[10.0, 2.0, 0.5], [13.0, -1.0, 2.0], [11.0, 4.0, 1.0], [12.0, 2.0, -3.0], [15.0, 1.0, 0.0]]);
        let w = [1.0, -2.0, 0.3, 4.0, 2.2];
        let raw = LinearFit::new(&x, false).unwrap().solve(&w).unwrap();
        let std = LinearFit::new(&x, true).unwrap().solve(&w).unwrap();
        for (a, b) in raw.iter().zip(&std) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let x = design(&[[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [3.0, 6.0, 3.0], [4.0, 8.0, 4.0]]);
        assert!(matches!(fit(&x, &[1.0; 4]), Err(Error::Singular { .. })));
        let one_row = design(&[[1.0, 2.0, 3.0]]);
        assert!(matches!(fit(&one_row, &[1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn predict_with_zero_features_returns_intercepts() {
        let model = RegressionModel {
            ears: 1,
            directions: 1,
            q: 2,
            coefficients: (0..18).map(|i| i as f64).collect(),
            conditioning: vec![1.0; 2],
            feature_indices: DEFAULT_FEATURES.to_vec(),
        };
        assert_eq!(model.predict(&[0.0; 8]).unwrap(), vec![0.0, 9.0]);
        let mut bad = [0.0; 8];
        bad[7] = f64::NAN;
        assert!(matches!(model.predict(&bad), Err(Error::MissingFeature { feature, .. }) if feature == "d6"));
    }
}
