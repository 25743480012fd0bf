//! Principal components model of magnitude HRTFs.
//!
//! Columns of the data matrix H (N bins × M spectra) are magnitude HRTFs. The
//! model keeps the empirical mean μ, the q leading eigenvectors V of the
//! covariance of D = H − μ·1ᵀ, all N eigenvalues, and the weights W = Vᵀ·D.
//! Reconstruction is ĥ = V·w + μ.

use serde::{Deserialize, Serialize};

use crate::dsp::MAG_FLOOR_RATIO;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Number of retained components unless configured otherwise.
pub const DEFAULT_COMPONENTS: usize = 10;

/// Maps data-matrix columns to (subject, ear, direction), subject-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub subjects: usize,
    pub ears: usize,
    pub directions: usize,
}

impl ColumnLayout {
    pub fn len(&self) -> usize {
        self.subjects * self.ears * self.directions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, subject: usize, ear: usize, direction: usize) -> usize {
        (subject * self.ears + ear) * self.directions + direction
    }

    pub fn coords(&self, column: usize) -> (usize, usize, usize) {
        let direction = column % self.directions;
        let rest = column / self.directions;
        (rest / self.ears, rest % self.ears, direction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// N × q, orthonormal columns.
    pub basis: Matrix,
    /// All N eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// q × M.
    pub weights: Matrix,
    pub layout: ColumnLayout,
}

pub fn compute_mean(h: &Matrix) -> Result<Vec<f64>> {
    if h.cols() == 0 || h.rows() == 0 {
        return Err(Error::Empty("magnitude matrix".into()));
    }
    if let Some(index) = h.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "magnitude matrix".into(),
            index,
        });
    }
    let m = h.cols() as f64;
    Ok((0..h.rows())
        .map(|i| h.row(i).iter().sum::<f64>() / m)
        .collect())
}

/// D = H − μ·1ᵀ.
pub fn center(h: &Matrix, mean: &[f64]) -> Result<Matrix> {
    if mean.len() != h.rows() {
        return Err(Error::Dimension(format!(
            "mean has {} bins, matrix has {} rows",
            mean.len(),
            h.rows()
        )));
    }
    let mut d = h.clone();
    for (i, &mu) in mean.iter().enumerate() {
        for x in d.row_mut(i) {
            *x -= mu;
        }
    }
    Ok(d)
}

/// S = D·Dᵀ / (M − 1).
pub fn covariance(d: &Matrix) -> Result<Matrix> {
    let (n, m) = (d.rows(), d.cols());
    if m < 2 {
        return Err(Error::InsufficientSubjects {
            required: 2,
            found: m,
        });
    }
    let scale = 1.0 / (m - 1) as f64;
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = linalg::dot(d.row(i), d.row(j)) * scale;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

pub use crate::linalg::{eig_symmetric, SymmetricEigen};

/// W = Vᵀ·D.
pub fn project(d: &Matrix, basis: &Matrix) -> Result<Matrix> {
    if basis.rows() != d.rows() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, data has {}",
            basis.rows(),
            d.rows()
        )));
    }
    basis.transpose().matmul(d)
}

/// Reconstructed magnitude with the number of bins floored to stay positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub magnitude: Vec<f64>,
    pub clamped_bins: usize,
}

/// ĥ = V·w + μ, with bins below the magnitude floor clamped.
pub fn reconstruct(model: &PcaModel, weights: &[f64]) -> Result<Reconstruction> {
    if weights.len() != model.q() {
        return Err(Error::Dimension(format!(
            "expected {} weights, got {}",
            model.q(),
            weights.len()
        )));
    }
    let mut magnitude = model.basis.matvec(weights)?;
    for (m, mu) in magnitude.iter_mut().zip(&model.mean) {
        *m += mu;
    }
    let max = magnitude.iter().copied().fold(0.0_f64, f64::max);
    let floor = if max > 0.0 {
        MAG_FLOOR_RATIO * max
    } else {
        MAG_FLOOR_RATIO
    };
    let mut clamped_bins = 0;
    for m in magnitude.iter_mut() {
        if *m < floor {
            *m = floor;
            clamped_bins += 1;
        }
    }
    if clamped_bins > 0 {
        log::debug!("reconstruct: {clamped_bins} bins clamped to the magnitude floor");
    }
    Ok(Reconstruction {
        magnitude,
        clamped_bins,
    })
}

impl PcaModel {
    /// Fits the model on H (N × M) keeping `q` components.
    pub fn fit(h: &Matrix, q: usize, layout: ColumnLayout) -> Result<Self> {
        if layout.len() != h.cols() {
            return Err(Error::Dimension(format!(
                "layout describes {} columns, matrix has {}",
                layout.len(),
                h.cols()
            )));
        }
        if q == 0 || q > h.rows() {
            return Err(Error::Config(format!(
                "component count must be in 1..={}, got {q}",
                h.rows()
            )));
        }
        let mean = compute_mean(h)?;
        let d = center(h, &mean)?;
        let s = covariance(&d)?;
        let eig = eig_symmetric(&s)?;
        let n = h.rows();
        let mut basis = Matrix::zeros(n, q);
        for i in 0..n {
            for j in 0..q {
                basis[(i, j)] = eig.vectors[(i, j)];
            }
        }
        let weights = project(&d, &basis)?;
        // rounding can leave tiny negative eigenvalues on a PSD matrix
        let eigenvalues = eig.values.iter().map(|&l| l.max(0.0)).collect();
        Ok(Self {
            mean,
            basis,
            eigenvalues,
            weights,
            layout,
        })
    }

    pub fn q(&self) -> usize {
        self.basis.cols()
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    pub fn weight_column(&self, column: usize) -> Vec<f64> {
        self.weights.column(column)
    }

    /// Reconstruction of a training column from its stored weights.
    pub fn reconstruct_column(&self, column: usize) -> Result<Reconstruction> {
        reconstruct(self, &self.weight_column(column))
    }
}

/// One line of the explained-variance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRow {
    pub component: usize,
    pub eigenvalue: f64,
    pub percent: f64,
    pub cumulative: f64,
}

pub fn variance_report(eigenvalues: &[f64]) -> Result<Vec<VarianceRow>> {
    if let Some(&bad) = eigenvalues.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!(
            "eigenvalues must be finite and non-negative, got {bad}"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroVariance("eigenvalues".into()));
    }
    let mut cumulative = 0.0;
    Ok(eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let percent = 100.0 * l / total;
            cumulative += percent;
            VarianceRow {
                component: i + 1,
                eigenvalue: l,
                percent,
                cumulative,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(m: usize) -> ColumnLayout {
        ColumnLayout {
            subjects: m,
            ears: 1,
            directions: 1,
        }
    }

    #[test]
    fn layout_round_trip() {
        let l = ColumnLayout {
            subjects: 3,
            ears: 2,
            directions: 5,
        };
        for c in 0..l.len() {
            let (s, e, d) = l.coords(c);
            assert_eq!(l.column(s, e, d), c);
        }
        assert_eq!(l.column(1, 0, 0), 10);
    }

    #[test]
    fn mean_of_single_and_pair() {
        let h = Matrix::from_columns(&[vec![1.0, 4.0]]).unwrap();
        assert_eq!(compute_mean(&h).unwrap(), vec![1.0, 4.0]);
        let h = Matrix::from_columns(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(compute_mean(&h).unwrap(), vec![2.0, 2.0]);
        assert!(compute_mean(&Matrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn centering_identical_columns_gives_zero() {
        let h = Matrix::from_columns(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let d = center(&h, &compute_mean(&h).unwrap()).unwrap();
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
        assert!(center(&h, &[1.0]).is_err());
    }

    #[test]
    fn covariance_hand_case() {
        let d = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(covariance(&d).unwrap().as_slice(), &[2.0]);
        assert!(covariance(&Matrix::zeros(2, 1)).is_err());
        assert!(covariance(&Matrix::zeros(2, 4))
            .unwrap()
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn project_basis_vector_gives_unit_weight() {
        let basis = Matrix::from_columns(&[vec![0.6, 0.8], vec![-0.8, 0.6]]).unwrap();
        let d = Matrix::from_columns(&[vec![0.6, 0.8]]).unwrap();
        let w = project(&d, &basis).unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(w[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn zero_weights_reconstruct_mean() {
        let h = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], vec![2.0, 2.5, 2.0]])
            .unwrap();
        let model = PcaModel::fit(&h, 2, layout(3)).unwrap();
        let r = reconstruct(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(r.magnitude, model.mean);
        assert!(reconstruct(&model, &[0.0]).is_err());
    }

    #[test]
    fn negative_reconstruction_is_clamped() {
        let h = Matrix::from_columns(&[vec![1.0, 1.0], vec![3.0, 1.0]]).unwrap();
        let model = PcaModel::fit(&h, 1, layout(2)).unwrap();
        let r = reconstruct(&model, &[-100.0]).unwrap();
        assert_eq!(r.clamped_bins, 1);
        assert!(r.magnitude.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn variance_report_small_cases() {
        let r = variance_report(&[1.0]).unwrap();
        assert_eq!((r[0].percent, r[0].cumulative), (100.0, 100.0));
        let r = variance_report(&[2.0, 1.0, 1.0]).unwrap();
        let pct: Vec<f64> = r.iter().map(|x| x.percent).collect();
        let cum: Vec<f64> = r.iter().map(|x| x.cumulative).collect();
        assert_eq!(pct, vec![50.0, 25.0, 25.0]);
        assert_eq!(cum, vec![50.0, 75.0, 100.0]);
        assert!(matches!(variance_report(&[0.0, 0.0]), Err(Error::ZeroVariance(_))));
        assert!(variance_report(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn fit_rejects_bad_q() {
        let h = Matrix::from_columns(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(PcaModel::fit(&h, 0, layout(2)).is_err());
        assert!(PcaModel::fit(&h, 3, layout(2)).is_err());
        assert!(PcaModel::fit(&h, 1, layout(3)).is_err());
    }
}
