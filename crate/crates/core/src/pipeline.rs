//! Training, individualization and evaluation.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{AnthropometryTable, Direction, HrirArchive, TrainedModel, EARS};
use crate::dsp::{
    estimate_onset_delay, floor_magnitude, insert_delay, magnitude_spectrum,
    minimum_phase_from_magnitude, DelayMode, PIPELINE_N_FFT,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::features::Band;
use crate::linalg::Matrix;
use crate::pca::{self, ColumnLayout, PcaModel, DEFAULT_COMPONENTS};
use crate::regression::{self, build_design_matrix, DEFAULT_FEATURES};

/// Fewer subjects than this leave too few rows for a stable 9-coefficient fit.
pub const MIN_TRAINING_SUBJECTS: usize = 10;

/// Output HRIR length unless configured otherwise.
pub const DEFAULT_OUT_LENGTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub q: usize,
    pub feature_indices: Vec<usize>,
    pub n_fft: usize,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            q: DEFAULT_COMPONENTS,
            feature_indices: DEFAULT_FEATURES.to_vec(),
            n_fft: PIPELINE_N_FFT,
            standardize: false,
        }
    }
}

impl TrainConfig {
    /// The configuration a model was trained with.
    pub fn of(model: &TrainedModel) -> Self {
        Self {
            q: model.pca.q(),
            feature_indices: model.feature_indices.clone(),
            n_fft: model.n_fft,
            standardize: model.standardized,
        }
    }
}

fn layout_of(archive: &HrirArchive) -> ColumnLayout {
    ColumnLayout {
        subjects: archive.subjects().len(),
        ears: EARS,
        directions: archive.directions().len(),
    }
}

/// Half-spectrum magnitudes of every HRIR as the columns of an (n_fft/2) × M matrix.
pub fn magnitude_matrix(archive: &HrirArchive, n_fft: usize) -> Result<Matrix> {
    let layout = layout_of(archive);
    let columns = (0..layout.len())
        .into_par_iter()
        .map(|c| {
            let (s, ear, d) = layout.coords(c);
            magnitude_spectrum(archive.hrir(s, ear, d), n_fft)
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&columns)
}

/// Per-(ear, direction) mean of the onset delays over all subjects.
pub fn mean_onset_delays(archive: &HrirArchive) -> Result<Vec<f64>> {
    let layout = layout_of(archive);
    let cells = EARS * layout.directions;
    (0..cells)
        .into_par_iter()
        .map(|cell| {
            let (ear, d) = (cell / layout.directions, cell % layout.directions);
            let mut sum = 0.0;
            for s in 0..layout.subjects {
                sum += estimate_onset_delay(archive.hrir(s, ear, d))? as f64;
            }
            Ok(sum / layout.subjects as f64)
        })
        .collect()
}

pub fn train(
    archive: &HrirArchive,
    table: &AnthropometryTable,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let found = archive.subjects().len();
    if found < MIN_TRAINING_SUBJECTS {
        return Err(Error::InsufficientSubjects {
            required: MIN_TRAINING_SUBJECTS,
            found,
        })
        .stage(Stage::Regression);
    }
    let x = build_design_matrix(table, archive.subjects(), &config.feature_indices)
        .stage(Stage::Load)?;
    let h = magnitude_matrix(archive, config.n_fft).stage(Stage::Spectra)?;
    let pca = PcaModel::fit(&h, config.q, layout_of(archive)).stage(Stage::Pca)?;
    log::info!(
        "PCA: {} bins x {} spectra, {} components",
        h.rows(),
        h.cols(),
        pca.q()
    );
    let regression = regression::fit_all(&pca, &x, config.standardize).stage(Stage::Regression)?;
    let mean_delays = mean_onset_delays(archive).stage(Stage::Delays)?;
    let model = TrainedModel {
        pca,
        regression,
        mean_delays,
        feature_indices: config.feature_indices.clone(),
        directions: archive.directions().to_vec(),
        subjects: archive.subjects().to_vec(),
        sample_rate: archive.sample_rate(),
        n_fft: config.n_fft,
        standardized: config.standardize,
        provenance: format!(
            "{} subjects, {} directions, {} Hz, hrir length {}",
            found,
            archive.directions().len(),
            archive.sample_rate(),
            archive.hrir_length()
        ),
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisOptions {
    pub delay_mode: DelayMode,
    pub out_length: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            delay_mode: DelayMode::Rounded,
            out_length: DEFAULT_OUT_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedCell {
    /// Delayed output of `out_length` samples.
    pub hrir: Vec<f64>,
    /// The n_fft-sample minimum-phase response before delay insertion.
    pub minimum_phase: Vec<f64>,
    /// The floored magnitude model ĥ behind this response.
    pub magnitude_model: Vec<f64>,
    pub delay_applied: f64,
    pub clamped_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualizedHrirSet {
    pub directions: Vec<Direction>,
    pub sample_rate: f64,
    /// Laid out [ear][direction].
    pub cells: Vec<SynthesizedCell>,
}

impl IndividualizedHrirSet {
    pub fn cell(&self, ear: usize, direction: usize) -> &SynthesizedCell {
        &self.cells[ear * self.directions.len() + direction]
    }

    pub fn to_archive(&self, subject_id: &str) -> Result<HrirArchive> {
        let out_length = self.cells.first().map_or(0, |c| c.hrir.len());
        let data = self.cells.iter().flat_map(|c| c.hrir.iter().copied()).collect();
        HrirArchive::new(
            self.sample_rate,
            out_length,
            vec![subject_id.to_string()],
            self.directions.clone(),
            data,
        )
    }
}

/// Builds HRIRs from per-cell PC weights laid out [ear][direction][pc].
pub fn synthesize_from_weights(
    model: &TrainedModel,
    weights: &[f64],
    options: &SynthesisOptions,
) -> Result<IndividualizedHrirSet> {
    let q = model.pca.q();
    let n_dirs = model.directions.len();
    if weights.len() != EARS * n_dirs * q {
        return Err(Error::Dimension(format!(
            "expected {} weights, got {}",
            EARS * n_dirs * q,
            weights.len()
        )));
    }
    let cells = (0..EARS * n_dirs)
        .into_par_iter()
        .map(|cell| {
            let w = &weights[cell * q..(cell + 1) * q];
            let rec = pca::reconstruct(&model.pca, w)?;
            let minimum_phase = minimum_phase_from_magnitude(&rec.magnitude)?;
            let delay = model.mean_delays[cell];
            let hrir = insert_delay(&minimum_phase, delay, options.out_length, options.delay_mode)?;
            Ok(SynthesizedCell {
                hrir,
                minimum_phase,
                magnitude_model: rec.magnitude,
                delay_applied: delay,
                clamped_bins: rec.clamped_bins,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Synthesis)?;
    Ok(IndividualizedHrirSet {
        directions: model.directions.clone(),
        sample_rate: model.sample_rate,
        cells,
    })
}

/// HRIRs for a listener from the model's selected features, in model feature order.
pub fn individualize(
    model: &TrainedModel,
    features: &[f64],
    options: &SynthesisOptions,
) -> Result<IndividualizedHrirSet> {
    let weights = model.regression.predict(features).stage(Stage::Regression)?;
    synthesize_from_weights(model, &weights, options)
}

/// 100·‖h − ĥ‖² / ‖h‖².
pub fn error_percent(original: &[f64], estimate: &[f64]) -> Result<f64> {
    if original.len() != estimate.len() {
        return Err(Error::Dimension(format!(
            "original has {} bins, estimate has {}",
            original.len(),
            estimate.len()
        )));
    }
    let energy: f64 = original.iter().map(|v| v * v).sum();
    if !(energy > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let diff: f64 = original
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(100.0 * diff / energy)
}

/// RMS over the band of the dB difference between two magnitude spectra.
pub fn sd_score(original: &[f64], estimate: &[f64], bin_hz: f64, band: Band) -> Result<f64> {
    if original.len() != estimate.len() {
        return Err(Error::Dimension(format!(
            "original has {} bins, estimate has {}",
            original.len(),
            estimate.len()
        )));
    }
    let mut a = original.to_vec();
    let mut b = estimate.to_vec();
    let clamped = floor_magnitude(&mut a) + floor_magnitude(&mut b);
    if clamped > 0 {
        log::debug!("sd_score: {clamped} bins floored");
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in band.bins(a.len(), bin_hz) {
        let d = 20.0 * a[k].log10() - 20.0 * b[k].log10();
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("no bins inside the SD band".into()));
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationMode {
    /// Weights projected from the measured spectra; no regression.
    Pca,
    /// Weights predicted from each subject's own anthropometry.
    Individualized,
    /// Leave-one-subject-out retraining before predicting each subject.
    Holdout,
}

impl EvaluationMode {
    pub fn name(self) -> &'static str {
        match self {
            EvaluationMode::Pca => "pca",
            EvaluationMode::Individualized => "individualized",
            EvaluationMode::Holdout => "holdout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOptions {
    pub mode: EvaluationMode,
    pub sd_band: Band,
}

impl EvaluationOptions {
    pub fn new(mode: EvaluationMode) -> Self {
        Self {
            mode,
            sd_band: crate::features::DEFAULT_ILD_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellError {
    pub subject: String,
    pub ear: usize,
    pub direction: usize,
    pub error_percent: f64,
    pub sd_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub mode: EvaluationMode,
    pub directions: Vec<Direction>,
    pub cells: Vec<CellError>,
    pub ear_means: [f64; EARS],
    pub overall_mean: f64,
    pub sd_mean: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl EvaluationReport {
    fn from_cells(mode: EvaluationMode, directions: Vec<Direction>, cells: Vec<CellError>) -> Self {
        let ear_means =
            std::array::from_fn(|e| mean(cells.iter().filter(|c| c.ear == e).map(|c| c.error_percent)));
        Self {
            mode,
            directions,
            ear_means,
            overall_mean: mean(cells.iter().map(|c| c.error_percent)),
            sd_mean: mean(cells.iter().map(|c| c.sd_db)),
            cells,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,ear,azimuth_deg,hemisphere,error_percent,sd_db\n");
        for c in &self.cells {
            let d = &self.directions[c.direction];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.subject,
                crate::dataset::Ear::ALL[c.ear].name(),
                d.azimuth_deg,
                d.hemisphere.name(),
                c.error_percent,
                c.sd_db
            ));
        }
        out
    }

    /// Mean error per (direction, ear) across subjects.
    pub fn per_azimuth_csv(&self) -> String {
        let mut out = String::from("azimuth_deg,hemisphere,left_error_percent,right_error_percent\n");
        for (i, d) in self.directions.iter().enumerate() {
            let m = |ear: usize| {
                mean(
                    self.cells
                        .iter()
                        .filter(|c| c.direction == i && c.ear == ear)
                        .map(|c| c.error_percent),
                )
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                d.azimuth_deg,
                d.hemisphere.name(),
                m(0),
                m(1)
            ));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            mode: &'a str,
            cells: usize,
            left_mean_error_percent: f64,
            right_mean_error_percent: f64,
            overall_mean_error_percent: f64,
            mean_sd_db: f64,
        }
        let s = Summary {
            mode: self.mode.name(),
            cells: self.cells.len(),
            left_mean_error_percent: self.ear_means[0],
            right_mean_error_percent: self.ear_means[1],
            overall_mean_error_percent: self.overall_mean,
            mean_sd_db: self.sd_mean,
        };
        serde_json::to_string_pretty(&s).map_err(|e| Error::json("evaluation summary", e))
    }
}

fn check_grid(model: &TrainedModel, archive: &HrirArchive) -> Result<()> {
    if model.directions != archive.directions() {
        return Err(Error::Direction(
            "archive direction table differs from the model's".into(),
        ));
    }
    Ok(())
}

/// Errors for one subject given estimated magnitudes laid out [ear][direction].
fn subject_errors(
    archive: &HrirArchive,
    subject: usize,
    n_fft: usize,
    estimates: &[Vec<f64>],
    sd_band: Band,
) -> Result<Vec<CellError>> {
    let n_dirs = archive.directions().len();
    let bin_hz = archive.sample_rate() / n_fft as f64;
    let mut out = Vec::with_capacity(EARS * n_dirs);
    for ear in 0..EARS {
        for d in 0..n_dirs {
            let original = magnitude_spectrum(archive.hrir(subject, ear, d), n_fft)?;
            let estimate = &estimates[ear * n_dirs + d];
            out.push(CellError {
                subject: archive.subjects()[subject].clone(),
                ear,
                direction: d,
                error_percent: error_percent(&original, estimate)?,
                sd_db: sd_score(&original, estimate, bin_hz, sd_band)?,
            });
        }
    }
    Ok(out)
}

fn pca_estimates(model: &TrainedModel, archive: &HrirArchive, subject: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(EARS * archive.directions().len());
    let basis_t = model.pca.basis.transpose();
    for ear in 0..EARS {
        for d in 0..archive.directions().len() {
            let h = magnitude_spectrum(archive.hrir(subject, ear, d), model.n_fft)?;
            let centred: Vec<f64> = h.iter().zip(&model.pca.mean).map(|(a, m)| a - m).collect();
            let w = basis_t.matvec(&centred)?;
            out.push(pca::reconstruct(&model.pca, &w)?.magnitude);
        }
    }
    Ok(out)
}

fn predicted_estimates(model: &TrainedModel, features: &[f64]) -> Result<Vec<Vec<f64>>> {
    let weights = model.regression.predict(features)?;
    let q = model.pca.q();
    weights
        .chunks_exact(q)
        .map(|w| Ok(pca::reconstruct(&model.pca, w)?.magnitude))
        .collect()
}

/// Compares modelled magnitudes against every archive subject.
pub fn evaluate(
    model: &TrainedModel,
    archive: &HrirArchive,
    table: &AnthropometryTable,
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    check_grid(model, archive).stage(Stage::Evaluation)?;
    let subjects = archive.subjects().len();
    let features: Vec<Vec<f64>> = match options.mode {
        EvaluationMode::Pca => Vec::new(),
        _ => archive
            .subjects()
            .iter()
            .map(|s| table.features(s, &model.feature_indices))
            .collect::<Result<_>>()
            .stage(Stage::Load)?,
    };
    let config = TrainConfig::of(model);
    let per_subject = (0..subjects)
        .into_par_iter()
        .map(|s| {
            let estimates = match options.mode {
                EvaluationMode::Pca => pca_estimates(model, archive, s)?,
                EvaluationMode::Individualized => predicted_estimates(model, &features[s])?,
                EvaluationMode::Holdout => {
                    let others: Vec<usize> = (0..subjects).filter(|&i| i != s).collect();
                    let rest = archive.select_subjects(&others)?;
                    let held_out = train(&rest, table, &config)?;
                    predicted_estimates(&held_out, &features[s])?
                }
            };
            subject_errors(archive, s, model.n_fft, &estimates, options.sd_band)
        })
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Evaluation)?;
    Ok(EvaluationReport::from_cells(
        options.mode,
        archive.directions().to_vec(),
        per_subject.into_iter().flatten().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_percent_trivial_triple() {
        let h = [1.0, 0.5, 2.0, 0.25];
        assert_eq!(error_percent(&h, &h).unwrap(), 0.0);
        assert_eq!(error_percent(&h, &[0.0; 4]).unwrap(), 100.0);
        let twice: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        assert_eq!(error_percent(&h, &twice).unwrap(), 100.0);
        assert!(matches!(error_percent(&[0.0; 4], &h), Err(Error::ZeroSignal)));
    }

    #[test]
    fn sd_of_uniform_offset() {
        let h = [1.0, 0.5, 2.0, 0.25];
        let tenth: Vec<f64> = h.iter().map(|v| v / 10.0).collect();
        let band = Band::new(0.0, 1e9).unwrap();
        assert!((sd_score(&h, &tenth, 1.0, band).unwrap() - 20.0).abs() < 1e-10);
        assert_eq!(sd_score(&h, &h, 1.0, band).unwrap(), 0.0);
    }
}
