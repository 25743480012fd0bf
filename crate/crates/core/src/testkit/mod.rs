//! Seeded synthetic worlds and brute-force reference implementations.
//!
//! A world plants a mean spectrum, an orthonormal basis and per-cell
//! coefficients that make every PC weight an exact linear function of the
//! eight selected measurements, then runs the generative chain forward to an
//! HRIR archive. Interaural delays follow a spherical-head law scaled by head
//! width, so ITD_max is exactly proportional to x1. None of this claims to be
//! physically accurate; it exists so that tests have analytic ground truth.

pub mod oracle;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    write_atomic, AnthropometryTable, Direction, HrirArchive, EARS, MEASUREMENTS, MEASUREMENT_NAMES,
};
use crate::dsp::{insert_delay, minimum_phase_from_magnitude, DelayMode, PIPELINE_N_FFT};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::{DEFAULT_FEATURES, DESIGN_COLUMNS};

pub const DEFAULT_SEED: u64 = 20_100_810;

/// Rough population means for x1..x17, d1..d8 (cm) and t1, t2 (deg).
pub const MEASUREMENT_MEANS: [f64; MEASUREMENTS] = [
    14.49, 21.46, 19.96, 3.03, 0.46, 11.68, 6.27, 10.62, 31.0, 13.22, 23.46, 45.3, 3.03, 172.43,
    88.13, 57.34, 108.4, 1.91, 0.68, 1.58, 1.51, 6.41, 2.92, 0.53, 1.01, 24.01, 28.53,
];

/// Relative half-range of the uniform draw around each mean.
const MEASUREMENT_SPREAD: f64 = 0.15;

/// Head width in cm per sample of maximum ITD (14.5 cm ↔ 26 samples at 44.1 kHz).
pub const HEAD_WIDTH_PER_ITD_SAMPLE: f64 = 14.5 / 26.0;

const ITD_MAX_SAMPLES: std::ops::RangeInclusive<i64> = 22..=30;
const BASE_ONSET_SAMPLES: std::ops::RangeInclusive<i64> = 18..=24;
const BUMP_WIDTH_BINS: f64 = 5.0;
const MIN_MAGNITUDE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub q: usize,
    pub seed: u64,
    /// Standard deviation of additive weight noise, relative to each component's scale.
    pub noise_level: f64,
    pub directions: Vec<Direction>,
    pub sample_rate: f64,
    pub hrir_length: usize,
    pub n_fft: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 37,
            q: 10,
            seed: DEFAULT_SEED,
            noise_level: 0.0,
            directions: Direction::cipic_horizontal(),
            sample_rate: 44100.0,
            hrir_length: 200,
            n_fft: PIPELINE_N_FFT,
        }
    }
}

/// A generated population with its planted ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    /// n_fft/2 bins.
    pub true_mean: Vec<f64>,
    /// n_bins × q, orthonormal columns.
    #[serde(serialize_with = "serialize_matrix")]
    pub true_basis: Matrix,
    /// Raw-feature coefficients, ears × directions × q × 9.
    pub true_beta: Vec<f64>,
    /// Planted weights, laid out [subject][ear][direction][pc].
    pub true_weights: Vec<f64>,
    /// Planted magnitudes, laid out [subject][ear][direction][bin].
    #[serde(skip)]
    pub true_magnitudes: Vec<f64>,
    /// Onset delays in samples, laid out [subject][ear][direction].
    pub onsets: Vec<usize>,
    /// Maximum ITD in samples per subject, reached at |azimuth| = 80°.
    pub itd_max_samples: Vec<usize>,
    #[serde(skip)]
    pub anthropometry: AnthropometryTable,
    #[serde(skip)]
    pub archive: HrirArchive,
}

fn serialize_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<&[f64]> = (0..m.rows()).map(|i| m.row(i)).collect();
    serde::Serialize::serialize(&rows, s)
}

fn bump(bin: usize, centre: f64) -> f64 {
    let x = (bin as f64 - centre) / BUMP_WIDTH_BINS;
    (-0.5 * x * x).exp()
}

fn component_scale(j: usize) -> f64 {
    0.25 / (1.0 + j as f64)
}

/// Planted ITD in samples for a source at `azimuth_deg`; positive when the
/// source is on the right, so the left ear is delayed.
pub fn planted_itd(itd_max_samples: usize, azimuth_deg: f64) -> i64 {
    let law = |deg: f64| {
        let t = deg.to_radians();
        t + t.sin()
    };
    (itd_max_samples as f64 * law(azimuth_deg) / law(80.0)).round() as i64
}

fn smooth_basis(rng: &mut ChaCha8Rng, n_bins: usize, q: usize) -> Result<Matrix> {
    let bumps = (2 * q).max(20);
    let centres: Vec<f64> = (0..bumps).map(|_| rng.random_range(25.0..100.0)).collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(q);
    for _ in 0..q {
        let gains: Vec<f64> = (0..bumps).map(|_| rng.sample(StandardNormal)).collect();
        let mut v: Vec<f64> = (0..n_bins)
            .map(|k| gains.iter().zip(&centres).map(|(g, c)| g * bump(k, *c)).sum())
            .collect();
        // two Gram–Schmidt passes keep the basis orthonormal to rounding
        for _ in 0..2 {
            for u in &columns {
                let p = crate::linalg::dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = crate::linalg::norm(&v);
        if !(n > 1e-8) {
            return Err(Error::Config(format!(
                "cannot draw {q} independent smooth components over {n_bins} bins"
            )));
        }
        v.iter_mut().for_each(|a| *a /= n);
        columns.push(v);
    }
    Matrix::from_columns(&columns)
}

/// Builds a world from `config`; the same config always gives the same world.
pub fn synth_generate(config: &SynthConfig) -> Result<SyntheticWorld> {
    if config.subjects < crate::pipeline::MIN_TRAINING_SUBJECTS {
        return Err(Error::Config(format!(
            "at least {} subjects are needed, got {}",
            crate::pipeline::MIN_TRAINING_SUBJECTS,
            config.subjects
        )));
    }
    if !config.n_fft.is_power_of_two() || config.n_fft < 4 {
        return Err(Error::NotPowerOfTwo(config.n_fft));
    }
    let n_bins = config.n_fft / 2;
    if config.q == 0 || config.q > n_bins {
        return Err(Error::Config(format!("q must be in 1..={n_bins}, got {}", config.q)));
    }
    if !(config.noise_level >= 0.0) || !config.noise_level.is_finite() {
        return Err(Error::Config("noise level must be finite and non-negative".into()));
    }
    crate::dataset::validate_directions(&config.directions)?;
    let (m, q, n_dirs) = (config.subjects, config.q, config.directions.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let true_mean: Vec<f64> = (0..n_bins)
        .map(|k| 1.2 + 0.4 * bump(k, 25.0) - 0.3 * bump(k, 55.0))
        .collect();
    let true_basis = smooth_basis(&mut rng, n_bins, q)?;

    // anthropometry; x1 tied to the planted ITD_max
    let mut itd_max_samples = Vec::with_capacity(m);
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = [0.0; MEASUREMENTS];
        for (i, v) in row.iter_mut().enumerate() {
            let u: f64 = rng.random_range(-1.0..1.0);
            *v = MEASUREMENT_MEANS[i] * (1.0 + MEASUREMENT_SPREAD * u);
        }
        let n_s = rng.random_range(ITD_MAX_SAMPLES) as usize;
        row[0] = n_s as f64 * HEAD_WIDTH_PER_ITD_SAMPLE;
        itd_max_samples.push(n_s);
        rows.push(row);
    }
    let base_onsets: Vec<usize> = (0..m)
        .map(|_| rng.random_range(BASE_ONSET_SAMPLES) as usize)
        .collect();

    // per-cell coefficients on standardized features, mapped to raw β
    let feats = DEFAULT_FEATURES;
    let cells = EARS * n_dirs * q;
    let mut true_beta = Vec::with_capacity(cells * DESIGN_COLUMNS);
    for cell in 0..cells {
        let s = component_scale(cell % q);
        let c: f64 = rng.random_range(-s..s);
        let mut beta = vec![c; DESIGN_COLUMNS];
        for (f, &col) in feats.iter().enumerate() {
            let b: f64 = rng.random_range(-s / 8.0..s / 8.0);
            let scale = MEASUREMENT_SPREAD * MEASUREMENT_MEANS[col];
            beta[f + 1] = b / scale;
            beta[0] -= b * MEASUREMENT_MEANS[col] / scale;
        }
        true_beta.extend(beta);
    }

    let mut true_weights = Vec::with_capacity(m * cells);
    for row in &rows {
        for (cell, beta) in true_beta.chunks_exact(DESIGN_COLUMNS).enumerate() {
            let mut w = beta[0];
            for (f, &col) in feats.iter().enumerate() {
                w += beta[f + 1] * row[col];
            }
            if config.noise_level > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                w += config.noise_level * component_scale(cell % q) * z;
            }
            true_weights.push(w);
        }
    }

    let mut true_magnitudes = Vec::with_capacity(m * EARS * n_dirs * n_bins);
    for w in true_weights.chunks_exact(q) {
        for k in 0..n_bins {
            let v = true_mean[k] + (0..q).map(|j| true_basis[(k, j)] * w[j]).sum::<f64>();
            true_magnitudes.push(v);
        }
    }
    if let Some(v) = true_magnitudes.iter().copied().find(|&v| !(v >= MIN_MAGNITUDE)) {
        return Err(Error::Config(format!(
            "planted magnitude {v} is not safely positive; lower the noise level"
        )));
    }

    let mut onsets = Vec::with_capacity(m * EARS * n_dirs);
    for s in 0..m {
        for ear in 0..EARS {
            for d in &config.directions {
                let itd = planted_itd(itd_max_samples[s], d.azimuth_deg);
                let extra = if ear == 0 { itd.max(0) } else { (-itd).max(0) };
                onsets.push(base_onsets[s] + extra as usize);
            }
        }
    }

    let data: Vec<f64> = true_magnitudes
        .par_chunks_exact(n_bins)
        .zip(onsets.par_iter())
        .map(|(mag, &onset)| {
            let mp = minimum_phase_from_magnitude(mag)?;
            insert_delay(&mp, onset as f64, config.hrir_length, DelayMode::Rounded)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();

    let subjects: Vec<String> = (0..m).map(|i| format!("{:03}", i + 1)).collect();
    let archive = HrirArchive::new(
        config.sample_rate,
        config.hrir_length,
        subjects.clone(),
        config.directions.clone(),
        data,
    )?;
    let anthropometry = AnthropometryTable::new(subjects, rows)?;
    Ok(SyntheticWorld {
        config: config.clone(),
        true_mean,
        true_basis,
        true_beta,
        true_weights,
        true_magnitudes,
        onsets,
        itd_max_samples,
        anthropometry,
        archive,
    })
}

impl SyntheticWorld {
    pub fn n_bins(&self) -> usize {
        self.true_mean.len()
    }

    pub fn beta(&self, ear: usize, direction: usize, pc: usize) -> &[f64] {
        let cell = (ear * self.config.directions.len() + direction) * self.config.q + pc;
        &self.true_beta[cell * DESIGN_COLUMNS..(cell + 1) * DESIGN_COLUMNS]
    }

    pub fn magnitude(&self, subject: usize, ear: usize, direction: usize) -> &[f64] {
        let n = self.n_bins();
        let cell = (subject * EARS + ear) * self.config.directions.len() + direction;
        &self.true_magnitudes[cell * n..(cell + 1) * n]
    }

    /// Selected features of one subject, in regression order, keyed by name.
    pub fn listener_json(&self, subject: usize) -> Result<String> {
        let row = &self.anthropometry.rows()[subject];
        let map: serde_json::Map<String, serde_json::Value> = DEFAULT_FEATURES
            .iter()
            .map(|&i| (MEASUREMENT_NAMES[i].to_string(), serde_json::Value::from(row[i])))
            .collect();
        serde_json::to_string_pretty(&map).map_err(|e| Error::json("listener features", e))
    }

    /// Writes `archive/`, `anthropometry.csv`, `ground_truth.json` and
    /// `listener.json` (features of the first subject) into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.archive.save(dir.join("archive"))?;
        self.anthropometry.save(dir.join("anthropometry.csv"))?;
        let truth = serde_json::to_string_pretty(self).map_err(|e| Error::json("ground truth", e))?;
        write_atomic(&dir.join("ground_truth.json"), truth.as_bytes())?;
        write_atomic(&dir.join("listener.json"), self.listener_json(0)?.as_bytes())
    }
}

/// Impulse-response-like burst: minimum phase from a smooth random magnitude.
pub fn min_phase_burst(seed: u64, n_fft: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bins = n_fft / 2;
    let scale = n_bins as f64 / 128.0;
    let mag: Vec<f64> = {
        let centres: Vec<(f64, f64)> = (0..6)
            .map(|_| (rng.random_range(0.1..0.9) * n_bins as f64, rng.random_range(-0.5..0.5)))
            .collect();
        (0..n_bins)
            .map(|k| {
                // bumps in the log domain keep the cepstrum short, so the
                // response decays well inside the frame
                centres
                    .iter()
                    .map(|(c, g)| g * (-0.5 * ((k as f64 - c) / (BUMP_WIDTH_BINS * scale)).powi(2)).exp())
                    .sum::<f64>()
                    .exp()
            })
            .collect()
    };
    minimum_phase_from_magnitude(&mag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_itd_extremes() {
        assert_eq!(planted_itd(26, 80.0), 26);
        assert_eq!(planted_itd(26, -80.0), -26);
        assert_eq!(planted_itd(26, 0.0), 0);
    }

    #[test]
    fn small_world_is_deterministic() {
        let config = SynthConfig {
            subjects: 10,
            q: 1,
            directions: vec![Direction::front(30.0)],
            ..SynthConfig::default()
        };
        let a = synth_generate(&config).unwrap();
        let b = synth_generate(&config).unwrap();
        assert_eq!(a, b);
        assert!(a.archive.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_infeasible_configs() {
        let few = SynthConfig {
            subjects: 9,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&few).is_err());
        let big_q = SynthConfig {
            q: 129,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&big_q).is_err());
    }
}
