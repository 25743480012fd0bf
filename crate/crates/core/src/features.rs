//! Interaural and spectral cues per subject, and their Pearson correlation
//! with each anthropometric measurement.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    AnthropometryTable, Direction, Ear, HrirArchive, MEASUREMENTS, MEASUREMENT_NAMES,
    MEASUREMENT_UNITS,
};
use crate::dsp::{cross_correlation_lag, floor_magnitude, magnitude_spectrum, PIPELINE_N_FFT};
use crate::error::{Error, Result};
use crate::regression::DEFAULT_FEATURES;

/// Frequency band in Hz, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub fn new(low_hz: f64, high_hz: f64) -> Result<Self> {
        if !(low_hz >= 0.0) || !(high_hz > low_hz) || !high_hz.is_finite() {
            return Err(Error::Config(format!("invalid band {low_hz}..{high_hz} Hz")));
        }
        Ok(Self { low_hz, high_hz })
    }

    pub fn contains(&self, hz: f64) -> bool {
        hz >= self.low_hz && hz <= self.high_hz
    }

    /// Bins of a spectrum with `bin_hz` spacing that fall inside the band.
    pub fn bins(&self, n_bins: usize, bin_hz: f64) -> impl Iterator<Item = usize> + '_ {
        (0..n_bins).filter(move |&k| self.contains(k as f64 * bin_hz))
    }
}

pub const DEFAULT_NOTCH_BAND: Band = Band {
    low_hz: 4000.0,
    high_hz: 16000.0,
};

pub const DEFAULT_ILD_BAND: Band = Band {
    low_hz: 0.0,
    high_hz: 22050.0,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub notch_band: Band,
    pub ild_band: Band,
    /// Ear and direction whose spectrum supplies the notch frequency.
    pub notch_ear: Ear,
    pub notch_direction: Direction,
    pub n_fft: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            notch_band: DEFAULT_NOTCH_BAND,
            ild_band: DEFAULT_ILD_BAND,
            notch_ear: Ear::Left,
            notch_direction: Direction::front(-80.0),
            n_fft: PIPELINE_N_FFT,
        }
    }
}

/// Signed interaural time difference in seconds; see [`cross_correlation_lag`] for the sign.
pub fn itd(left: &[f64], right: &[f64], sample_rate: f64) -> Result<f64> {
    Ok(cross_correlation_lag(left, right)? as f64 / sample_rate)
}

/// Largest |ITD| over all directions of one subject.
pub fn itd_max(archive: &HrirArchive, subject: usize) -> Result<f64> {
    let mut best = 0.0_f64;
    for d in 0..archive.directions().len() {
        let t = itd(
            archive.hrir(subject, 0, d),
            archive.hrir(subject, 1, d),
            archive.sample_rate(),
        )?;
        best = best.max(t.abs());
    }
    Ok(best)
}

/// 20·log10(L/R) per bin, after flooring each ear independently.
pub fn ild_db(left: &[f64], right: &[f64]) -> Result<Vec<f64>> {
    if left.len() != right.len() {
        return Err(Error::Dimension(format!(
            "left has {} bins, right has {}",
            left.len(),
            right.len()
        )));
    }
    let mut l = left.to_vec();
    let mut r = right.to_vec();
    floor_magnitude(&mut l);
    floor_magnitude(&mut r);
    Ok(l.iter().zip(&r).map(|(a, b)| 20.0 * (a / b).log10()).collect())
}

/// Largest |ILD| in dB over the band and all (left, right) magnitude pairs.
pub fn ild_max<'a>(
    pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
    bin_hz: f64,
    band: Band,
) -> Result<f64> {
    let mut best = 0.0_f64;
    let mut any = false;
    for (l, r) in pairs {
        let ild = ild_db(l, r)?;
        for k in band.bins(ild.len(), bin_hz) {
            best = best.max(ild[k].abs());
            any = true;
        }
    }
    if !any {
        return Err(Error::Empty("no bins inside the ILD band".into()));
    }
    Ok(best)
}

/// Frequency of the deepest strict local minimum of the log magnitude inside `band`.
///
/// Both neighbours must be strictly larger; ties go to the lower frequency.
/// Returns `None` when the band holds no local minimum.
pub fn pinna_notch_frequency(mag: &[f64], bin_hz: f64, band: Band) -> Option<f64> {
    let mut m = mag.to_vec();
    floor_magnitude(&mut m);
    let db: Vec<f64> = m.iter().map(|v| 20.0 * v.log10()).collect();
    let mut best: Option<(usize, f64)> = None;
    for k in band.bins(db.len(), bin_hz) {
        if k == 0 || k + 1 >= db.len() {
            continue;
        }
        if db[k] < db[k - 1] && db[k] < db[k + 1] && best.is_none_or(|(_, v)| db[k] < v) {
            best = Some((k, db[k]));
        }
    }
    best.map(|(k, _)| k as f64 * bin_hz)
}

/// Sample Pearson correlation, computed in two passes.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "pearson inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Empty("pearson needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first input".into()));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsychoacousticSummary {
    pub subject: String,
    pub itd_max_s: f64,
    pub ild_max_db: f64,
    pub f_pn_hz: Option<f64>,
}

/// Per-subject ITD_max, ILD_max and notch frequency, in archive subject order.
pub fn summarize(archive: &HrirArchive, config: &FeatureConfig) -> Result<Vec<PsychoacousticSummary>> {
    let notch_dir = archive
        .directions()
        .iter()
        .position(|d| *d == config.notch_direction)
        .ok_or_else(|| {
            Error::Config(format!(
                "notch direction {} is not in the archive",
                config.notch_direction.label()
            ))
        })?;
    let bin_hz = archive.sample_rate() / config.n_fft as f64;
    let n_dirs = archive.directions().len();
    (0..archive.subjects().len())
        .into_par_iter()
        .map(|s| {
            let spectra = |ear: usize| -> Result<Vec<Vec<f64>>> {
                (0..n_dirs)
                    .map(|d| magnitude_spectrum(archive.hrir(s, ear, d), config.n_fft))
                    .collect()
            };
            let left = spectra(0)?;
            let right = spectra(1)?;
            let ild = ild_max(
                left.iter().zip(&right).map(|(l, r)| (l.as_slice(), r.as_slice())),
                bin_hz,
                config.ild_band,
            )?;
            let notch_spectrum = match config.notch_ear {
                Ear::Left => &left[notch_dir],
                Ear::Right => &right[notch_dir],
            };
            Ok(PsychoacousticSummary {
                subject: archive.subjects()[s].clone(),
                itd_max_s: itd_max(archive, s)?,
                ild_max_db: ild,
                f_pn_hz: pinna_notch_frequency(notch_spectrum, bin_hz, config.notch_band),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "rho", rename_all = "snake_case")]
pub enum Correlation {
    Value(f64),
    ZeroVariance,
    /// Fewer than two subjects with both values present.
    Insufficient,
}

impl Correlation {
    fn compute(pairs: &[(f64, f64)]) -> Self {
        if pairs.len() < 2 {
            return Correlation::Insufficient;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        match pearson(&a, &b) {
            Ok(r) => Correlation::Value(r),
            Err(_) => Correlation::ZeroVariance,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Value(r) => Some(*r),
            _ => None,
        }
    }

    fn cell(&self) -> String {
        match self {
            Correlation::Value(r) => format!("{r:.6}"),
            Correlation::ZeroVariance => "zero-variance".into(),
            Correlation::Insufficient => "insufficient".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub measurement: &'static str,
    pub unit: &'static str,
    pub selected: bool,
    pub itd_max: Correlation,
    pub ild_max: Correlation,
    pub f_pn: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub summaries: Vec<PsychoacousticSummary>,
    pub rows: Vec<CorrelationRow>,
    pub notch_ear: &'static str,
    pub notch_direction: String,
    pub notch_band: Band,
    pub ild_band: Band,
}

/// Correlates every measurement with ITD_max, ILD_max and f_pn across subjects.
///
/// Subjects with a missing measurement, or without a notch for f_pn, are left
/// out of the affected pairs only.
pub fn correlation_report(
    archive: &HrirArchive,
    table: &AnthropometryTable,
    config: &FeatureConfig,
) -> Result<CorrelationReport> {
    let rows_by_subject = table.rows_for(archive.subjects())?;
    let summaries = summarize(archive, config)?;
    let rows = (0..MEASUREMENTS)
        .map(|m| {
            let pairs = |target: &dyn Fn(&PsychoacousticSummary) -> Option<f64>| -> Vec<(f64, f64)> {
                summaries
                    .iter()
                    .zip(&rows_by_subject)
                    .filter_map(|(s, row)| {
                        let x = row[m];
                        match target(s) {
                            Some(y) if x.is_finite() => Some((x, y)),
                            _ => None,
                        }
                    })
                    .collect()
            };
            CorrelationRow {
                measurement: MEASUREMENT_NAMES[m],
                unit: MEASUREMENT_UNITS[m],
                selected: DEFAULT_FEATURES.contains(&m),
                itd_max: Correlation::compute(&pairs(&|s| Some(s.itd_max_s))),
                ild_max: Correlation::compute(&pairs(&|s| Some(s.ild_max_db))),
                f_pn: Correlation::compute(&pairs(&|s| s.f_pn_hz)),
            }
        })
        .collect();
    Ok(CorrelationReport {
        summaries,
        rows,
        notch_ear: config.notch_ear.name(),
        notch_direction: config.notch_direction.label(),
        notch_band: config.notch_band,
        ild_band: config.ild_band,
    })
}

impl CorrelationReport {
    pub fn row(&self, measurement: &str) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.measurement == measurement)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("measurement,unit,selected,rho_itd_max,rho_ild_max,rho_f_pn\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.measurement,
                r.unit,
                r.selected,
                r.itd_max.cell(),
                r.ild_max.cell(),
                r.f_pn.cell()
            ));
        }
        out
    }

    pub fn summaries_csv(&self) -> String {
        let mut out = String::from("subject,itd_max_s,ild_max_db,f_pn_hz\n");
        for s in &self.summaries {
            let f = s.f_pn_hz.map_or_else(|| "none".to_string(), |f| f.to_string());
            out.push_str(&format!("{},{},{},{}\n", s.subject, s.itd_max_s, s.ild_max_db, f));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "notch frequency from the {} ear at {}, band {}-{} Hz; ILD band {}-{} Hz\n",
            self.notch_ear,
            self.notch_direction,
            self.notch_band.low_hz,
            self.notch_band.high_hz,
            self.ild_band.low_hz,
            self.ild_band.high_hz
        );
        out.push_str(&format!(
            "{:<12} {:>14} {:>14} {:>14}\n",
            "measurement", "ITD_max", "ILD_max", "f_pn"
        ));
        for r in &self.rows {
            let name = if r.selected {
                format!("{} *", r.measurement)
            } else {
                r.measurement.to_string()
            };
            out.push_str(&format!(
                "{:<12} {:>14} {:>14} {:>14}\n",
                name,
                r.itd_max.cell(),
                r.ild_max.cell(),
                r.f_pn.cell()
            ));
        }
        out.push_str("* used for individualization\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ild_of_halved_ear() {
        let l = [1.0, 2.0, 0.5, 4.0];
        let r: Vec<f64> = l.iter().map(|v| v / 2.0).collect();
        let m = ild_max([(&l[..], &r[..])], 1000.0, DEFAULT_ILD_BAND).unwrap();
        assert!((m - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert_eq!(ild_max([(&l[..], &l[..])], 1000.0, DEFAULT_ILD_BAND).unwrap(), 0.0);
    }

    #[test]
    fn notch_rules() {
        let bin_hz = 44100.0 / 256.0;
        assert_eq!(pinna_notch_frequency(&[1.0; 128], bin_hz, DEFAULT_NOTCH_BAND), None);
        let mut m = vec![1.0; 128];
        m[52] = 0.1;
        assert_eq!(pinna_notch_frequency(&m, bin_hz, DEFAULT_NOTCH_BAND), Some(52.0 * bin_hz));
        // equal depth: lower frequency wins
        m[70] = 0.1;
        assert_eq!(pinna_notch_frequency(&m, bin_hz, DEFAULT_NOTCH_BAND), Some(52.0 * bin_hz));
        m[70] = 0.05;
        assert_eq!(pinna_notch_frequency(&m, bin_hz, DEFAULT_NOTCH_BAND), Some(70.0 * bin_hz));
        // plateau is not a strict minimum
        let mut p = vec![1.0; 128];
        p[40] = 0.2;
        p[41] = 0.2;
        assert_eq!(pinna_notch_frequency(&p, bin_hz, DEFAULT_NOTCH_BAND), None);
    }

    #[test]
    fn pearson_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&a, &[2.0; 4]), Err(Error::ZeroVariance(_))));
        assert!(pearson(&a, &a[..3]).is_err());
    }

    #[test]
    fn itd_of_shifted_pair() {
        let mut l = vec![0.0; 128];
        l[3] = 1.0;
        l[4] = 0.5;
        let mut r = vec![0.0; 128];
        r[47] = 1.0;
        r[48] = 0.5;
        let t = itd(&l, &r, 44100.0).unwrap();
        assert!((t + 44.0 / 44100.0).abs() < 1e-15);
        assert_eq!(itd(&r, &l, 44100.0).unwrap(), -t);
    }
}
