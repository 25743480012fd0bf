//! Real cepstrum and minimum-phase reconstruction.
//!
//! The cepstrum of a real signal is folded onto its causal part with the
//! window w(0) = w(N/2) = 1, w(n) = 2 for 0 < n < N/2 and w(n) = 0 above N/2,
//! then exponentiated in the frequency domain:
//!
//! ```text
//! h_mp = Re{ IDFT{ exp( DFT{ w · v } ) } },   v = Re{ IDFT{ ln|DFT{h}| } }
//! ```

use num_complex::Complex64;

use super::fft::{check_signal, fft, fft_complex, ifft, ifft_real};
use crate::error::{Error, Result};

/// Log-magnitude floor relative to the largest bin.
pub const MAG_FLOOR_RATIO: f64 = 1e-10;

/// Real cepstrum plus the number of magnitude bins that had to be floored.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrum {
    pub values: Vec<f64>,
    pub clamped_bins: usize,
}

/// Natural log of `mag` after flooring every bin at `MAG_FLOOR_RATIO × max`.
pub(crate) fn floored_log(mag: &[f64]) -> Result<(Vec<f64>, usize)> {
    if let Some(index) = mag.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "magnitude spectrum".into(),
            index,
        });
    }
    let max = mag.iter().copied().fold(0.0_f64, f64::max);
    let floor = MAG_FLOOR_RATIO * max;
    if !(floor > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let mut clamped = 0;
    let logs = mag
        .iter()
        .map(|&m| {
            if m < floor {
                clamped += 1;
                floor.ln()
            } else {
                m.ln()
            }
        })
        .collect();
    Ok((logs, clamped))
}

/// Folding window applied to the real cepstrum.
pub fn cepstral_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i == 0 || 2 * i == n {
                1.0
            } else if 2 * i < n {
                2.0
            } else {
                0.0
            }
        })
        .collect()
}

fn cepstrum_from_log(log_mag: &[f64]) -> Result<Vec<f64>> {
    let spec: Vec<Complex64> = log_mag.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    ifft_real(&spec)
}

/// exp(DFT{w·v}): the minimum-phase spectrum whose log-magnitude generated `v`.
fn folded_spectrum(v: &[f64]) -> Result<Vec<Complex64>> {
    let folded: Vec<Complex64> = v
        .iter()
        .zip(cepstral_window(v.len()))
        .map(|(&c, w)| Complex64::new(c * w, 0.0))
        .collect();
    fft_complex(&folded)
}

pub fn real_cepstrum(h: &[f64], n_fft: usize) -> Result<Cepstrum> {
    let mag: Vec<f64> = fft(h, n_fft)?.iter().map(|c| c.norm()).collect();
    let (log_mag, clamped_bins) = floored_log(&mag)?;
    if clamped_bins > 0 {
        log::warn!("real_cepstrum: {clamped_bins} magnitude bins floored");
    }
    Ok(Cepstrum {
        values: cepstrum_from_log(&log_mag)?,
        clamped_bins,
    })
}

/// Minimum-phase counterpart of `h`, `n_fft` samples long.
pub fn minimum_phase_reconstruct(h: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    check_signal(h)?;
    let cep = real_cepstrum(h, n_fft)?;
    let spec: Vec<Complex64> = folded_spectrum(&cep.values)?
        .into_iter()
        .map(Complex64::exp)
        .collect();
    ifft_real(&spec)
}

/// Extends a half spectrum (bins 0..N/2) to N bins with conjugate symmetry.
///
/// The Nyquist bin is not part of the half spectrum. A real signal's log
/// magnitude is even about Nyquist, so it is filled from the even parabola
/// through bins N/2 − 2 and N/2 − 1, falling back to bin N/2 − 1 when either
/// of those is zero or the extrapolation would exceed the spectrum maximum.
pub fn mirror_half(mag_half: &[f64]) -> Vec<f64> {
    let half = mag_half.len();
    let n = 2 * half;
    let mut full = vec![0.0; n];
    full[..half].copy_from_slice(mag_half);
    if half > 0 {
        full[half] = nyquist_estimate(mag_half);
    }
    for k in 1..half {
        full[n - k] = mag_half[k];
    }
    full
}

fn nyquist_estimate(mag_half: &[f64]) -> f64 {
    let half = mag_half.len();
    let last = mag_half[half - 1];
    if half < 2 {
        return last;
    }
    let before = mag_half[half - 2];
    let max = mag_half.iter().copied().fold(0.0_f64, f64::max);
    let floor = MAG_FLOOR_RATIO * max;
    if !(last > floor && before > floor) {
        return last;
    }
    // ln m(N/2) = (4·ln m(N/2 − 1) − ln m(N/2 − 2)) / 3
    let est = ((4.0 * last.ln() - before.ln()) / 3.0).exp();
    if est.is_finite() && est <= max {
        est
    } else {
        last
    }
}

fn check_half(mag_half: &[f64]) -> Result<()> {
    if mag_half.is_empty() || !mag_half.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(2 * mag_half.len()));
    }
    Ok(())
}

/// Minimum phase (radians, N = 2·len bins) of a half magnitude spectrum, via the folded cepstrum.
pub fn hilbert_min_phase(mag_half: &[f64]) -> Result<Vec<f64>> {
    check_half(mag_half)?;
    let (log_full, clamped) = floored_log(&mirror_half(mag_half))?;
    if clamped > 0 {
        log::warn!("hilbert_min_phase: {clamped} magnitude bins floored");
    }
    let v = cepstrum_from_log(&log_full)?;
    Ok(folded_spectrum(&v)?.into_iter().map(|c| c.im).collect())
}

/// Complex minimum-phase spectrum |H|·e^{jφ_mp} on N = 2·len bins.
pub fn min_phase_spectrum(mag_half: &[f64]) -> Result<Vec<Complex64>> {
    let phase = hilbert_min_phase(mag_half)?;
    let full = mirror_half(mag_half);
    let max = full.iter().copied().fold(0.0_f64, f64::max);
    let floor = MAG_FLOOR_RATIO * max;
    Ok(full
        .iter()
        .zip(&phase)
        .map(|(&m, &p)| Complex64::from_polar(m.max(floor), p))
        .collect())
}

/// Minimum-phase impulse response (N = 2·len samples) for a half magnitude spectrum.
pub fn minimum_phase_from_magnitude(mag_half: &[f64]) -> Result<Vec<f64>> {
    ifft_real(&min_phase_spectrum(mag_half)?)
}

/// Largest |imaginary part| of the inverse transform; near zero for a conjugate-symmetric spectrum.
pub fn imaginary_residue(spectrum: &[Complex64]) -> Result<f64> {
    Ok(ifft(spectrum)?
        .iter()
        .fold(0.0_f64, |m, c| m.max(c.im.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_shape() {
        assert_eq!(cepstral_window(8), vec![1.0, 2.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn impulse_cepstrum_is_zero() {
        let mut h = vec![0.0; 16];
        h[0] = 1.0;
        let c = real_cepstrum(&h, 16).unwrap();
        assert_eq!(c.clamped_bins, 0);
        assert!(c.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn scaled_impulse_cepstrum() {
        let c = real_cepstrum(&[2.0, 0.0, 0.0, 0.0], 4).unwrap();
        assert!((c.values[0] - 2f64.ln()).abs() < 1e-15);
        assert!(c.values[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_signal_is_rejected() {
        assert!(matches!(real_cepstrum(&[0.0; 4], 4), Err(Error::ZeroSignal)));
        assert!(matches!(hilbert_min_phase(&[0.0; 4]), Err(Error::ZeroSignal)));
    }

    #[test]
    fn spectral_zero_is_floored_and_flagged() {
        // [1, 1] has an exact zero at Nyquist
        let c = real_cepstrum(&[1.0, 1.0], 8).unwrap();
        assert_eq!(c.clamped_bins, 1);
        assert!(c.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn delayed_impulse_becomes_impulse() {
        let h = minimum_phase_reconstruct(&[0.0, 0.0, 1.0, 0.0], 4).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_magnitude_has_zero_phase() {
        let phase = hilbert_min_phase(&[1.0; 64]).unwrap();
        assert_eq!(phase.len(), 128);
        assert!(phase.iter().all(|p| p.abs() < 1e-15));
    }

    #[test]
    fn mirror_is_even() {
        let full = mirror_half(&[4.0, 3.0, 2.0, 1.0]);
        let nyq = (0.5f64).powf(1.0 / 3.0);
        assert!((full[4] - nyq).abs() < 1e-15);
        assert_eq!(full[..4], [4.0, 3.0, 2.0, 1.0]);
        assert_eq!(full[5..], [1.0, 2.0, 3.0]);
        // flat tail stays flat
        assert_eq!(mirror_half(&[1.0, 2.0, 2.0, 2.0])[4], 2.0);
    }

    #[test]
    fn half_spectrum_length_must_be_power_of_two() {
        assert!(matches!(
            hilbert_min_phase(&[1.0; 3]),
            Err(Error::NotPowerOfTwo(6))
        ));
    }
}
