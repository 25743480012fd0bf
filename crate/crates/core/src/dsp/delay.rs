//! Cross-correlation lags, onset-delay estimation and delay insertion.

use std::f64::consts::PI;

use super::fft::check_signal;
use super::minphase::minimum_phase_reconstruct;
use crate::error::{Error, Result};

/// Half-width, in samples, of the truncated sinc used for fractional delays.
pub const SINC_HALF_WIDTH: isize = 16;

/// How a real-valued delay is realized on the sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayMode {
    /// Round to the nearest whole sample.
    #[default]
    Rounded,
    /// Whole-sample shift plus truncated-sinc interpolation of the remainder.
    Fractional,
}

fn nonzero(x: &[f64]) -> Result<()> {
    check_signal(x)?;
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSignal);
    }
    Ok(())
}

/// r(lag) = Σ_n a(n + lag)·b(n) over all overlapping samples.
fn correlation_at(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let (a_start, b_start) = if lag >= 0 {
        (lag as usize, 0)
    } else {
        (0, (-lag) as usize)
    };
    if a_start >= a.len() || b_start >= b.len() {
        return 0.0;
    }
    a[a_start..]
        .iter()
        .zip(&b[b_start..])
        .map(|(x, y)| x * y)
        .sum()
}

/// Lag maximizing r(lag) = Σ_n a(n + lag)·b(n).
///
/// A positive lag means `b` leads `a`: if `b` is `a` delayed by d samples the
/// result is −d. Ties go to the smallest |lag|, negative before positive.
pub fn cross_correlation_lag(a: &[f64], b: &[f64]) -> Result<isize> {
    nonzero(a)?;
    nonzero(b)?;
    let max_pos = a.len() as isize - 1;
    let max_neg = b.len() as isize - 1;
    let mut best_lag = 0;
    let mut best = correlation_at(a, b, 0);
    for m in 1..=max_pos.max(max_neg) {
        for lag in [-m, m] {
            if lag > max_pos || -lag > max_neg {
                continue;
            }
            let r = correlation_at(a, b, lag);
            if r > best {
                best = r;
                best_lag = lag;
            }
        }
    }
    Ok(best_lag)
}

/// Onset delay of `h` in samples: the lag in [0, len) at which `h` best
/// matches its own minimum-phase reconstruction.
pub fn estimate_onset_delay(h: &[f64]) -> Result<usize> {
    nonzero(h)?;
    let n_fft = h.len().next_power_of_two();
    let h_mp = minimum_phase_reconstruct(h, n_fft)?;
    let mut best_lag = 0;
    let mut best = f64::NEG_INFINITY;
    for lag in 0..h.len() {
        let r = correlation_at(h, &h_mp, lag as isize);
        if r > best {
            best = r;
            best_lag = lag;
        }
    }
    Ok(best_lag)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Delays `h` by `delay` samples and truncates or zero-pads to `out_length`.
pub fn insert_delay(h: &[f64], delay: f64, out_length: usize, mode: DelayMode) -> Result<Vec<f64>> {
    if !(delay >= 0.0) || !delay.is_finite() {
        return Err(Error::NegativeDelay(delay));
    }
    let mut out = vec![0.0; out_length];
    let (whole, frac) = match mode {
        DelayMode::Rounded => (delay.round(), 0.0),
        DelayMode::Fractional => (delay.floor(), delay - delay.floor()),
    };
    let whole = whole as usize;
    if frac == 0.0 {
        for (n, &x) in h.iter().enumerate() {
            match out.get_mut(n + whole) {
                Some(o) => *o = x,
                None => break,
            }
        }
        return Ok(out);
    }
    // out[n] = Σ_k h[k]·sinc(n − whole − frac − k), kernel truncated to ±SINC_HALF_WIDTH
    for (n, o) in out.iter_mut().enumerate() {
        let centre = n as isize - whole as isize;
        let lo = (centre - SINC_HALF_WIDTH).max(0);
        let hi = (centre + SINC_HALF_WIDTH).min(h.len() as isize - 1);
        let mut acc = 0.0;
        for k in lo..=hi {
            acc += h[k as usize] * sinc((centre - k) as f64 - frac);
        }
        *o = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(len: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        v
    }

    #[test]
    fn lag_of_identical_signals_is_zero() {
        let a = [0.3, 1.0, -0.4, 0.2, 0.05];
        assert_eq!(cross_correlation_lag(&a, &a).unwrap(), 0);
    }

    #[test]
    fn delayed_copy_gives_negative_lag() {
        let a: Vec<f64> = (0..32).map(|i| (-(i as f64) / 3.0).exp()).collect();
        let mut b = vec![0.0; 32];
        b[7..].copy_from_slice(&a[..25]);
        assert_eq!(cross_correlation_lag(&a, &b).unwrap(), -7);
        assert_eq!(cross_correlation_lag(&b, &a).unwrap(), 7);
    }

    #[test]
    fn zero_input_rejected() {
        assert!(matches!(
            cross_correlation_lag(&[0.0; 4], &[1.0; 4]),
            Err(Error::ZeroSignal)
        ));
        assert!(matches!(estimate_onset_delay(&[0.0; 8]), Err(Error::ZeroSignal)));
    }

    #[test]
    fn onset_of_impulses() {
        assert_eq!(estimate_onset_delay(&impulse(200, 0)).unwrap(), 0);
        assert_eq!(estimate_onset_delay(&impulse(200, 37)).unwrap(), 37);
    }

    #[test]
    fn insert_delay_basics() {
        let h = impulse(8, 0);
        assert_eq!(insert_delay(&h, 0.0, 8, DelayMode::Rounded).unwrap(), h);
        assert_eq!(
            insert_delay(&h, 5.0, 16, DelayMode::Rounded).unwrap(),
            impulse(16, 5)
        );
        assert_eq!(
            insert_delay(&h, 4.6, 16, DelayMode::Rounded).unwrap(),
            impulse(16, 5)
        );
        assert_eq!(
            insert_delay(&h, 5.0, 16, DelayMode::Fractional).unwrap(),
            impulse(16, 5)
        );
        // truncation
        assert_eq!(insert_delay(&h, 9.0, 8, DelayMode::Rounded).unwrap(), vec![0.0; 8]);
        assert!(matches!(
            insert_delay(&h, -1.0, 8, DelayMode::Rounded),
            Err(Error::NegativeDelay(_))
        ));
        assert!(insert_delay(&h, f64::NAN, 8, DelayMode::Rounded).is_err());
    }

    #[test]
    fn half_sample_delay_is_symmetric_sinc() {
        let out = insert_delay(&impulse(64, 0), 20.5, 64, DelayMode::Fractional).unwrap();
        assert!((out[20] - out[21]).abs() < 1e-15);
        assert!((out[20] - 2.0 / PI).abs() < 1e-12);
    }
}
