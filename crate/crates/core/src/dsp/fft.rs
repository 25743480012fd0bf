//! Iterative radix-2 FFT with bit-reversal permutation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_size(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

pub(crate) fn check_signal(signal: &[f64]) -> Result<()> {
    if signal.is_empty() {
        return Err(Error::Empty("signal".into()));
    }
    if let Some(index) = signal.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "signal".into(),
            index,
        });
    }
    Ok(())
}

fn bit_reverse(buf: &mut [Complex64]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place forward transform, X[k] = Σ x[n]·e^{-2πikn/N}. Length must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    let n = buf.len();
    check_size(n)?;
    bit_reverse(buf);
    // twiddles computed directly rather than by recurrence
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let u = buf[start + k];
                let t = w * buf[start + k + half];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        size *= 2;
    }
    Ok(())
}

/// Forward transform of a real signal zero-padded to `n_fft`.
pub fn fft(signal: &[f64], n_fft: usize) -> Result<Vec<Complex64>> {
    check_signal(signal)?;
    check_size(n_fft)?;
    if n_fft < signal.len() {
        return Err(Error::FftTooShort {
            n_fft,
            len: signal.len(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, &x) in buf.iter_mut().zip(signal) {
        b.re = x;
    }
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// Forward transform of a complex sequence.
pub fn fft_complex(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// Inverse transform with 1/N scaling.
pub fn ifft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = spectrum.len();
    let mut buf: Vec<Complex64> = spectrum.iter().map(|c| c.conj()).collect();
    fft_in_place(&mut buf)?;
    let scale = 1.0 / n as f64;
    Ok(buf.into_iter().map(|c| c.conj() * scale).collect())
}

/// Real part of the inverse transform.
pub fn ifft_real(spectrum: &[Complex64]) -> Result<Vec<f64>> {
    Ok(ifft(spectrum)?.into_iter().map(|c| c.re).collect())
}

/// Magnitudes of the first N/2 bins.
pub fn magnitude_half(spectrum: &[Complex64]) -> Result<Vec<f64>> {
    if spectrum.is_empty() || !spectrum.len().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "magnitude_half needs an even, non-empty spectrum, got length {}",
            spectrum.len()
        )));
    }
    Ok(spectrum[..spectrum.len() / 2]
        .iter()
        .map(|c| c.norm())
        .collect())
}

/// Half-spectrum magnitude of a real signal, `n_fft / 2` bins.
pub fn magnitude_spectrum(signal: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    magnitude_half(&fft(signal, n_fft)?)
}
