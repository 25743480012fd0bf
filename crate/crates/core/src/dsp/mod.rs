//! Signal-processing kernels: FFT, magnitude spectra, real cepstrum,
//! minimum-phase reconstruction, and delay estimation/insertion.
//!
//! Everything here is a pure function of its inputs.

mod delay;
mod fft;
mod minphase;

pub use num_complex::Complex64;

pub use delay::{
    cross_correlation_lag, estimate_onset_delay, insert_delay, DelayMode, SINC_HALF_WIDTH,
};
pub use fft::{fft, fft_complex, fft_in_place, ifft, ifft_real, magnitude_half, magnitude_spectrum};
pub use minphase::{
    cepstral_window, hilbert_min_phase, imaginary_residue, min_phase_spectrum, minimum_phase_from_magnitude,
    minimum_phase_reconstruct, mirror_half, real_cepstrum, Cepstrum, MAG_FLOOR_RATIO,
};

/// FFT size used throughout the modelling pipeline.
pub const PIPELINE_N_FFT: usize = 256;

/// Floors every bin at `MAG_FLOOR_RATIO × max`, returning the count of floored bins.
pub fn floor_magnitude(mag: &mut [f64]) -> usize {
    let max = mag.iter().copied().fold(0.0_f64, f64::max);
    let floor = if max > 0.0 { MAG_FLOOR_RATIO * max } else { MAG_FLOOR_RATIO };
    let mut n = 0;
    for m in mag.iter_mut() {
        if !(*m >= floor) {
            *m = floor;
            n += 1;
        }
    }
    n
}
