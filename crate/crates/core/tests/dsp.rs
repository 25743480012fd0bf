#![allow(clippy::needless_range_loop)]

use hrtf_core::dsp::{
    cross_correlation_lag, estimate_onset_delay, fft, hilbert_min_phase, ifft_real, insert_delay,
    magnitude_half, magnitude_spectrum, min_phase_spectrum, minimum_phase_reconstruct,
    imaginary_residue, DelayMode,
};
use hrtf_core::testkit::min_phase_burst;
use hrtf_core::dsp::Complex64;
use hrtf_core::testkit::oracle::{partial_energy, polynomial_from_zeros, two_tap_phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_min_phase_contract(h: &[f64], n_fft: usize) {
    let hmp = minimum_phase_reconstruct(h, n_fft).unwrap();
    let a = magnitude_spectrum(h, n_fft).unwrap();
    let b = magnitude_spectrum(&hmp, n_fft).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-6 * x.max(1e-300), "{x} vs {y}");
    }
    let eh = partial_energy(h);
    let emp = partial_energy(&hmp);
    for k in 0..n_fft {
        let ek = eh.get(k).copied().unwrap_or(*eh.last().unwrap());
        assert!(emp[k] >= ek - 1e-9, "K={k}: {} < {}", emp[k], ek);
    }
}

#[test]
fn maximum_phase_pair_reflects_to_minimum_phase() {
    for n_fft in [64, 128, 256] {
        let hmp = minimum_phase_reconstruct(&[1.0, 2.0], n_fft).unwrap();
        assert!((hmp[0] - 2.0).abs() < 1e-8, "{}", hmp[0]);
        assert!((hmp[1] - 1.0).abs() < 1e-8);
        assert!(hmp[2..].iter().all(|v| v.abs() < 1e-8));
        assert_min_phase_contract(&[1.0, 2.0], n_fft);
    }
}

/// Unit-energy real FIR with zeros drawn both inside and outside the unit
/// circle, kept away from it so the cepstrum does not alias at n_fft = 256.
fn mixed_phase_fir(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut zeros = Vec::new();
    for _ in 0..6 {
        let r = if rng.random_bool(0.5) {
            rng.random_range(0.2..0.8)
        } else {
            rng.random_range(1.25..4.0)
        };
        let z = Complex64::from_polar(r, rng.random_range(0.1..3.0));
        zeros.push(z);
        zeros.push(z.conj());
    }
    let h = polynomial_from_zeros(&zeros);
    let e = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter().map(|v| v / e).collect()
}

#[test]
fn contract_holds_for_testkit_signals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let h = mixed_phase_fir(&mut rng);
        assert_min_phase_contract(&h, 256);
        let delayed = insert_delay(&h, rng.random_range(0..60) as f64, 200, DelayMode::Rounded).unwrap();
        assert_min_phase_contract(&delayed, 256);
    }
    for seed in 0..10 {
        let burst = min_phase_burst(seed, 256).unwrap();
        let delayed = insert_delay(&burst, 17.0, 200, DelayMode::Rounded).unwrap();
        assert_min_phase_contract(&delayed, 256);
    }
}

#[test]
fn magnitude_is_preserved_even_for_white_noise() {
    // white noise has near-zeros on the unit circle; the cepstrum aliases, so
    // only the magnitude half of the contract is expected to hold here
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let h: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hmp = minimum_phase_reconstruct(&h, 256).unwrap();
        let a = magnitude_spectrum(&h, 256).unwrap();
        let b = magnitude_spectrum(&hmp, 256).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6 * x);
        }
    }
}

#[test]
fn reconstruction_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let h: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let once = minimum_phase_reconstruct(&h, 256).unwrap();
        let twice = minimum_phase_reconstruct(&once, 256).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn impulse_and_pure_delay() {
    let mut imp = vec![0.0; 64];
    imp[0] = 1.0;
    let out = minimum_phase_reconstruct(&imp, 64).unwrap();
    for (a, b) in out.iter().zip(&imp) {
        assert!((a - b).abs() < 1e-9);
    }
    let out = minimum_phase_reconstruct(&[0.0, 0.0, 1.0, 0.0], 4).unwrap();
    for (a, b) in out.iter().zip(&[1.0, 0.0, 0.0, 0.0]) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn hilbert_phase_of_two_tap_filter_matches_closed_form() {
    let n = 256;
    let mag = magnitude_half(&fft(&[2.0, 1.0], n).unwrap()).unwrap();
    let phase = hilbert_min_phase(&mag).unwrap();
    assert_eq!(phase.len(), n);
    for k in 0..n / 2 {
        let expected = two_tap_phase(2.0, 1.0, k, n);
        assert!((phase[k] - expected).abs() < 1e-6, "bin {k}");
    }
    let reflected = magnitude_half(&fft(&[1.0, 2.0], n).unwrap()).unwrap();
    for (a, b) in hilbert_min_phase(&reflected).unwrap().iter().zip(&phase) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn flat_magnitude_has_zero_phase() {
    let phase = hilbert_min_phase(&[1.0; 128]).unwrap();
    assert!(phase.iter().all(|p| p.abs() < 1e-15));
}

#[test]
fn min_phase_spectrum_inverts_to_a_real_signal() {
    let burst = min_phase_burst(3, 256).unwrap();
    let mag = magnitude_half(&fft(&burst, 256).unwrap()).unwrap();
    let spectrum = min_phase_spectrum(&mag).unwrap();
    assert!(imaginary_residue(&spectrum).unwrap() < 1e-9);
    let back = ifft_real(&spectrum).unwrap();
    let back_mag = magnitude_half(&fft(&back, 256).unwrap()).unwrap();
    for (a, b) in mag.iter().zip(&back_mag) {
        assert!((a - b).abs() / a < 1e-9);
    }
}

#[test]
fn fft_round_trip_and_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = fft(&x, 256).unwrap();
    let back = ifft_real(&spec).unwrap();
    for n in 0..256 {
        let orig = x.get(n).copied().unwrap_or(0.0);
        assert!((back[n] - orig).abs() < 1e-10);
    }
    let time: f64 = x.iter().map(|v| v * v).sum();
    let freq: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / 256.0;
    assert!((time - freq).abs() / time < 1e-9);
}

#[test]
fn burst_onset_is_recovered_exactly() {
    let burst = min_phase_burst(21, 256).unwrap();
    let shifted = insert_delay(&burst, 12.0, 200, DelayMode::Rounded).unwrap();
    assert_eq!(estimate_onset_delay(&shifted).unwrap(), 12);
    for d in [0usize, 3, 25, 49, 60] {
        let h = insert_delay(&burst, d as f64, 200, DelayMode::Rounded).unwrap();
        assert_eq!(estimate_onset_delay(&h).unwrap(), d);
    }
}

#[test]
fn known_offset_between_two_bursts() {
    let a = insert_delay(&min_phase_burst(5, 256).unwrap(), 20.0, 200, DelayMode::Rounded).unwrap();
    let b = insert_delay(&min_phase_burst(6, 256).unwrap(), 31.0, 200, DelayMode::Rounded).unwrap();
    assert_eq!(cross_correlation_lag(&a, &b).unwrap(), -11);
    assert_eq!(cross_correlation_lag(&b, &a).unwrap(), 11);
}

#[test]
fn fractional_delay_keeps_energy_near_the_requested_position() {
    let burst = min_phase_burst(8, 256).unwrap();
    let whole = insert_delay(&burst, 30.0, 256, DelayMode::Fractional).unwrap();
    let rounded = insert_delay(&burst, 30.0, 256, DelayMode::Rounded).unwrap();
    assert_eq!(whole, rounded);
    let half = insert_delay(&burst, 30.5, 256, DelayMode::Fractional).unwrap();
    let centroid = |x: &[f64]| {
        let e: f64 = x.iter().map(|v| v * v).sum();
        x.iter().enumerate().map(|(n, v)| n as f64 * v * v).sum::<f64>() / e
    };
    let shift = centroid(&half) - centroid(&whole);
    assert!((shift - 0.5).abs() < 0.05, "{shift}");
}
