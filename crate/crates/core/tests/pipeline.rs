use std::sync::OnceLock;

use hrtf_core::dataset::{Direction, EARS};
use hrtf_core::dsp::{magnitude_spectrum, DelayMode};
use hrtf_core::features::{self, FeatureConfig};
use hrtf_core::pca::variance_report;
use hrtf_core::pipeline::{
    self, error_percent, magnitude_matrix, synthesize_from_weights, EvaluationMode,
    EvaluationOptions, SynthesisOptions, TrainConfig,
};
use hrtf_core::testkit::{synth_generate, SynthConfig, SyntheticWorld, HEAD_WIDTH_PER_ITD_SAMPLE};
use hrtf_core::{Error, Stage, TrainedModel};

fn world() -> &'static (SyntheticWorld, TrainedModel) {
    static W: OnceLock<(SyntheticWorld, TrainedModel)> = OnceLock::new();
    W.get_or_init(|| {
        let w = synth_generate(&SynthConfig::default()).unwrap();
        let m = pipeline::train(&w.archive, &w.anthropometry, &TrainConfig::default()).unwrap();
        (w, m)
    })
}

#[test]
fn archive_magnitudes_match_planted_spectra() {
    let (w, _) = world();
    let mut worst = 0.0_f64;
    for s in 0..w.config.subjects {
        for ear in 0..EARS {
            for d in 0..w.config.directions.len() {
                let mag = magnitude_spectrum(w.archive.hrir(s, ear, d), 256).unwrap();
                for (a, b) in mag.iter().zip(w.magnitude(s, ear, d)) {
                    worst = worst.max((a - b).abs() / b);
                }
            }
        }
    }
    assert!(worst < 1e-9, "worst relative deviation {worst:e}");
}

#[test]
fn trained_model_has_expected_dimensions() {
    let (_, m) = world();
    assert_eq!(m.pca.basis.rows(), 128);
    assert_eq!(m.pca.basis.cols(), 10);
    assert_eq!(m.pca.weights.cols(), 37 * 2 * 50);
    assert_eq!(m.regression.coefficients.len() / 9, 2 * 50 * 10);
    let report = variance_report(&m.pca.eigenvalues).unwrap();
    assert!(report[9].cumulative > 99.999_999, "{}", report[9].cumulative);
}

#[test]
fn pca_reconstruction_of_rank_ten_world_is_exact() {
    let (w, m) = world();
    let h = magnitude_matrix(&w.archive, 256).unwrap();
    let mut worst = 0.0_f64;
    for c in 0..h.cols() {
        let rec = m.pca.reconstruct_column(c).unwrap();
        worst = worst.max(error_percent(&h.column(c), &rec.magnitude).unwrap());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn mean_delays_average_planted_onsets() {
    let (w, m) = world();
    let n_dirs = w.config.directions.len();
    for ear in 0..EARS {
        for d in 0..n_dirs {
            let expected = (0..w.config.subjects)
                .map(|s| w.onsets[(s * EARS + ear) * n_dirs + d] as f64)
                .sum::<f64>()
                / w.config.subjects as f64;
            assert!((m.mean_delay(ear, d) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn individualized_training_subject_matches_original() {
    let (w, m) = world();
    let s = 5;
    let feats = w.anthropometry.features(&w.archive.subjects()[s], &m.feature_indices).unwrap();
    let set = pipeline::individualize(m, &feats, &SynthesisOptions::default()).unwrap();
    for ear in 0..EARS {
        for d in 0..w.config.directions.len() {
            let cell = set.cell(ear, d);
            let truth = w.magnitude(s, ear, d);
            for (a, b) in cell.magnitude_model.iter().zip(truth) {
                assert!((a - b).abs() / b < 1e-6);
            }
            assert!(error_percent(truth, &cell.magnitude_model).unwrap() < 1e-4);
            assert_eq!(cell.hrir.len(), 256);
        }
    }
    let again = pipeline::individualize(m, &feats, &SynthesisOptions::default()).unwrap();
    assert_eq!(set, again);
}

#[test]
fn minimum_phase_stage_preserves_model_magnitude() {
    let (w, m) = world();
    let feats = w.anthropometry.features("010", &m.feature_indices).unwrap();
    let set = pipeline::individualize(m, &feats, &SynthesisOptions::default()).unwrap();
    for cell in &set.cells {
        let mag = magnitude_spectrum(&cell.minimum_phase, 256).unwrap();
        let max = cell.magnitude_model.iter().copied().fold(0.0, f64::max);
        for (a, b) in mag.iter().zip(&cell.magnitude_model) {
            assert!((a - b).abs() / max < 1e-5);
        }
    }
}

#[test]
fn delay_insertion_leaves_magnitude_unchanged() {
    let (w, m) = world();
    let feats = w.anthropometry.features("001", &m.feature_indices).unwrap();
    let long = SynthesisOptions {
        delay_mode: DelayMode::Rounded,
        out_length: 512,
    };
    let set = pipeline::individualize(m, &feats, &long).unwrap();
    for cell in &set.cells {
        let before = magnitude_spectrum(&cell.minimum_phase, 512).unwrap();
        let after = magnitude_spectrum(&cell.hrir, 512).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }
        let e0 = error_percent(&before, &before).unwrap();
        let e1 = error_percent(&before, &after).unwrap();
        assert!((e0 - e1).abs() < 1e-9);
    }
}

#[test]
fn flat_model_synthesizes_delayed_impulses() {
    let (_, m) = world();
    let mut flat = m.clone();
    flat.pca.mean = vec![0.5; 128];
    flat.pca.basis = hrtf_core::linalg::Matrix::zeros(128, flat.pca.q());
    let weights = vec![0.3; EARS * flat.directions.len() * flat.pca.q()];
    let set = synthesize_from_weights(&flat, &weights, &SynthesisOptions::default()).unwrap();
    for (i, cell) in set.cells.iter().enumerate() {
        let at = flat.mean_delays[i].round() as usize;
        for (n, v) in cell.hrir.iter().enumerate() {
            let expected = if n == at { 0.5 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "cell {i} sample {n}: {v}");
        }
    }
}

#[test]
fn evaluation_of_exact_world() {
    let (w, m) = world();
    let ind = pipeline::evaluate(m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Individualized)).unwrap();
    assert!(ind.overall_mean < 0.1, "{}", ind.overall_mean);
    assert_eq!(ind.cells.len(), 37 * 2 * 50);
    let pca = pipeline::evaluate(m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Pca)).unwrap();
    assert!(pca.overall_mean < 1e-6);

    // aggregates agree with recomputation from cells
    let mean = |f: &dyn Fn(&pipeline::CellError) -> bool| {
        let v: Vec<f64> = ind.cells.iter().filter(|c| f(c)).map(|c| c.error_percent).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((ind.overall_mean - mean(&|_| true)).abs() < 1e-12);
    assert!((ind.ear_means[0] - mean(&|c| c.ear == 0)).abs() < 1e-12);
    assert!((ind.ear_means[1] - mean(&|c| c.ear == 1)).abs() < 1e-12);
    assert!(ind.cells.iter().all(|c| c.error_percent >= 0.0));
}

#[test]
fn pca_mode_equals_reconstruct_then_error() {
    let (w, m) = world();
    let report = pipeline::evaluate(m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Pca)).unwrap();
    let h = magnitude_matrix(&w.archive, 256).unwrap();
    for c in &report.cells {
        let s = w.archive.subject_index(&c.subject).unwrap();
        let col = m.pca.layout.column(s, c.ear, c.direction);
        let rec = m.pca.reconstruct_column(col).unwrap();
        let e = error_percent(&h.column(col), &rec.magnitude).unwrap();
        assert!((e - c.error_percent).abs() < 1e-9);
    }
}

#[test]
fn pca_error_is_monotone_in_q_on_noisy_world() {
    let w = synth_generate(&SynthConfig {
        subjects: 12,
        q: 6,
        noise_level: 0.5,
        directions: Direction::cipic_horizontal()[..6].to_vec(),
        ..SynthConfig::default()
    })
    .unwrap();
    let mut last = f64::INFINITY;
    for q in 1..=8 {
        let config = TrainConfig { q, ..TrainConfig::default() };
        let m = pipeline::train(&w.archive, &w.anthropometry, &config).unwrap();
        let e = pipeline::evaluate(&m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Pca))
            .unwrap()
            .overall_mean;
        assert!(e <= last + 1e-12, "q={q}: {e} > {last}");
        last = e;
    }
}

#[test]
fn holdout_runs_on_a_small_world() {
    let w = synth_generate(&SynthConfig {
        subjects: 12,
        q: 2,
        directions: vec![Direction::front(-80.0), Direction::front(0.0)],
        ..SynthConfig::default()
    })
    .unwrap();
    let m = pipeline::train(&w.archive, &w.anthropometry, &TrainConfig { q: 2, ..TrainConfig::default() }).unwrap();
    let r = pipeline::evaluate(&m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Holdout)).unwrap();
    assert_eq!(r.cells.len(), 12 * 2 * 2);
    // an exact-linear world generalizes, so holding a subject out costs almost nothing
    assert!(r.overall_mean < 0.1, "{}", r.overall_mean);
}

#[test]
fn smallest_viable_world_runs_end_to_end() {
    let w = synth_generate(&SynthConfig {
        subjects: 10,
        q: 1,
        directions: vec![Direction::front(0.0)],
        ..SynthConfig::default()
    })
    .unwrap();
    let m = pipeline::train(&w.archive, &w.anthropometry, &TrainConfig { q: 1, ..TrainConfig::default() }).unwrap();
    let r = pipeline::evaluate(&m, &w.archive, &w.anthropometry, &EvaluationOptions::new(EvaluationMode::Individualized)).unwrap();
    assert!(r.overall_mean < 0.1);
}

#[test]
fn too_few_subjects_is_a_rank_error() {
    let (w, _) = world();
    let one = w.archive.select_subjects(&[0]).unwrap();
    let err = pipeline::train(&one, &w.anthropometry, &TrainConfig::default()).unwrap_err();
    match err {
        Error::InStage { stage: Stage::Regression, source } => {
            assert!(matches!(*source, Error::InsufficientSubjects { required: 10, found: 1 }))
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn missing_feature_names_subject_and_column() {
    let (w, _) = world();
    let mut rows = w.anthropometry.rows().to_vec();
    rows[3][21] = f64::NAN;
    let table = hrtf_core::AnthropometryTable::new(w.anthropometry.subjects().to_vec(), rows).unwrap();
    let err = pipeline::train(&w.archive, &table, &TrainConfig::default()).unwrap_err();
    match err.root() {
        Error::MissingFeature { subject, feature } => {
            assert_eq!(subject, "004");
            assert_eq!(feature, "d5");
        }
        e => panic!("unexpected {e}"),
    }
    assert!(err.is_input_error());
}

#[test]
fn itd_max_recovers_planted_delay_and_tracks_head_width() {
    let (w, _) = world();
    let summaries = features::summarize(&w.archive, &FeatureConfig::default()).unwrap();
    for (s, summary) in summaries.iter().enumerate() {
        let planted = w.itd_max_samples[s] as f64 / 44100.0;
        assert!((summary.itd_max_s - planted).abs() < 0.5 / 44100.0, "subject {s}");
    }
    let report = features::correlation_report(&w.archive, &w.anthropometry, &FeatureConfig::default()).unwrap();
    let rho = report.row("x1").unwrap().itd_max.value().unwrap();
    assert!((rho - 1.0).abs() < 1e-12, "{rho}");
    assert!(report.row("x1").unwrap().selected);
    assert!(!report.row("x2").unwrap().selected);
    // x1 is built from the ITD so the ratio is the fixed head-width constant
    let x1 = w.anthropometry.rows()[0][0];
    assert!((x1 / w.itd_max_samples[0] as f64 - HEAD_WIDTH_PER_ITD_SAMPLE).abs() < 1e-12);
}

#[test]
fn itd_max_doubles_with_planted_delays() {
    use hrtf_core::dsp::insert_delay;
    use hrtf_core::HrirArchive;
    let (w, _) = world();
    let n_dirs = w.config.directions.len();
    let scaled = |factor: usize| {
        let mut data = Vec::new();
        for ear in 0..EARS {
            for d in &w.config.directions {
                let itd = hrtf_core::testkit::planted_itd(24, d.azimuth_deg) * factor as i64;
                let extra = if ear == 0 { itd.max(0) } else { (-itd).max(0) };
                let mp = hrtf_core::testkit::min_phase_burst(7, 256).unwrap();
                data.extend(insert_delay(&mp, 10.0 + extra as f64, 200, DelayMode::Rounded).unwrap());
            }
        }
        let a = HrirArchive::new(44100.0, 200, vec!["a".into()], w.config.directions.clone(), data).unwrap();
        features::itd_max(&a, 0).unwrap()
    };
    assert_eq!(n_dirs, 50);
    assert!((scaled(1) - 24.0 / 44100.0).abs() < 1e-15);
    assert!((scaled(2) - 2.0 * scaled(1)).abs() < 1e-15);
}

#[test]
fn constant_measurement_column_is_reported_not_fatal() {
    let (w, _) = world();
    let mut rows = w.anthropometry.rows().to_vec();
    for r in &mut rows {
        r[13] = 170.0;
    }
    let table = hrtf_core::AnthropometryTable::new(w.anthropometry.subjects().to_vec(), rows).unwrap();
    let report = features::correlation_report(&w.archive, &table, &FeatureConfig::default()).unwrap();
    assert_eq!(report.row("x14").unwrap().itd_max, features::Correlation::ZeroVariance);
    assert!(report.to_csv().contains("x14,cm,false,zero-variance"));
}
