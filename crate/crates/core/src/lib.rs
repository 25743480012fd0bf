//! HRTF individualization from anthropometry.
//!
//! Magnitude HRTFs of a measured population are decomposed with PCA, the
//! per-direction component weights are regressed onto eight body
//! measurements, and a new listener's HRIRs are rebuilt from the predicted
//! magnitudes with minimum phase plus an average onset delay.

// `!(x > 0.0)` is used on purpose so NaN is rejected too; indexed loops read
// closer to the formulas in numeric code
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod features;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod regression;
pub mod testkit;

pub use dataset::{
    load_anthropometry, load_archive, load_model, save_model, AnthropometryTable, Direction,
    Hemisphere, HrirArchive, TrainedModel,
};
pub use error::{Error, Result, Stage};
pub use pipeline::{
    evaluate, individualize, train, EvaluationMode, EvaluationOptions, EvaluationReport,
    IndividualizedHrirSet, SynthesisOptions, TrainConfig,
};
