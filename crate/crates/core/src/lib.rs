//! Diabetic-retinopathy grading toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dataset`]: manifest ingestion, label regrouping, seeded splits and
//!   class balancing by oversampling
//! - [`imageops`]: fundus preprocessing (border crop, resize, Gaussian blend,
//!   circle crop)
//! - [`augment`]: rotation, reflection and noise for oversampled records
//! - [`loader`]: turns records into model-ready pixels
//! - [`modelkit`]: backbone + dense head classifiers with manual backprop
//! - [`trainer`]: optimizers, early stopping and the epoch loop
//! - [`metrics`]: decision rules, confusion matrices, ROC/AUC and reports
//! - [`cascade`]: composition of binary classifiers into a 5-grade predictor
//! - [`cli`]: configuration, run artifacts and subcommand implementations

pub mod augment;
pub mod cascade;
pub mod cli;
pub mod dataset;
pub mod imageops;
pub mod loader;
pub mod metrics;
pub mod modelkit;
pub mod trainer;

pub use dataset::{DiagnosisGrade, ImageRecord, Manifest, TaskKind};
pub use imageops::ImageBuffer;
