//! Synthetic corpus, corruption grids and evaluation driver for band filtering
//! inside a frozen spectrogram transformer.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;

pub use config::{AdaptationConfig, ExperimentConfig, DEFAULT_ENDING_BLOCK, DEFAULT_RIDGE_LAMBDA};
pub use dataset::{gen_dataset, Clip, Dataset, DatasetSpec, Split};
pub use error::{HarnessError, Result};
pub use experiment::{dump_activations, train_model, Evaluator, Grid, ResultRow};
