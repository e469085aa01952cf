//! Transfer-learning pipelines for image classification datasets laid out as
//! one folder per class.
//!
//! A run reads `train/` and `val/` (or `validation/`) folders plus a test
//! folder, builds a backbone with a dense head, trains it with optional warm
//! pretraining of the head, evaluates the best checkpoint and exports the
//! results. See the `examples/` directory for each capability.

pub mod backbone;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod export;
pub mod inference;
pub mod nn;
pub mod seed;
pub mod synthetic;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{Experiment, RunOutput};
