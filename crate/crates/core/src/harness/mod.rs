//! Evaluation harness: datasets, metrics, run configuration and the
//! benchmark driver.

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod run;

pub use config::{Confidence, Method, RunConfig};
pub use dataset::{load_dataset, QaExample};
pub use metrics::{bleu, match_metric};
pub use run::{decode_question, run_benchmark, Decoded, PredictionRecord, RunSummary};
