//! Experiment orchestration: configuration, the training loop, evaluation
//! and reports over run directories.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod report;
pub mod train;

pub use config::{ExperimentConfig, Mode, PolicyInit, RUN_ROOT_ENV};
pub use eval::{evaluate, pass_at_k, EvalReport};
pub use metrics::MetricRow;
pub use report::{report, Report};
pub use train::{train, train_from, TrainOutput};
