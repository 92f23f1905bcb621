//! Run configuration, seeded train/evaluate loop, metrics logging and the
//! command-line entry point.

pub mod cli;
mod config;
mod metrics;
mod train;

pub use config::TrainConfig;
pub use metrics::{mean_and_stderr, read_metrics, CsvLog, Mean, MetricsRow, TimingRow, METRICS_FILE, TIMING_FILE};
pub use train::{evaluate, train, train_until, EvalResult, RngStreams, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE};
