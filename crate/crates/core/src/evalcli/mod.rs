//! Metrics, experiment configuration, corpora, evaluation tables and
//! reports; everything the command-line front end drives.

pub mod checks;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::{load_config, parse_config, Acquisition, ExperimentConfig};
pub use dataset::{load_dataset, save_dataset, simulate_dataset, Dataset};
pub use experiment::{run_experiment, score, train_objective, ExperimentOutcome};
pub use metrics::{rmse, ssim, SsimConfig};
pub use report::{evaluate, format_table, read_metrics_csv, report, Method, MetricsRow};
