//! Monte Carlo studies for penalized exponentially tilted estimation: data
//! generators, a deterministic parallel replication engine and summary metrics.

pub mod config;
pub mod error;
pub mod generators;
pub mod metrics;
pub mod rng;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, Method};
pub use error::{Result, SimError};
pub use generators::{gen_exp1, gen_exp2, gen_exp3, matrix_sqrt, Regime};
pub use metrics::{MethodMetrics, MetricsTable, Outcome};
pub use runner::{coverage_study, run_experiment, run_experiment_with_threads, CoverageTable};
