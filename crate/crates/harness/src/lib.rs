//! Experiment harness for `oscnet`: configuration files, single runs,
//! deterministic parameter sweeps and output emission.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{parse_config, ConfigError, ExperimentConfig, Mode};
pub use error::HarnessError;
pub use run::{run_once, Metrics, RunOutput};
pub use sweep::{point_seed, run_sweep, SweepResult};
