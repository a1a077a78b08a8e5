//! Experiment harness: multi-step simulations with paired arms, the
//! exposure benchmark, the oracle suite, and CSV output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle_check;
pub mod pan;
pub mod stats;

pub use config::{Arm, CiMethod, ExperimentConfig, PanConfig, PanScheme};
pub use error::{HarnessError, HarnessResult};
pub use experiment::{run_arm, run_experiment, run_replication, write_csv, ExperimentReport, Replication};
pub use pan::{run_pan_benchmark, write_pan_csv, PanReport};
