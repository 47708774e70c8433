//! Library side of the `hypermult` command: sweep configuration, run
//! orchestration and the reproducibility manifest.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::SweepConfig;
pub use manifest::Manifest;
pub use run::{
    cmd_import, cmd_joint, cmd_marginal, cmd_sweep, execute, Plan, RunOptions, RunResult,
};
