//! Simulation harness, file formats and the `ark` command line.

pub mod cli;
pub mod config;
pub mod io;
pub mod sim;

pub use config::{CovarianceSpec, FeatureModel, KfwerConfig, Setting, SimConfig, WorkingModelKind, PRESETS};
pub use sim::{run_simulation, ReplicationRow, SimReport, Simulation};
