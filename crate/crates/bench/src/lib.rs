//! Synthetic toy tasks, PFR/ORC sweeps and their summaries.

pub mod config;
pub mod seeds;
pub mod summary;
pub mod sweep;
pub mod tasks;

pub use config::{Allocation, SweepConfig};
pub use sweep::{run_orc_sweep, run_pfr_sweep, Algorithm, RunRecord, TaskContext};
pub use tasks::{gen_tasks, ToyTaskSpec};
