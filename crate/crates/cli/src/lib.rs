//! Experiment driver for the AoI scheduler: grid configuration and the
//! solve, verify, simulate and sweep pipelines.
//!
//! Every artifact starts with a schema version (a `# schema_version=N`
//! comment line for CSV, a `schema_version` field for JSON). Reruns with the
//! same configuration and seed write byte-identical files.

pub mod config;
pub mod pipelines;

pub use config::{ExperimentSpec, Pipeline};
pub use pipelines::{run, run_simulate, run_solve, run_sweep, run_verify, SCHEMA_VERSION};
