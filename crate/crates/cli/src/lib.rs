//! Harness library behind the `emp` binary: model and output file handling,
//! the randomized experiment protocol, and the runtime verification battery.
//! Split from the binary so integration suites can drive everything
//! in-process.

pub mod experiment;
pub mod files;
pub mod verify;

pub use experiment::{
    instance_seed, run_experiment, run_experiment_to_dir, ExperimentSpec, ExperimentSummary,
    Family, GroupSummary, RunRecord,
};
pub use files::{atomic_write, load_model};
pub use verify::{run_verify, VerifyOptions, VerifyReport};
