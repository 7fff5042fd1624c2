//! Experiment files, seeded runs, result files and comparisons.

pub mod run;
pub mod selftest;
pub mod spec;
pub mod summarize;

pub use run::{
    run_experiment, run_experiment_with, run_single, AggregateRow, ExperimentOutput,
    PolicySnapshot, RunOptions, RunOutcome, RunRecord, SCHEMA_VERSION, SERIES_COLUMNS,
};
pub use selftest::{run_selftest, CheckResult};
pub use spec::{
    derive_seed, load_config, parse_spec, splitmix64, ExperimentSpec, PolicyKind, SweepAxes,
    SweepPoint,
};
pub use summarize::{find_aggregates, read_aggregate, summarize, write_report, Report};
