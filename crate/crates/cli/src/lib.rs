//! Experiment runner behind the `gridmm` binary: sweeps, grid scaling,
//! first-run breakdowns and numeric self-checks, all emitted as CSV.

pub mod experiment;
pub mod verify;

pub use experiment::{
    firstrun_rows, run_rows, speedup_rows, write_csv, ExperimentSpec, FirstRunRow, Placement, ResultRow, SpeedupRow,
};
pub use verify::{verify, Check, VerifyOptions};
