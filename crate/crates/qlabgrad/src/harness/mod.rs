//! Config-file driven experiment runner: problems, schemes, seeds, trajectory
//! CSVs, comparison reports, and the convergence-theory suite. The `qlab`
//! binary is a thin wrapper over this module.

mod config;
mod csv;
mod run;
mod theory_suite;

pub use config::{
    EntryKind, ExperimentConfig, GradCheckConfig, InitSpec, KvMap, ProblemSpec, SchemeEntry,
    TheorySuiteConfig,
};
pub use csv::{fmt_g17, write_report_csv, write_trajectory_csv, REPORT_HEADER, TRAJECTORY_HEADER};
pub use run::{
    run_experiment, run_scheme, trajectory_file_name, ExperimentOutcome, ReportRow, SchemeRun,
};
pub use theory_suite::{run_theory_suite, CheckStats, TheorySuiteReport};
