//! Experiment orchestration: configuration, Monte Carlo runners, the
//! validation suite and table output.

pub mod config;
pub mod experiment;
pub mod table;
pub mod validate;

pub use config::{load_config, load_config_with, parse_config, ExperimentKind, ExperimentSpec, Profile, Scheme};
pub use experiment::{run_distance_sweep, run_roc, run_scheme, run_solve, RunOutcome};
pub use table::{emit_table, read_table, ExperimentTable, Format, Row};
pub use validate::run_validate;

/// Dispatches on `spec.experiment`.
pub fn run(spec: &ExperimentSpec) -> crate::Result<RunOutcome> {
    match spec.experiment {
        ExperimentKind::Roc => run_roc(spec),
        ExperimentKind::Sweep => run_distance_sweep(spec),
        ExperimentKind::Solve => run_solve(spec),
        ExperimentKind::Validate => run_validate(spec),
    }
}
