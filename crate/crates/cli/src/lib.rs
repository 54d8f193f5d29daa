//! Configuration, execution and reporting for the `forlion` command.

pub mod config;
pub mod report;
pub mod run;

use std::io::Write;
use std::path::Path;

pub use config::{prepare, validate, Diagnostic, RawConfig, RunConfig, Task};
pub use report::{render, RunReport};
pub use run::{execute, RunError};

/// Loads `config_path`, applies the dotted overrides and the seed, and runs
/// `task` (or the config's own task). Returns the report and the exit code:
/// 0 on success, 3 when the run finished with an exhausted cubature budget.
pub fn run_config(
    config_path: &Path,
    task: Option<Task>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<(RunReport, i32), RunError> {
    let mut raw = RawConfig::from_path(config_path).map_err(|d| RunError::Validation(vec![d]))?;
    raw.apply(overrides).map_err(|d| RunError::Validation(vec![d]))?;
    if let Some(seed) = seed {
        raw.apply(&[format!("seed={seed}")]).map_err(|d| RunError::Validation(vec![d]))?;
    }
    let prep = prepare(&raw, task).map_err(RunError::Validation)?;
    let report = execute(&prep, raw.sha256())?;
    let code = if report.budget_exceeded { 3 } else { 0 };
    Ok((report, code))
}

/// Writes `report` as JSON to `path`.
pub fn write_report(report: &RunReport, path: &Path) -> Result<(), RunError> {
    let mut f = std::fs::File::create(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(report.to_json().as_bytes())
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}
