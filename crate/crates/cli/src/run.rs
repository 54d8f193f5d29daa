//! Task execution.

use std::time::Instant;

use forlion_core::{
    design_log_det, ew_forlion_optimize, forlion_optimize, relative_efficiency, round_design, ApproximateDesign, Error,
    ForLionResult,
};
use thiserror::Error as ThisError;

use crate::config::{Diagnostic, Prepared, Task, SCHEMA_VERSION};
use crate::report::{ExactReport, Provenance, RunReport};

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error("invalid configuration")]
    Validation(Vec<Diagnostic>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) | RunError::Io(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

fn lift(key: &str) -> impl Fn(Error) -> RunError + '_ {
    move |e| {
        if e.is_numerical() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Validation(vec![Diagnostic::new(key, e.to_string())])
        }
    }
}

fn optimize(prep: &Prepared) -> Result<ForLionResult, RunError> {
    let mut cfg = prep.config.algorithm.clone();
    cfg.seed = prep.config.seed;
    if prep.provider.is_expected() {
        ew_forlion_optimize(&prep.space, &prep.provider, &cfg, prep.glm_adapted)
    } else {
        forlion_optimize(&prep.space, &prep.provider, &cfg, prep.glm_adapted)
    }
    .map_err(lift("algorithm"))
}

fn fill_design(report: &mut RunReport, r: ForLionResult) {
    report.m = Some(r.m);
    report.det = Some(r.det);
    report.log_det = Some(r.log_det);
    report.convergence = Some(r.convergence);
    report.min_diff = r.min_diff;
    report.x_close = r.x_close;
    report.itmax = Some(r.itmax);
    report.max_sensitivity = Some(r.max_sensitivity);
    report.design = Some(r.design);
}

/// Runs the prepared task. The returned report carries `budget_exceeded`;
/// callers decide how to surface it.
pub fn execute(prep: &Prepared, config_sha256: String) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        task: prep.task,
        factor_names: prep.space.names().iter().map(|s| s.to_string()).collect(),
        design: None,
        m: None,
        det: None,
        log_det: None,
        convergence: None,
        min_diff: None,
        x_close: None,
        itmax: None,
        max_sensitivity: None,
        exact: None,
        rel_efficiency: None,
        info: None,
        budget_exceeded: false,
        warnings: Vec::new(),
        provenance: Provenance {
            config_sha256,
            seed: prep.config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
        },
    };
    match prep.task {
        Task::Design | Task::EwDesign => fill_design(&mut report, optimize(prep)?),
        Task::Round => {
            let xi: ApproximateDesign = match &prep.design {
                Some(d) => {
                    let ld = design_log_det(&prep.provider, d).map_err(lift("design"))?;
                    report.m = Some(d.len());
                    report.log_det = Some(ld);
                    report.det = Some(ld.exp());
                    report.design = Some(d.clone());
                    d.clone()
                }
                None => {
                    fill_design(&mut report, optimize(prep)?);
                    report.design.clone().expect("just filled")
                }
            };
            let cfg = prep.rounding.as_ref().expect("validated");
            let r = round_design(&prep.provider, &prep.space, &xi, cfg).map_err(lift("rounding"))?;
            report.exact = Some(ExactReport {
                points: r.exact.points,
                ni: r.exact.counts,
                n: cfg.n,
                allocation: cfg.allocation,
                det: r.log_det.exp(),
                log_det: r.log_det,
                rel_efficiency: r.rel_efficiency,
            });
        }
        Task::Efficiency => {
            let (a, b) = (
                prep.design.as_ref().expect("validated"),
                prep.compare_design.as_ref().expect("validated"),
            );
            report.rel_efficiency = Some(relative_efficiency(&prep.provider, a, b).map_err(lift("design"))?);
        }
        Task::Info => {
            let x = prep.config.point.as_ref().expect("validated");
            let f = prep.provider.info_matrix(x).map_err(lift("point"))?;
            report.info = Some((0..f.nrows()).map(|i| f.row(i).iter().copied().collect()).collect());
        }
    }
    if prep.provider.budget_exceeded() {
        report.budget_exceeded = true;
        report.warnings.push(
            "cubature evaluation budget exhausted before the tolerance was met; \
             raise parameters.prior.cubature_max_evals or cubature_reltol"
                .into(),
        );
    }
    if report.convergence == Some(false) {
        report
            .warnings
            .push("stopped at algorithm.maxit before the sensitivity bound was met".into());
    }
    report.provenance.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
