//! Rounding an approximate design to a grid-feasible exact design.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{merge_design, relative_efficiency, ApproximateDesign, ExactDesign, InfoProvider};
use crate::error::{Error, Result};
use crate::linalg::log_det;
use crate::model::{DesignSpace, InfoMatrix};

/// How the units left over after flooring `N * w_i` are handed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// One unit at a time to the point whose increment maximizes the log determinant.
    #[default]
    Greedy,
    /// One unit each to the points with the largest `N * w_i - n_i`.
    LargestRemainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingConfig {
    /// Merging threshold.
    pub delta2: f64,
    /// Grid step for each continuous factor, in factor order.
    pub grid: Vec<f64>,
    /// Total number of experimental units.
    pub n: u64,
    #[serde(default)]
    pub allocation: Allocation,
}

impl RoundingConfig {
    pub fn new(delta2: f64, grid: Vec<f64>, n: u64) -> Self {
        RoundingConfig {
            delta2,
            grid,
            n,
            allocation: Allocation::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingResult {
    pub exact: ExactDesign,
    pub log_det: f64,
    /// Relative efficiency of the exact design (weights `n_i / N`) with
    /// respect to the input approximate design.
    pub rel_efficiency: f64,
}

/// Nearest multiple of `step`; exact midpoints move away from zero.
pub fn round_to_grid(x: f64, step: f64) -> f64 {
    let t = x / step;
    let k = t.signum() * (t.abs() + 0.5 + 1e-9).floor();
    multiple(k, step)
}

/// `k * step`, computed as `k / (1 / step)` when `1 / step` is an integer so
/// decimal steps give the closest double.
fn multiple(k: f64, step: f64) -> f64 {
    let inv = 1.0 / step;
    if (inv - inv.round()).abs() < 1e-9 * inv.max(1.0) && inv.round() >= 1.0 {
        k / inv.round()
    } else {
        k * step
    }
}

fn snap_into(x: f64, step: f64, a: f64, b: f64) -> f64 {
    let mut v = round_to_grid(x, step);
    let k = (v / step).round();
    if v > b {
        v = multiple(k - ((v - b) / step).ceil(), step);
    } else if v < a {
        v = multiple(k + ((a - v) / step).ceil(), step);
    }
    if v < a || v > b {
        x.clamp(a, b)
    } else {
        v
    }
}

/// Merge, round to the grid, floor the allocations, then hand out the
/// remaining units one at a time to the point that most increases
/// `log |sum (n_j / N) F_j|` (lowest index on ties).
pub fn round_design(
    provider: &InfoProvider,
    space: &DesignSpace,
    xi: &ApproximateDesign,
    cfg: &RoundingConfig,
) -> Result<RoundingResult> {
    let k = space.n_continuous();
    if cfg.grid.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} grid steps for {k} continuous factors",
            cfg.grid.len()
        )));
    }
    if cfg.grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("grid steps must be positive".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(cfg.delta2 >= 0.0) {
        return Err(Error::InvalidArgument("delta2 must be >= 0".into()));
    }
    let merged = merge_design(provider, space, xi, cfg.delta2)?;

    let bounds = space.continuous_bounds();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, &w) in merged.points.iter().zip(&merged.weights) {
        let mut r = x.clone();
        for j in 0..k {
            r[j] = snap_into(x[j], cfg.grid[j], bounds[j].0, bounds[j].1);
        }
        match points.iter().position(|q| *q == r) {
            Some(i) => weights[i] += w,
            None => {
                points.push(r);
                weights.push(w);
            }
        }
    }

    let n = cfg.n as f64;
    let mut counts: Vec<u64> = weights.iter().map(|w| (n * w + 1e-9).floor() as u64).collect();
    let mats: Vec<InfoMatrix> = points
        .iter()
        .map(|x| provider.info_matrix(x))
        .collect::<Result<_>>()?;
    let p = provider.p();
    let mut m = DMatrix::zeros(p, p);
    for (f, &c) in mats.iter().zip(&counts) {
        m += f * (c as f64 / n);
    }
    let assigned: u64 = counts.iter().sum();
    match cfg.allocation {
        Allocation::Greedy => {
            for _ in assigned..cfg.n {
                let mut best = (0usize, f64::NEG_INFINITY);
                for (i, f) in mats.iter().enumerate() {
                    let v = log_det(&(&m + f / n));
                    if v > best.1 {
                        best = (i, v);
                    }
                }
                counts[best.0] += 1;
                m += &mats[best.0] / n;
            }
        }
        Allocation::LargestRemainder => {
            let mut order: Vec<usize> = (0..points.len()).collect();
            let rem: Vec<f64> = weights.iter().zip(&counts).map(|(w, &c)| n * w - c as f64).collect();
            order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
            for &i in order.iter().cycle().take((cfg.n - assigned) as usize) {
                counts[i] += 1;
            }
        }
    }

    let keep: Vec<usize> = (0..points.len()).filter(|&i| counts[i] > 0).collect();
    let exact = ExactDesign::new(
        keep.iter().map(|&i| points[i].clone()).collect(),
        keep.iter().map(|&i| counts[i]).collect(),
    )?;
    let approx = exact.to_approximate();
    let ld = crate::design::design_log_det(provider, &approx)?;
    if ld == f64::NEG_INFINITY {
        return Err(Error::Singular("rounded exact design is singular".into()));
    }
    Ok(RoundingResult {
        rel_efficiency: relative_efficiency(provider, &approx, xi)?,
        log_det: ld,
        exact,
    })
}
