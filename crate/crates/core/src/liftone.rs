//! Lift-one optimization of the weights over a fixed set of points.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_det, SpdFactor};
use crate::model::InfoMatrix;

const GOLDEN_TOL: f64 = 1e-10;

/// How the one-dimensional subproblem along the lift-one path is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSolver {
    /// Golden-section search on the (concave) log determinant.
    #[default]
    Log,
    /// Exact interpolation of the determinant polynomial at Chebyshev nodes.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftOneConfig {
    pub reltol: f64,
    pub maxit: usize,
    pub random_order: bool,
    /// Additional restarts from random allocations.
    pub nram: usize,
    pub epsilon: f64,
    pub solver: PathSolver,
    /// When set, sweeps also continue until every point satisfies
    /// `tr(M^{-1} F_i) <= p (1 + tol)`.
    pub sensitivity_tol: Option<f64>,
}

impl Default for LiftOneConfig {
    fn default() -> Self {
        LiftOneConfig {
            reltol: 1e-5,
            maxit: 100,
            random_order: true,
            nram: 0,
            epsilon: 1e-12,
            solver: PathSolver::Log,
            sensitivity_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftOneResult {
    pub weights: Vec<f64>,
    pub log_det: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// `w_i(z)`: coordinate `i` set to `z`, the others rescaled by `(1 - z) / (1 - w_i)`.
pub fn lift_path(w: &[f64], i: usize, z: f64) -> Result<Vec<f64>> {
    if w[i] >= 1.0 {
        return Err(Error::InvalidArgument(format!("weight {i} is already 1")));
    }
    let scale = (1.0 - z) / (1.0 - w[i]);
    Ok(w
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == i { z } else { v * scale })
        .collect())
}

fn mixture(mats: &[InfoMatrix], w: &[f64]) -> DMatrix<f64> {
    let p = mats[0].nrows();
    let mut m = DMatrix::zeros(p, p);
    for (f, &v) in mats.iter().zip(w) {
        if v != 0.0 {
            m += f * v;
        }
    }
    m
}

/// `M(z) = z F_i + (1 - z) / (1 - w_i) R` with `R = M - w_i F_i`.
struct Path<'a> {
    fi: &'a InfoMatrix,
    rest: DMatrix<f64>,
    wi: f64,
}

impl Path<'_> {
    fn at(&self, z: f64) -> DMatrix<f64> {
        self.fi * z + &self.rest * ((1.0 - z) / (1.0 - self.wi))
    }

    fn log_det(&self, z: f64) -> f64 {
        log_det(&self.at(z))
    }
}

/// Maximizes `log |M(w_i(z))|` over `z` in `[0, 1]`; returns `(z*, log det)`.
pub fn maximize_along_path(
    mats: &[InfoMatrix],
    w: &[f64],
    i: usize,
    solver: PathSolver,
) -> Result<(f64, f64)> {
    let m = mixture(mats, w);
    maximize_with_mixture(mats, &m, w, i, solver)
}

fn maximize_with_mixture(
    mats: &[InfoMatrix],
    m: &DMatrix<f64>,
    w: &[f64],
    i: usize,
    solver: PathSolver,
) -> Result<(f64, f64)> {
    if w[i] >= 1.0 {
        let ld = log_det(m);
        if ld == f64::NEG_INFINITY {
            return Err(Error::Singular("lift-one path is singular".into()));
        }
        return Ok((1.0, ld));
    }
    let path = Path {
        fi: &mats[i],
        rest: m - &mats[i] * w[i],
        wi: w[i],
    };
    // the path is positive definite on all of (0, 1) or nowhere
    if path.log_det(0.5) == f64::NEG_INFINITY && path.log_det(w[i]) == f64::NEG_INFINITY {
        return Err(Error::Singular("lift-one path is singular".into()));
    }
    let z = match solver {
        PathSolver::Log => golden_section(|z| path.log_det(z)),
        PathSolver::Polynomial => polynomial_argmax(&path, mats[0].nrows()),
    };
    let mut best = (w[i], path.log_det(w[i]));
    for cand in [z, 0.0, 1.0] {
        let v = path.log_det(cand);
        if v > best.1 {
            best = (cand, v);
        }
    }
    Ok(best)
}

fn golden_section(f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `det M(z)` is a polynomial of degree at most `p`; it is interpolated at
/// `p + 1` Chebyshev nodes and maximized via sign changes of its derivative.
fn polynomial_argmax(path: &Path<'_>, p: usize) -> f64 {
    let n = p + 1;
    let nodes: Vec<f64> = (0..n)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos())
        .collect();
    let vals: Vec<f64> = nodes
        .iter()
        .map(|&t| path.at(0.5 * (t + 1.0)).determinant())
        .collect();
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return 0.5;
    }
    // Chebyshev coefficients on t in [-1, 1]
    let coef: Vec<f64> = (0..n)
        .map(|j| {
            let s: f64 = (0..n)
                .map(|k| vals[k] / scale * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                .sum();
            let c = 2.0 * s / n as f64;
            if j == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect();
    let deriv = chebyshev_derivative(&coef);
    let eval = |c: &[f64], t: f64| clenshaw(c, t);
    let mut cands = vec![-1.0, 1.0];
    let grid = 64 * n;
    let mut prev_t = -1.0;
    let mut prev = eval(&deriv, prev_t);
    for s in 1..=grid {
        let t = -1.0 + 2.0 * s as f64 / grid as f64;
        let cur = eval(&deriv, t);
        if prev == 0.0 {
            cands.push(prev_t);
        } else if prev.signum() != cur.signum() && cur != 0.0 {
            let (mut lo, mut hi, flo) = (prev_t, t, prev);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hi - lo < 1e-15 {
                    break;
                }
                let fm = eval(&deriv, mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cands.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev = cur;
    }
    let mut best = (cands[0], f64::NEG_INFINITY);
    for t in cands {
        let v = eval(&coef, t);
        if v > best.1 {
            best = (t, v);
        }
    }
    0.5 * (best.0 + 1.0)
}

fn chebyshev_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n + 1];
    for k in (1..n).rev() {
        d[k - 1] = d[k + 1] + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

fn run_once<R: Rng + ?Sized>(
    mats: &[InfoMatrix],
    start: &[f64],
    cfg: &LiftOneConfig,
    rng: &mut R,
) -> Result<LiftOneResult> {
    let n = mats.len();
    let mut w = start.to_vec();
    let mut ld = log_det(&mixture(mats, &w));
    if ld == f64::NEG_INFINITY {
        return Err(Error::Singular("lift-one start is singular".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.maxit {
        sweeps += 1;
        let before = ld;
        if cfg.random_order {
            order.shuffle(rng);
        }
        let mut m = mixture(mats, &w);
        for &i in &order {
            let (z, v) = maximize_with_mixture(mats, &m, &w, i, cfg.solver)?;
            if v > ld && z != w[i] {
                let scale = (1.0 - z) / (1.0 - w[i]);
                m = &mats[i] * z + (&m - &mats[i] * w[i]) * scale;
                w = lift_path(&w, i, z)?;
                ld = v;
            }
        }
        let gain = ld - before;
        if gain <= cfg.reltol * ld.abs().max(1.0) {
            match cfg.sensitivity_tol {
                None => {
                    converged = true;
                    break;
                }
                Some(tol) => {
                    if max_sensitivity(mats, &mixture(mats, &w)) <= m_p(mats) * (1.0 + tol) {
                        converged = true;
                        break;
                    }
                    if gain <= 0.0 {
                        break;
                    }
                }
            }
        }
    }
    Ok(LiftOneResult {
        weights: w,
        log_det: ld,
        sweeps,
        converged,
    })
}

fn m_p(mats: &[InfoMatrix]) -> f64 {
    mats[0].nrows() as f64
}

/// `max_i tr(M^{-1} F_i)`.
pub fn max_sensitivity(mats: &[InfoMatrix], m: &DMatrix<f64>) -> f64 {
    let Some(f) = SpdFactor::new(m) else {
        return f64::INFINITY;
    };
    let p = m.nrows();
    let a = f.solve_matrix(&DMatrix::identity(p, p));
    mats.iter()
        .map(|fi| a.component_mul(fi).sum())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lift-one sweeps from `start`, plus `cfg.nram` restarts from random
/// allocations (normalized exponential draws). Returns the best allocation,
/// with weights below `cfg.epsilon` set to zero.
pub fn liftone_optimize<R: Rng + ?Sized>(
    mats: &[InfoMatrix],
    start: &[f64],
    cfg: &LiftOneConfig,
    rng: &mut R,
) -> Result<LiftOneResult> {
    if mats.is_empty() || mats.len() != start.len() {
        return Err(Error::InvalidArgument("lift-one needs one start weight per matrix".into()));
    }
    let mut best = run_once(mats, start, cfg, rng).ok();
    for _ in 0..cfg.nram {
        let draws: Vec<f64> = (0..mats.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        let w: Vec<f64> = draws.iter().map(|v| v / total).collect();
        if let Ok(r) = run_once(mats, &w, cfg, rng) {
            if best.as_ref().is_none_or(|b| r.log_det > b.log_det) {
                best = Some(r);
            }
        }
    }
    let mut best = best.ok_or_else(|| Error::Singular("no nonsingular lift-one start found".into()))?;
    if best.weights.iter().any(|&v| v < cfg.epsilon) {
        let mut w: Vec<f64> = best
            .weights
            .iter()
            .map(|&v| if v < cfg.epsilon { 0.0 } else { v })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let ld = log_det(&mixture(mats, &w));
        if ld > f64::NEG_INFINITY {
            best.weights = w;
            best.log_det = ld;
        }
    }
    Ok(best)
}
