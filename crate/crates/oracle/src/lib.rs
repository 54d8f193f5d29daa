//! Slow, independent reference computations used to check `forlion-core`.
//! Nothing here is used by the production path.

use std::f64::consts::PI;

use forlion_core::design::{design_info, inverse_info, ApproximateDesign, InfoProvider};
use forlion_core::liftone::{liftone_optimize, LiftOneConfig};
use forlion_core::linalg::log_det;
use forlion_core::model::{DesignSpace, Family, GlmLink, InfoMatrix, MlmLink, ModelSpec};
use forlion_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

/// Step, in linear-predictor units, for the second differences of [`fd_fisher`].
pub const DEFAULT_FD_STEP: f64 = 1e-3;

fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `(P(y = 1), P(y = 0))` of a binary response, each computed without
/// subtracting from one.
fn binary_probs(link: GlmLink, eta: f64) -> (f64, f64) {
    match link {
        GlmLink::Logit => (logistic(eta), logistic(-eta)),
        GlmLink::Probit => (normal_cdf(eta), normal_cdf(-eta)),
        GlmLink::Cloglog => {
            let t = eta.exp();
            (-(-t).exp_m1(), (-t).exp())
        }
        GlmLink::Loglog => {
            let t = (-eta).exp();
            ((-t).exp(), -(-t).exp_m1())
        }
        GlmLink::Cauchit => {
            let tail = |v: f64| if v > 0.0 { (1.0 / v).atan() / PI } else { 0.5 - v.atan() / PI };
            (tail(-eta), tail(eta))
        }
        GlmLink::Identity | GlmLink::Log => unreachable!("not a binary link"),
    }
}

/// `ln p` where `q = 1 - p` is known accurately.
fn log_prob(p: f64, q: f64) -> f64 {
    if p <= 0.5 {
        p.ln()
    } else {
        (-q).ln_1p()
    }
}

/// Category probabilities written directly from the link equations.
pub fn mlm_probs(link: MlmLink, eta: &[f64], j: usize) -> Result<Vec<f64>> {
    let e = &eta[..j - 1];
    let pi = match link {
        MlmLink::Baseline => {
            let denom = 1.0 + e.iter().map(|v| v.exp()).sum::<f64>();
            let mut p: Vec<f64> = e.iter().map(|v| v.exp() / denom).collect();
            p.push(1.0 / denom);
            p
        }
        MlmLink::Cumulative => {
            let gamma: Vec<f64> = e.iter().map(|&v| logistic(v)).collect();
            let mut p = Vec::with_capacity(j);
            let mut prev = 0.0;
            for g in &gamma {
                p.push(g - prev);
                prev = *g;
            }
            p.push(1.0 - prev);
            if p.iter().any(|&v| v <= 0.0) {
                return Err(Error::InfeasibleParameter("cumulative probabilities not positive".into()));
            }
            p
        }
        MlmLink::Adjacent => {
            // log pi_i - log pi_J = sum_{l >= i} eta_l
            let mut logs = vec![0.0; j];
            for i in (0..j - 1).rev() {
                logs[i] = logs[i + 1] + e[i];
            }
            let total: f64 = logs.iter().map(|v| v.exp()).sum();
            logs.iter().map(|v| v.exp() / total).collect()
        }
        MlmLink::Continuation => {
            let mut p = Vec::with_capacity(j);
            let mut remaining = 1.0;
            for &v in e {
                let r = logistic(v);
                p.push(remaining * r);
                remaining *= 1.0 - r;
            }
            p.push(remaining);
            p
        }
    };
    Ok(pi)
}

/// Expected log-likelihood `sum_y P0(y) log p(y | theta)` of one observation,
/// with outcome probabilities `P0` frozen at `theta0`.
fn expected_loglik(model: &ModelSpec, x: &[f64], theta0: &[f64], theta: &[f64]) -> Result<f64> {
    let xm = model.eval_predictor(x);
    let eta = |t: &[f64]| -> Vec<f64> { (&xm * DVector::from_column_slice(t)).iter().copied().collect() };
    match model.family() {
        Family::Glm { link } => {
            let (e0, e) = (eta(theta0)[0], eta(theta)[0]);
            Ok(match link {
                // Gaussian, unit variance: E[-(y - m)^2 / 2] up to a constant
                GlmLink::Identity => -0.5 * (e0 - e) * (e0 - e),
                // Poisson: E[y log m - m] up to a constant
                GlmLink::Log => e0.exp() * e - e.exp(),
                // Bernoulli: outcomes 1 and 0
                _ => {
                    let (p0, q0) = binary_probs(link, e0);
                    let (p, q) = binary_probs(link, e);
                    p0 * log_prob(p, q) + q0 * log_prob(q, p)
                }
            })
        }
        Family::Mlm { categories, link } => {
            let p0 = mlm_probs(link, &eta(theta0), categories)?;
            let p = mlm_probs(link, &eta(theta), categories)?;
            Ok(p0.iter().zip(&p).map(|(a, b)| a * b.ln()).sum())
        }
    }
}

/// Fisher information as the negative expected Hessian of the
/// log-likelihood, by central second differences in `theta` at steps `h` and
/// `h / 2` combined by one Richardson step.
pub fn fd_fisher(model: &ModelSpec, theta: &[f64], x: &[f64], fd_step: f64) -> Result<InfoMatrix> {
    let p = model.p();
    let xm = model.eval_predictor(x);
    let h: Vec<f64> = (0..p)
        .map(|i| fd_step / xm.column(i).iter().fold(1.0f64, |a, v| a.max(v.abs())))
        .collect();
    let coarse = fd_hessian(model, theta, x, &h)?;
    let half: Vec<f64> = h.iter().map(|v| 0.5 * v).collect();
    let fine = fd_hessian(model, theta, x, &half)?;
    let hess = (fine * 4.0 - coarse) / 3.0;
    Ok(-(&hess + hess.transpose()) * 0.5)
}

fn fd_hessian(model: &ModelSpec, theta: &[f64], x: &[f64], h: &[f64]) -> Result<DMatrix<f64>> {
    let p = theta.len();
    let f = |t: &[f64]| expected_loglik(model, x, theta, t);
    let f0 = f(theta)?;
    let mut hess = DMatrix::zeros(p, p);
    let mut t = theta.to_vec();
    for i in 0..p {
        t[i] = theta[i] + h[i];
        let fp = f(&t)?;
        t[i] = theta[i] - h[i];
        let fm = f(&t)?;
        t[i] = theta[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut g = |si: f64, sj: f64| -> Result<f64> {
                t[i] = theta[i] + si * h[i];
                t[j] = theta[j] + sj * h[j];
                let v = f(&t);
                t[i] = theta[i];
                t[j] = theta[j];
                v
            };
            let v = (g(1.0, 1.0)? - g(1.0, -1.0)? - g(-1.0, 1.0)? + g(-1.0, -1.0)?) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor-product Gauss-Legendre integral over a two-dimensional box.
pub fn tensor_gauss_legendre_2d(f: impl Fn(f64, f64) -> f64, lower: [f64; 2], upper: [f64; 2], n: usize) -> f64 {
    let (t, w) = gauss_legendre(n);
    let half = [0.5 * (upper[0] - lower[0]), 0.5 * (upper[1] - lower[1])];
    let mid = [0.5 * (upper[0] + lower[0]), 0.5 * (upper[1] + lower[1])];
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w[i] * w[j] * f(mid[0] + half[0] * t[i], mid[1] + half[1] * t[j]);
        }
    }
    s * half[0] * half[1]
}

fn mixture(mats: &[InfoMatrix], w: &[f64]) -> DMatrix<f64> {
    let p = mats[0].nrows();
    let mut m = DMatrix::zeros(p, p);
    for (f, &v) in mats.iter().zip(w) {
        m += f * v;
    }
    m
}

/// Best log determinant over all allocations on the simplex grid with spacing `step`.
pub fn simplex_grid_best(mats: &[InfoMatrix], step: f64) -> (Vec<f64>, f64) {
    let n = (1.0 / step).round() as usize;
    let m = mats.len();
    let mut best = (vec![0.0; m], f64::NEG_INFINITY);
    let mut counts = vec![0usize; m];
    fn rec(
        k: usize,
        left: usize,
        n: usize,
        counts: &mut Vec<usize>,
        mats: &[InfoMatrix],
        best: &mut (Vec<f64>, f64),
    ) {
        if k == counts.len() - 1 {
            counts[k] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let ld = log_det(&mixture(mats, &w));
            if ld > best.1 {
                *best = (w, ld);
            }
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            rec(k + 1, left - c, n, counts, mats, best);
        }
    }
    rec(0, n, n, &mut counts, mats, &mut best);
    best
}

/// Best `log |sum (n_i / N) F_i|` over all count vectors with `sum n = N`
/// and `n_i >= floors[i]`.
pub fn exhaustive_rounding(mats: &[InfoMatrix], floors: &[u64], total: u64) -> (Vec<u64>, f64) {
    let m = mats.len();
    let spare = total - floors.iter().sum::<u64>();
    let mut best = (floors.to_vec(), f64::NEG_INFINITY);
    let mut extra = vec![0u64; m];
    fn rec(
        k: usize,
        left: u64,
        extra: &mut Vec<u64>,
        floors: &[u64],
        total: u64,
        mats: &[InfoMatrix],
        best: &mut (Vec<u64>, f64),
    ) {
        if k == extra.len() - 1 {
            extra[k] = left;
            let counts: Vec<u64> = floors.iter().zip(extra.iter()).map(|(a, b)| a + b).collect();
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            let ld = log_det(&mixture(mats, &w));
            if ld > best.1 {
                *best = (counts, ld);
            }
            return;
        }
        for c in 0..=left {
            extra[k] = c;
            rec(k + 1, left - c, extra, floors, total, mats, best);
        }
    }
    rec(0, spare, &mut extra, floors, total, mats, &mut best);
    best
}

/// All grid points of the design space: continuous coordinates on
/// `a, a + step, ..., b` (the upper bound always included) crossed with every
/// discrete combination.
pub fn design_grid(space: &DesignSpace, steps: &[f64]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = space
        .continuous_bounds()
        .iter()
        .zip(steps)
        .map(|(&(a, b), &s)| {
            let n = ((b - a) / s).floor() as usize;
            let mut v: Vec<f64> = (0..=n).map(|i| a + i as f64 * s).filter(|&t| t <= b).collect();
            if *v.last().unwrap() < b {
                v.push(b);
            }
            v
        })
        .collect();
    let mut cont: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        cont = cont
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&t| {
                    let mut n = c.clone();
                    n.push(t);
                    n
                })
            })
            .collect();
    }
    let combos = space.discrete_combinations();
    let mut out = Vec::with_capacity(cont.len() * combos.len());
    for combo in &combos {
        for c in &cont {
            let mut x = c.clone();
            x.extend_from_slice(combo);
            out.push(x);
        }
    }
    out
}

/// Maximum of the sensitivity function over [`design_grid`], with its location.
pub fn max_sensitivity_on_grid(
    provider: &InfoProvider,
    space: &DesignSpace,
    xi: &ApproximateDesign,
    steps: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let a = inverse_info(provider, xi)?;
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for x in design_grid(space, steps) {
        let d = provider.point_info(&x)?.trace_with(&a);
        if d > best.1 {
            best = (x, d);
        }
    }
    Ok(best)
}

/// D-optimal design restricted to the grid candidates, by lift-one over all of them.
pub fn grid_fedorov(
    provider: &InfoProvider,
    space: &DesignSpace,
    steps: &[f64],
    reltol: f64,
) -> Result<ApproximateDesign> {
    let pts = design_grid(space, steps);
    let mats: Vec<InfoMatrix> = pts.iter().map(|x| provider.info_matrix(x)).collect::<Result<_>>()?;
    let start = vec![1.0 / pts.len() as f64; pts.len()];
    let cfg = LiftOneConfig {
        reltol,
        maxit: 100_000,
        sensitivity_tol: Some(reltol),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = liftone_optimize(&mats, &start, &cfg, &mut rng)?;
    let keep: Vec<usize> = (0..pts.len()).filter(|&i| r.weights[i] > 0.0).collect();
    let xi = ApproximateDesign::new(
        keep.iter().map(|&i| pts[i].clone()).collect(),
        keep.iter().map(|&i| r.weights[i]).collect(),
    )?;
    if log_det(&design_info(provider, &xi)?) == f64::NEG_INFINITY {
        return Err(Error::Singular("grid design is singular".into()));
    }
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use forlion_core::model::{parse_formula, Factor};

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (t, w) = gauss_legendre(5);
        let s: f64 = t.iter().zip(&w).map(|(x, v)| v * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fd_intercept_logit() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1"], &s).unwrap()).unwrap();
        let f = fd_fisher(&m, &[0.0], &[0.5], DEFAULT_FD_STEP).unwrap();
        assert!((f[(0, 0)] - 0.25).abs() < 1e-6);
        let m = ModelSpec::glm(GlmLink::Log, parse_formula(&["1"], &s).unwrap()).unwrap();
        let f = fd_fisher(&m, &[1.0], &[0.5], DEFAULT_FD_STEP).unwrap();
        assert!((f[(0, 0)] - std::f64::consts::E).abs() < 1e-5);
    }

    #[test]
    fn exhaustive_small() {
        let mats = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)];
        let (c, _) = exhaustive_rounding(&mats, &[1, 1], 5);
        assert_eq!(c, vec![1, 4]);
    }

    #[test]
    fn grid_includes_upper_bound() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let g = design_grid(&s, &[0.3]);
        assert_eq!(g.len(), 5);
        assert_eq!(g[4], vec![1.0]);
    }
}
