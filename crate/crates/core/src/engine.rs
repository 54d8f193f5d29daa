//! The ForLion outer loop, its GLM-adapted variant, initial designs, and the
//! new-point search over mixed factor spaces.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{
    closest_pair, design_log_det, inverse_info, merge_design, ApproximateDesign,
    InfoProvider,
};
use crate::error::{Error, Result};
use crate::liftone::{lift_path, liftone_optimize, maximize_along_path, LiftOneConfig, PathSolver};
use crate::linalg::log_det;
use crate::model::{DesignSpace, InfoMatrix};

const MAX_DRAWS_PER_POINT: usize = 1000;
const GLM_INITIAL_ATTEMPTS: usize = 100;
const DEFAULT_ROWMAX: usize = 1000;
const CORNER_LIMIT: usize = 64;
const ASCENT_MAX_ITER: usize = 200;
const PRESCAN_STARTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForLionConfig {
    /// Minimum spacing of initial design points.
    pub delta0: f64,
    /// Merging threshold applied at the top of every iteration.
    pub delta: f64,
    /// Weights below this are numerical zero.
    pub epsilon: f64,
    pub reltol: f64,
    pub maxit: usize,
    /// Extra lift-one runs from random allocations.
    pub random: bool,
    pub nram: usize,
    /// Repeat the whole procedure from fresh initial designs.
    pub random_initial: bool,
    pub nram_initial: usize,
    /// Analytic sensitivity gradient where available.
    pub optim_grad: bool,
    pub rowmax: Option<usize>,
    pub seed: u64,
    /// Uniform random starts per discrete combination, on top of the center
    /// and corner starts.
    pub multistart_count: usize,
    /// Grid intervals per continuous dimension for the pre-scan that seeds
    /// extra starts (used when there are at most two continuous factors; 0 disables).
    pub prescan_resolution: usize,
    pub liftone_reltol: Option<f64>,
    pub liftone_maxit: usize,
    pub liftone_solver: PathSolver,
}

impl Default for ForLionConfig {
    fn default() -> Self {
        ForLionConfig {
            delta0: 1e-5,
            delta: 0.0,
            epsilon: 1e-12,
            reltol: 1e-5,
            maxit: 100,
            random: false,
            nram: 3,
            random_initial: false,
            nram_initial: 3,
            optim_grad: false,
            rowmax: None,
            seed: 0,
            multistart_count: 3,
            prescan_resolution: 40,
            liftone_reltol: None,
            liftone_maxit: 1000,
            liftone_solver: PathSolver::Log,
        }
    }
}

impl ForLionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta0", self.delta0),
            ("epsilon", self.epsilon),
            ("reltol", self.reltol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.maxit == 0 || self.liftone_maxit == 0 {
            return Err(Error::InvalidArgument("maxit must be at least 1".into()));
        }
        if let Some(t) = self.liftone_reltol {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("liftone_reltol must be positive, got {t}")));
            }
        }
        if self.rowmax == Some(0) {
            return Err(Error::InvalidArgument("rowmax must be at least 1".into()));
        }
        Ok(())
    }

    fn liftone(&self) -> LiftOneConfig {
        LiftOneConfig {
            reltol: self.liftone_reltol.unwrap_or(self.reltol),
            maxit: self.liftone_maxit,
            random_order: true,
            nram: if self.random { self.nram } else { 0 },
            epsilon: self.epsilon,
            solver: self.liftone_solver,
            sensitivity_tol: Some(self.reltol * 0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForLionResult {
    pub design: ApproximateDesign,
    pub m: usize,
    pub det: f64,
    pub log_det: f64,
    pub convergence: bool,
    /// Smallest distance between two support points; `None` when `m = 1`.
    pub min_diff: Option<f64>,
    pub x_close: Option<(Vec<f64>, Vec<f64>)>,
    /// Outer iterations executed.
    pub itmax: usize,
    /// Maximum of the sensitivity function found by the last search.
    pub max_sensitivity: f64,
    pub budget_exceeded: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn draw_spaced<R: Rng + ?Sized>(
    space: &DesignSpace,
    existing: &[Vec<f64>],
    delta0: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_DRAWS_PER_POINT {
        let x = space.sample_point(rng);
        if existing.iter().all(|e| distance(e, &x) >= delta0) {
            return Ok(x);
        }
    }
    Err(Error::InitialDesign(format!(
        "could not draw a point at distance >= delta0 = {delta0} from the current points"
    )))
}

/// Random starting design with uniform weights.
///
/// General mode grows the point set until the information is nonsingular
/// (at most `rowmax` points). GLM mode draws exactly `p` points and redraws
/// the whole set until it is nonsingular.
pub fn initial_design<R: Rng + ?Sized>(
    space: &DesignSpace,
    provider: &InfoProvider,
    cfg: &ForLionConfig,
    glm_adapted: bool,
    rng: &mut R,
) -> Result<ApproximateDesign> {
    let p = provider.p();
    if glm_adapted {
        for _ in 0..GLM_INITIAL_ATTEMPTS {
            let mut pts: Vec<Vec<f64>> = Vec::with_capacity(p);
            for _ in 0..p {
                let x = draw_spaced(space, &pts, cfg.delta0, rng)?;
                pts.push(x);
            }
            let xi = ApproximateDesign::uniform(pts)?;
            if design_log_det(provider, &xi)? > f64::NEG_INFINITY {
                return Ok(xi);
            }
        }
        return Err(Error::InitialDesign(format!(
            "no nonsingular minimally supported design in {GLM_INITIAL_ATTEMPTS} attempts; try another seed"
        )));
    }
    let rowmax = cfg.rowmax.unwrap_or(DEFAULT_ROWMAX);
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut m = DMatrix::zeros(p, p);
    while pts.len() < rowmax {
        let x = draw_spaced(space, &pts, cfg.delta0, rng)?;
        m += provider.info_matrix(&x)?;
        pts.push(x);
        if log_det(&m) > f64::NEG_INFINITY {
            return ApproximateDesign::uniform(pts);
        }
    }
    Err(Error::InitialDesign(format!(
        "initial design still singular with rowmax = {rowmax} points; increase rowmax or change the seed"
    )))
}

/// Maps unit coordinates to the box, hitting the bounds exactly.
fn to_box(u: &[f64], bounds: &[(f64, f64)], tail: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = u
        .iter()
        .zip(bounds)
        .map(|(&t, &(a, b))| {
            if t <= 0.0 {
                a
            } else if t >= 1.0 {
                b
            } else {
                (a + t * (b - a)).clamp(a, b)
            }
        })
        .collect();
    x.extend_from_slice(tail);
    x
}

struct Searcher<'a> {
    provider: &'a InfoProvider,
    a: DMatrix<f64>,
    bounds: Vec<(f64, f64)>,
    analytic: bool,
}

impl Searcher<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.provider.point_info(x) {
            Ok(info) => {
                let d = info.trace_with(&self.a);
                if d.is_finite() {
                    d
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn value_unit(&self, u: &[f64], tail: &[f64]) -> f64 {
        self.value(&to_box(u, &self.bounds, tail))
    }

    /// Value and gradient with respect to the unit coordinates.
    fn value_grad(&self, u: &[f64], tail: &[f64], d0: f64) -> Vec<f64> {
        let k = u.len();
        if self.analytic {
            let x = to_box(u, &self.bounds, tail);
            if let Some((_, g)) = self.provider.sensitivity_gradient(&self.a, &x, k) {
                return g
                    .iter()
                    .zip(&self.bounds)
                    .map(|(gi, (a, b))| gi * (b - a))
                    .collect();
            }
        }
        let h = 1e-6;
        let mut g = vec![0.0; k];
        let mut probe = u.to_vec();
        for j in 0..k {
            let (lo, hi) = ((u[j] - h).max(0.0), (u[j] + h).min(1.0));
            probe[j] = hi;
            let fh = if hi > u[j] { self.value_unit(&probe, tail) } else { d0 };
            probe[j] = lo;
            let fl = if lo < u[j] { self.value_unit(&probe, tail) } else { d0 };
            probe[j] = u[j];
            g[j] = if fh.is_finite() && fl.is_finite() { (fh - fl) / (hi - lo) } else { 0.0 };
        }
        g
    }

    /// Projected-gradient ascent with backtracking from `u0`.
    fn ascend(&self, u0: &[f64], tail: &[f64]) -> (Vec<f64>, f64) {
        let mut u = u0.to_vec();
        let mut d = self.value_unit(&u, tail);
        if !d.is_finite() {
            return (u, d);
        }
        let mut step = 0.1;
        for _ in 0..ASCENT_MAX_ITER {
            let g = self.value_grad(&u, tail, d);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            let mut moved = false;
            while step > 1e-12 {
                let cand: Vec<f64> = u
                    .iter()
                    .zip(&g)
                    .map(|(ui, gi)| (ui + step * gi / norm).clamp(0.0, 1.0))
                    .collect();
                let gain: f64 = cand.iter().zip(&u).zip(&g).map(|((c, ui), gi)| (c - ui) * gi).sum();
                if gain <= 0.0 {
                    break;
                }
                let dc = self.value_unit(&cand, tail);
                if dc > d + 1e-4 * gain {
                    let shift = cand.iter().zip(&u).fold(0.0f64, |m, (c, ui)| m.max((c - ui).abs()));
                    u = cand;
                    d = dc;
                    step = (step * 2.0).min(1.0);
                    moved = shift > 1e-12;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (u, d)
    }
}

fn latin_hypercube<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; k]; n];
    for j in 0..k {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, pt) in pts.iter_mut().enumerate() {
            pt[j] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Local maxima of `d` on a regular grid over the unit box (`k <= 2`), best first.
fn prescan_starts(s: &Searcher<'_>, k: usize, res: usize, tail: &[f64]) -> Vec<Vec<f64>> {
    let n = res + 1;
    let coord = |i: usize| i as f64 / res as f64;
    let mut maxima: Vec<(f64, Vec<f64>)> = Vec::new();
    if k == 1 {
        let vals: Vec<f64> = (0..n).map(|i| s.value_unit(&[coord(i)], tail)).collect();
        for i in 0..n {
            let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < n { vals[i + 1] } else { f64::NEG_INFINITY };
            if vals[i].is_finite() && vals[i] >= left && vals[i] >= right {
                maxima.push((vals[i], vec![coord(i)]));
            }
        }
    } else {
        let mut vals = vec![f64::NEG_INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                vals[i * n + j] = s.value_unit(&[coord(i), coord(j)], tail);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v = vals[i * n + j];
                if !v.is_finite() {
                    continue;
                }
                let mut is_max = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n {
                            is_max &= v >= vals[a as usize * n + b as usize];
                        }
                    }
                }
                if is_max {
                    maxima.push((v, vec![coord(i), coord(j)]));
                }
            }
        }
    }
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    maxima.into_iter().take(PRESCAN_STARTS).map(|(_, u)| u).collect()
}

/// Maximizes the sensitivity function over the design space; returns the
/// best point and its sensitivity.
pub fn new_point_search<R: Rng + ?Sized>(
    space: &DesignSpace,
    provider: &InfoProvider,
    xi: &ApproximateDesign,
    cfg: &ForLionConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let searcher = Searcher {
        provider,
        a: inverse_info(provider, xi)?,
        bounds: space.continuous_bounds(),
        analytic: cfg.optim_grad,
    };
    let k = space.n_continuous();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |x: Vec<f64>, d: f64| {
        if d.is_finite() && best.as_ref().is_none_or(|(_, b)| d > *b) {
            best = Some((x, d));
        }
    };
    for combo in space.discrete_combinations() {
        if k == 0 {
            let d = searcher.value(&combo);
            consider(combo, d);
            continue;
        }
        let mut starts: Vec<Vec<f64>> = vec![vec![0.5; k]];
        if k < 7 && (1usize << k) <= CORNER_LIMIT {
            for mask in 0..(1usize << k) {
                starts.push((0..k).map(|j| ((mask >> j) & 1) as f64).collect());
            }
        } else {
            starts.extend(latin_hypercube(CORNER_LIMIT, k, rng));
        }
        for _ in 0..cfg.multistart_count {
            starts.push((0..k).map(|_| rng.random::<f64>()).collect());
        }
        if k <= 2 && cfg.prescan_resolution > 0 {
            starts.extend(prescan_starts(&searcher, k, cfg.prescan_resolution, &combo));
        }
        for u0 in starts {
            let (u, d) = searcher.ascend(&u0, &combo);
            consider(to_box(&u, &searcher.bounds, &combo), d);
        }
    }
    best.ok_or_else(|| Error::Singular("sensitivity could not be evaluated anywhere in the design space".into()))
}

fn point_matrices(provider: &InfoProvider, xi: &ApproximateDesign) -> Result<Vec<InfoMatrix>> {
    xi.points.iter().map(|x| provider.info_matrix(x)).collect()
}

fn run_once(
    space: &DesignSpace,
    provider: &InfoProvider,
    cfg: &ForLionConfig,
    glm_adapted: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ForLionResult> {
    let p = provider.p() as f64;
    let lcfg = cfg.liftone();
    let mut xi = initial_design(space, provider, cfg, glm_adapted, rng)?;
    let mut convergence = false;
    let mut itmax = 0;
    let mut dmax = f64::INFINITY;
    let mut ld = f64::NEG_INFINITY;
    // the point added last round sits out the next merge so lift-one can
    // allocate it first
    let mut fresh: Option<(Vec<f64>, f64)> = None;
    for t in 1..=cfg.maxit {
        itmax = t;
        match fresh.take() {
            Some((x, w)) if cfg.delta > 0.0 => {
                let rest_total = 1.0 - w;
                let mut rest = xi.clone();
                rest.points.pop();
                rest.weights.pop();
                rest.weights.iter_mut().for_each(|v| *v /= rest_total);
                let mut merged = merge_design(provider, space, &rest, cfg.delta)?;
                merged.weights.iter_mut().for_each(|v| *v *= rest_total);
                merged.points.push(x);
                merged.weights.push(w);
                xi = merged;
            }
            _ => xi = merge_design(provider, space, &xi, cfg.delta)?,
        }
        let mats = point_matrices(provider, &xi)?;
        let r = liftone_optimize(&mats, &xi.weights, &lcfg, rng)?;
        xi.weights = r.weights;
        ld = r.log_det;
        xi.drop_small(cfg.epsilon);
        let (x_new, d_new) = new_point_search(space, provider, &xi, cfg, rng)?;
        dmax = d_new;
        if d_new <= p * (1.0 + cfg.reltol) {
            convergence = true;
            break;
        }
        if t == cfg.maxit {
            break;
        }
        if xi.points.contains(&x_new) {
            continue;
        }
        xi.points.push(x_new);
        xi.weights.push(0.0);
        if glm_adapted {
            let n = xi.len();
            let mats = point_matrices(provider, &xi)?;
            let (z, _) = maximize_along_path(&mats, &xi.weights, n - 1, cfg.liftone_solver)?;
            xi.weights = lift_path(&xi.weights, n - 1, z)?;
        }
        fresh = Some((xi.points[xi.len() - 1].clone(), xi.weights[xi.len() - 1]));
    }
    let ld_final = design_log_det(provider, &xi)?;
    if ld_final.is_finite() {
        ld = ld_final;
    }
    let pair = closest_pair(&xi.points);
    Ok(ForLionResult {
        m: xi.len(),
        det: ld.exp(),
        log_det: ld,
        convergence,
        min_diff: pair.map(|(d, _, _)| d),
        x_close: pair.map(|(_, i, j)| (xi.points[i].clone(), xi.points[j].clone())),
        itmax,
        max_sensitivity: dmax,
        budget_exceeded: provider.budget_exceeded(),
        design: xi,
    })
}

/// Locally (or, with an expected-information provider, EW) D-optimal
/// approximate design. `glm_adapted` selects the minimally supported start
/// and positive initial weights for new points.
pub fn forlion_optimize(
    space: &DesignSpace,
    provider: &InfoProvider,
    cfg: &ForLionConfig,
    glm_adapted: bool,
) -> Result<ForLionResult> {
    cfg.validate()?;
    if glm_adapted && !provider.model().is_glm() {
        return Err(Error::InvalidArgument("the GLM-adapted algorithm needs a GLM".into()));
    }
    if space.dim() != provider.model().formula().n_factors() {
        return Err(Error::InvalidArgument(format!(
            "design space has {} factors, formula uses {}",
            space.dim(),
            provider.model().formula().n_factors()
        )));
    }
    let runs = if cfg.random_initial { cfg.nram_initial.max(1) } else { 1 };
    let mut best: Option<ForLionResult> = None;
    let mut last_err = None;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(run as u64);
        match run_once(space, provider, cfg, glm_adapted, &mut rng) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.log_det > b.log_det) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap())
}

/// EW D-optimal design: the same loop driven by an expected-information provider.
pub fn ew_forlion_optimize(
    space: &DesignSpace,
    provider: &InfoProvider,
    cfg: &ForLionConfig,
    glm_adapted: bool,
) -> Result<ForLionResult> {
    if !provider.is_expected() {
        return Err(Error::InvalidArgument(
            "EW design needs a prior or a parameter sample".into(),
        ));
    }
    forlion_optimize(space, provider, cfg, glm_adapted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_formula, Factor, GlmLink, ModelSpec};

    #[test]
    fn intercept_only_is_one_point() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1"], &s).unwrap()).unwrap();
        let prov = InfoProvider::local(m, vec![0.3]).unwrap();
        for glm in [false, true] {
            let r = forlion_optimize(&s, &prov, &ForLionConfig::default(), glm).unwrap();
            assert_eq!(r.m, 1);
            assert!(r.convergence);
            assert_eq!(r.itmax, 1);
            assert!((r.max_sensitivity - 1.0).abs() < 1e-12);
            assert_eq!(r.min_diff, None);
        }
    }

    #[test]
    fn logistic_line_two_points() {
        // Known optimum for logit with eta = x on a wide interval: eta = +-1.5434
        let s = DesignSpace::new(vec![Factor::continuous("x", -5.0, 5.0)]).unwrap();
        let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x"], &s).unwrap()).unwrap();
        let prov = InfoProvider::local(m, vec![0.0, 1.0]).unwrap();
        let cfg = ForLionConfig {
            delta: 0.1,
            ..Default::default()
        };
        for glm in [false, true] {
            let r = forlion_optimize(&s, &prov, &cfg, glm).unwrap();
            assert!(r.convergence, "{r:?}");
            let mut right = 0.0;
            for (x, w) in r.design.points.iter().zip(&r.design.weights) {
                assert!((x[0].abs() - 1.5434).abs() < 1e-2, "{:?}", r.design);
                if x[0] > 0.0 {
                    right += w;
                }
            }
            assert!((right - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn initial_design_respects_spacing() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x + x^2"], &s).unwrap()).unwrap();
        let prov = InfoProvider::local(m, vec![0.0, 1.0, -1.0]).unwrap();
        let cfg = ForLionConfig {
            delta0: 0.05,
            ..Default::default()
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for glm in [false, true] {
                let xi = initial_design(&s, &prov, &cfg, glm, &mut rng).unwrap();
                if glm {
                    assert_eq!(xi.len(), 3);
                }
                let (d, _, _) = closest_pair(&xi.points).unwrap();
                assert!(d >= 0.05);
            }
        }
    }
}
