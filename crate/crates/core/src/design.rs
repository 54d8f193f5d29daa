//! Designs, the information provider, and design-level quantities.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{
    ew_glm_weight_integral, ew_glm_weight_sample, ew_info_integral, ew_info_sample, BoxPrior,
    ParameterSample,
};
use crate::linalg::{log_det, SpdFactor};
use crate::model::links::glm_weight_derivative;
use crate::model::{glm_weight, DesignSpace, Family, InfoMatrix, ModelSpec};

/// Weighted design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximateDesign {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ApproximateDesign {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("design points differ in dimension".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(ApproximateDesign { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        let n = points.len();
        Self::new(points, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Removes points with weight below `epsilon` and renormalizes.
    pub fn drop_small(&mut self, epsilon: f64) {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] >= epsilon).collect();
        if keep.is_empty() || keep.len() == self.len() {
            return;
        }
        self.points = keep.iter().map(|&i| self.points[i].clone()).collect();
        let w: Vec<f64> = keep.iter().map(|&i| self.weights[i]).collect();
        let total: f64 = w.iter().sum();
        self.weights = w.into_iter().map(|v| v / total).collect();
    }
}

/// Design points with integer unit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDesign {
    pub points: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl ExactDesign {
    pub fn new(points: Vec<Vec<f64>>, counts: Vec<u64>) -> Result<Self> {
        if points.is_empty() || points.len() != counts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points with {} counts",
                points.len(),
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("exact design has no units".into()));
        }
        Ok(ExactDesign { points, counts, total })
    }

    /// Weights `n_i / N`.
    pub fn to_approximate(&self) -> ApproximateDesign {
        ApproximateDesign {
            points: self.points.clone(),
            weights: self.counts.iter().map(|&n| n as f64 / self.total as f64).collect(),
        }
    }
}

/// Where the parameter enters the information.
#[derive(Debug, Clone)]
pub enum InfoSource {
    Local(Vec<f64>),
    Prior(BoxPrior),
    Sample(ParameterSample),
}

/// Per-point information. GLM information is always `nu * h h^T`.
#[derive(Debug, Clone)]
pub enum PointInfo {
    RankOne { nu: f64, h: DVector<f64> },
    Full(InfoMatrix),
}

impl PointInfo {
    pub fn matrix(&self) -> InfoMatrix {
        match self {
            PointInfo::RankOne { nu, h } => h * h.transpose() * *nu,
            PointInfo::Full(m) => m.clone(),
        }
    }

    /// `tr(A F)` for symmetric `A`.
    pub fn trace_with(&self, a: &DMatrix<f64>) -> f64 {
        match self {
            PointInfo::RankOne { nu, h } => nu * (h.transpose() * a * h)[(0, 0)],
            PointInfo::Full(m) => a.component_mul(m).sum(),
        }
    }

    /// `acc += w F`.
    pub fn add_scaled_to(&self, acc: &mut DMatrix<f64>, w: f64) {
        match self {
            PointInfo::RankOne { nu, h } => acc.ger(w * nu, h, h, 1.0),
            PointInfo::Full(m) => *acc += m * w,
        }
    }
}

fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Maps a design point to its (local or expected) information matrix.
/// Expected information is memoized per exact point coordinates.
#[derive(Debug)]
pub struct InfoProvider {
    model: ModelSpec,
    source: InfoSource,
    cache: Mutex<HashMap<Vec<u64>, Arc<PointInfo>>>,
    budget_exceeded: AtomicBool,
    evaluations: AtomicUsize,
}

impl InfoProvider {
    pub fn local(model: ModelSpec, theta: Vec<f64>) -> Result<Self> {
        model.check_theta(&theta)?;
        Ok(Self::build(model, InfoSource::Local(theta)))
    }

    pub fn prior(model: ModelSpec, prior: BoxPrior) -> Result<Self> {
        if prior.dim() != model.p() {
            return Err(Error::InvalidArgument(format!(
                "prior has {} coordinates, model has p = {}",
                prior.dim(),
                model.p()
            )));
        }
        Ok(Self::build(model, InfoSource::Prior(prior)))
    }

    pub fn sample(model: ModelSpec, sample: ParameterSample) -> Result<Self> {
        if sample.dim() != model.p() {
            return Err(Error::Sample(format!(
                "sample has {} columns, model has p = {}",
                sample.dim(),
                model.p()
            )));
        }
        Ok(Self::build(model, InfoSource::Sample(sample)))
    }

    fn build(model: ModelSpec, source: InfoSource) -> Self {
        InfoProvider {
            model,
            source,
            cache: Mutex::new(HashMap::new()),
            budget_exceeded: AtomicBool::new(false),
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn source(&self) -> &InfoSource {
        &self.source
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn is_expected(&self) -> bool {
        !matches!(self.source, InfoSource::Local(_))
    }

    /// True once any cubature call ran out of its evaluation budget.
    pub fn budget_exceeded(&self) -> bool {
        self.budget_exceeded.load(Ordering::Relaxed)
    }

    /// Number of distinct points whose information was computed.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn point_info(&self, x: &[f64]) -> Result<Arc<PointInfo>> {
        if let InfoSource::Local(theta) = &self.source {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::new(match self.model.glm_weight_and_predictor(theta, x) {
                Some((nu, h)) => PointInfo::RankOne { nu, h },
                None => PointInfo::Full(self.model.fisher_info(theta, x)?),
            }));
        }
        let key = point_key(x);
        if let Some(hit) = self.cache.lock().get(&key) {
            return Ok(hit.clone());
        }
        let info = Arc::new(self.compute_expected(x)?);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.cache.lock().insert(key, info.clone());
        Ok(info)
    }

    fn compute_expected(&self, x: &[f64]) -> Result<PointInfo> {
        let glm = self.model.is_glm();
        match &self.source {
            InfoSource::Local(_) => unreachable!(),
            InfoSource::Prior(prior) if glm => {
                let (nu, _, over) = ew_glm_weight_integral(&self.model, prior, x)?;
                if over {
                    self.budget_exceeded.store(true, Ordering::Relaxed);
                }
                Ok(PointInfo::RankOne { nu, h: self.model.formula().predictor(x) })
            }
            InfoSource::Prior(prior) => {
                let r = ew_info_integral(&self.model, prior, x)?;
                if r.budget_exceeded {
                    self.budget_exceeded.store(true, Ordering::Relaxed);
                }
                Ok(PointInfo::Full(r.matrix))
            }
            InfoSource::Sample(sample) if glm => Ok(PointInfo::RankOne {
                nu: ew_glm_weight_sample(&self.model, sample, x)?,
                h: self.model.formula().predictor(x),
            }),
            InfoSource::Sample(sample) => Ok(PointInfo::Full(ew_info_sample(&self.model, sample, x)?)),
        }
    }

    pub fn info_matrix(&self, x: &[f64]) -> Result<InfoMatrix> {
        Ok(self.point_info(x)?.matrix())
    }

    /// Sensitivity `tr(A F_x)` and its gradient in the first `k` coordinates,
    /// where `A = F(xi)^{-1}`. Only available for GLMs under a local or
    /// sample-based parameter.
    pub fn sensitivity_gradient(&self, a: &DMatrix<f64>, x: &[f64], k: usize) -> Option<(f64, Vec<f64>)> {
        let Family::Glm { link } = self.model.family() else {
            return None;
        };
        let thetas: &[Vec<f64>] = match &self.source {
            InfoSource::Local(theta) => std::slice::from_ref(theta),
            InfoSource::Sample(s) => s.rows(),
            InfoSource::Prior(_) => return None,
        };
        let f = self.model.formula();
        let h = f.predictor(x);
        let ah = a * &h;
        let q = h.dot(&ah);
        let dh: Vec<DVector<f64>> = (0..k).map(|j| f.predictor_derivative(x, j)).collect();
        let b = thetas.len() as f64;
        let mut nu = 0.0;
        let mut dnu = vec![0.0; k];
        for theta in thetas {
            let th = DVector::from_column_slice(theta);
            let eta = h.dot(&th);
            nu += glm_weight(link, eta);
            let w1 = glm_weight_derivative(link, eta);
            for j in 0..k {
                dnu[j] += w1 * dh[j].dot(&th);
            }
        }
        nu /= b;
        let grad = (0..k)
            .map(|j| dnu[j] / b * q + 2.0 * nu * dh[j].dot(&ah))
            .collect();
        Some((nu * q, grad))
    }
}

/// `sum_i w_i F(x_i)`.
pub fn design_info(provider: &InfoProvider, xi: &ApproximateDesign) -> Result<InfoMatrix> {
    let p = provider.p();
    let mut m = DMatrix::zeros(p, p);
    for (x, &w) in xi.points.iter().zip(&xi.weights) {
        if w > 0.0 {
            provider.point_info(x)?.add_scaled_to(&mut m, w);
        }
    }
    Ok(m)
}

/// `log |F(xi)|`, `-inf` when singular.
pub fn design_log_det(provider: &InfoProvider, xi: &ApproximateDesign) -> Result<f64> {
    Ok(log_det(&design_info(provider, xi)?))
}

/// `F(xi)^{-1}` as the solution of `p` systems against the identity.
pub fn inverse_info(provider: &InfoProvider, xi: &ApproximateDesign) -> Result<DMatrix<f64>> {
    let m = design_info(provider, xi)?;
    let f = SpdFactor::new(&m)
        .ok_or_else(|| Error::Singular("design information matrix is singular".into()))?;
    let p = m.nrows();
    Ok(f.solve_matrix(&DMatrix::identity(p, p)))
}

/// `d(x, xi) = tr(F(xi)^{-1} F_x)`.
pub fn sensitivity(provider: &InfoProvider, xi: &ApproximateDesign, x: &[f64]) -> Result<f64> {
    let m = design_info(provider, xi)?;
    let f = SpdFactor::new(&m)
        .ok_or_else(|| Error::Singular("design information matrix is singular".into()))?;
    Ok(match &*provider.point_info(x)? {
        PointInfo::RankOne { nu, h } => nu * f.inv_quadratic_form(h),
        PointInfo::Full(fx) => f.solve_matrix(fx).trace(),
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Smallest Euclidean distance between two design points, with the pair
/// (lowest indices on ties). `None` for a single point.
pub fn closest_pair(points: &[Vec<f64>]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = distance(&points[i], &points[j]);
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, i, j));
            }
        }
    }
    best
}

/// Repeatedly merges the closest pair of positive-weight points that are
/// closer than `delta` and share all discrete coordinates, as long as the
/// merged design stays nonsingular. The merged point takes the weight-proportional mean of the
/// continuous coordinates and the summed weight.
pub fn merge_design(
    provider: &InfoProvider,
    space: &DesignSpace,
    xi: &ApproximateDesign,
    delta: f64,
) -> Result<ApproximateDesign> {
    let k = space.n_continuous();
    let mut cur = xi.clone();
    if delta <= 0.0 {
        return Ok(cur);
    }
    loop {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..cur.len() {
            for j in (i + 1)..cur.len() {
                if cur.weights[i] <= 0.0 || cur.weights[j] <= 0.0 || cur.points[i][k..] != cur.points[j][k..] {
                    continue;
                }
                let d = distance(&cur.points[i], &cur.points[j]);
                if d < delta {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut committed = false;
        for &(_, i, j) in &pairs {
            let (wi, wj) = (cur.weights[i], cur.weights[j]);
            let w = wi + wj;
            let mut merged = cur.points[i].clone();
            for c in 0..k {
                let (a, b) = (cur.points[i][c], cur.points[j][c]);
                merged[c] = (a + wj / w * (b - a)).clamp(a.min(b), a.max(b));
            }
            let mut cand = cur.clone();
            cand.points[i] = merged;
            cand.weights[i] = w;
            cand.points.remove(j);
            cand.weights.remove(j);
            if design_log_det(provider, &cand)? > f64::NEG_INFINITY {
                cur = cand;
                committed = true;
                break;
            }
        }
        if !committed {
            return Ok(cur);
        }
    }
}

/// `(|F(num)| / |F(den)|)^{1/p}`.
pub fn relative_efficiency(
    provider: &InfoProvider,
    num: &ApproximateDesign,
    den: &ApproximateDesign,
) -> Result<f64> {
    let ld_den = design_log_det(provider, den)?;
    if ld_den == f64::NEG_INFINITY {
        return Err(Error::Singular("reference design is singular".into()));
    }
    let ld_num = design_log_det(provider, num)?;
    Ok(((ld_num - ld_den) / provider.p() as f64).exp())
}
