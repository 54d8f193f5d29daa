//! Expected Fisher information over a parameter prior (integral-based) or a
//! parameter sample (sample-based).

pub mod cubature;

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cubature::{adaptive_cubature, CubatureResult};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::model::{glm_weight, Family, InfoMatrix, MlmLink, ModelSpec};

pub const DEFAULT_CUBATURE_RELTOL: f64 = 1e-4;
pub const DEFAULT_CUBATURE_MAX_EVALS: usize = 1_000_000;

/// Tabulated one-dimensional density, linearly interpolated and normalized
/// to integrate to one over its span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    points: Vec<f64>,
    values: Vec<f64>,
}

impl DensityTable {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != values.len() {
            return Err(Error::InvalidArgument(
                "density table needs >= 2 points and matching values".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("density table points must increase".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("density values must be finite and >= 0".into()));
        }
        let mass: f64 = points
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum();
        if mass <= 0.0 {
            return Err(Error::InvalidArgument("density table has zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(DensityTable { points, values })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.points[0], *self.points.last().unwrap())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (a, b) = self.span();
        if t < a || t > b {
            return 0.0;
        }
        let i = self.points.partition_point(|&p| p <= t).clamp(1, self.points.len() - 1);
        let (x0, x1) = (self.points[i - 1], self.points[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorDensity {
    /// Independent uniforms on each interval.
    UniformProduct,
    /// Independent components, one table per non-degenerate coordinate
    /// (`None` for coordinates with `lower == upper`).
    Tables(Vec<Option<DensityTable>>),
}

/// Prior supported on a box in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPrior {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub density: PriorDensity,
    pub cubature_reltol: f64,
    pub cubature_max_evals: usize,
}

impl BoxPrior {
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(lower, upper, PriorDensity::UniformProduct)
    }

    /// Coordinates with `lower == upper` are held fixed (point mass).
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, density: PriorDensity) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument("prior bounds must be nonempty and of equal length".into()));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(Error::InvalidArgument(format!(
                    "prior bound {i}: need finite lower <= upper, got [{a}, {b}]"
                )));
            }
        }
        if let PriorDensity::Tables(tables) = &density {
            if tables.len() != lower.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} density tables for {} parameters",
                    tables.len(),
                    lower.len()
                )));
            }
            for (i, t) in tables.iter().enumerate() {
                let degenerate = lower[i] == upper[i];
                match t {
                    Some(t) => {
                        let (a, b) = t.span();
                        if degenerate || (a - lower[i]).abs() > 1e-12 || (b - upper[i]).abs() > 1e-12 {
                            return Err(Error::InvalidArgument(format!(
                                "density table {i} must span [{}, {}]",
                                lower[i], upper[i]
                            )));
                        }
                    }
                    None if !degenerate => {
                        return Err(Error::InvalidArgument(format!("missing density table {i}")))
                    }
                    None => {}
                }
            }
        }
        Ok(BoxPrior {
            lower,
            upper,
            density,
            cubature_reltol: DEFAULT_CUBATURE_RELTOL,
            cubature_max_evals: DEFAULT_CUBATURE_MAX_EVALS,
        })
    }

    pub fn with_cubature(mut self, reltol: f64, max_evals: usize) -> Self {
        self.cubature_reltol = reltol;
        self.cubature_max_evals = max_evals;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn active_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.upper[i] > self.lower[i]).collect()
    }

    /// Joint density over the non-degenerate coordinates.
    pub fn density_at(&self, theta: &[f64]) -> f64 {
        match &self.density {
            PriorDensity::UniformProduct => {
                let inside = (0..self.dim()).all(|i| theta[i] >= self.lower[i] && theta[i] <= self.upper[i]);
                if !inside {
                    return 0.0;
                }
                1.0 / self
                    .active_dims()
                    .iter()
                    .map(|&i| self.upper[i] - self.lower[i])
                    .product::<f64>()
            }
            PriorDensity::Tables(tables) => tables
                .iter()
                .zip(theta)
                .map(|(t, &v)| t.as_ref().map_or(1.0, |t| t.eval(v)))
                .product(),
        }
    }
}

/// Expected information together with the cubature diagnostics.
#[derive(Debug, Clone)]
pub struct EwIntegral {
    pub matrix: InfoMatrix,
    pub evaluations: usize,
    pub budget_exceeded: bool,
}

/// `E[F(x, Theta)]` under a box prior, by adaptive cubature.
///
/// For a GLM the integrand `nu(h^T theta) h h^T` is a scalar multiple of a
/// fixed matrix, so only the scalar is integrated. Otherwise the upper
/// triangle of `F` is integrated as one vector integrand, with entries
/// rescaled by the diagonal at the prior center so components are comparable.
pub fn ew_info_integral(model: &ModelSpec, prior: &BoxPrior, x: &[f64]) -> Result<EwIntegral> {
    let p = model.p();
    if prior.dim() != p {
        return Err(Error::InvalidArgument(format!(
            "prior has {} coordinates, model has p = {p}",
            prior.dim()
        )));
    }
    let active = prior.active_dims();
    if active.is_empty() {
        return Ok(EwIntegral {
            matrix: model.fisher_info(&prior.lower, x)?,
            evaluations: 1,
            budget_exceeded: false,
        });
    }
    let lo: Vec<f64> = active.iter().map(|&i| prior.lower[i]).collect();
    let hi: Vec<f64> = active.iter().map(|&i| prior.upper[i]).collect();
    let mut theta = prior.lower.clone();

    match model.family() {
        Family::Glm { .. } => {
            let h = model.formula().predictor(x);
            let (nu, evaluations, budget_exceeded) = ew_glm_weight_integral(model, prior, x)?;
            Ok(EwIntegral {
                matrix: &h * h.transpose() * nu,
                evaluations,
                budget_exceeded,
            })
        }
        Family::Mlm { link, .. } => {
            if link == MlmLink::Cumulative {
                check_cumulative_corners(model, prior, &active, x)?;
            }
            let center: Vec<f64> = (0..p).map(|i| 0.5 * (prior.lower[i] + prior.upper[i])).collect();
            let scale: Vec<f64> = match model.fisher_info(&center, x) {
                Ok(f) => (0..p)
                    .map(|i| {
                        let d = f[(i, i)].sqrt();
                        if d > 0.0 && d.is_finite() {
                            d
                        } else {
                            1.0
                        }
                    })
                    .collect(),
                Err(_) => vec![1.0; p],
            };
            let n_out = p * (p + 1) / 2;
            let mut failure: Option<Error> = None;
            let r = adaptive_cubature(
                |t, out| {
                    for (slot, &i) in active.iter().enumerate() {
                        theta[i] = t[slot];
                    }
                    let dens = prior.density_at(&theta);
                    match model.fisher_info(&theta, x) {
                        Ok(f) => {
                            let mut k = 0;
                            for i in 0..p {
                                for j in i..p {
                                    out[k] = f[(i, j)] / (scale[i] * scale[j]) * dens;
                                    k += 1;
                                }
                            }
                        }
                        Err(e) => {
                            if failure.is_none() {
                                failure = Some(e);
                            }
                            out.iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                },
                &lo,
                &hi,
                n_out,
                prior.cubature_reltol,
                prior.cubature_max_evals,
            );
            if let Some(e) = failure {
                return Err(match e {
                    Error::InfeasibleParameter(m) => Error::InfeasibleParameter(format!(
                        "prior box contains infeasible parameters ({m}); use sample-based EW instead"
                    )),
                    other => other,
                });
            }
            let mut m = DMatrix::zeros(p, p);
            let mut k = 0;
            for i in 0..p {
                for j in i..p {
                    let v = r.value[k] * scale[i] * scale[j];
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                    k += 1;
                }
            }
            Ok(EwIntegral {
                matrix: m,
                evaluations: r.evaluations,
                budget_exceeded: r.budget_exceeded,
            })
        }
    }
}

/// `E[nu(h(x)^T Theta)]` for a GLM, with the cubature evaluation count and
/// budget flag.
pub fn ew_glm_weight_integral(model: &ModelSpec, prior: &BoxPrior, x: &[f64]) -> Result<(f64, usize, bool)> {
    let Family::Glm { link } = model.family() else {
        return Err(Error::Model("scalar EW weight needs a GLM".into()));
    };
    let p = model.p();
    if prior.dim() != p {
        return Err(Error::InvalidArgument(format!(
            "prior has {} coordinates, model has p = {p}",
            prior.dim()
        )));
    }
    let h = model.formula().predictor(x);
    let active = prior.active_dims();
    let eta_fixed: f64 = (0..p)
        .filter(|i| !active.contains(i))
        .map(|i| h[i] * prior.lower[i])
        .sum();
    if active.is_empty() {
        return Ok((glm_weight(link, eta_fixed), 1, false));
    }
    let lo: Vec<f64> = active.iter().map(|&i| prior.lower[i]).collect();
    let hi: Vec<f64> = active.iter().map(|&i| prior.upper[i]).collect();
    let coef: Vec<f64> = active.iter().map(|&i| h[i]).collect();
    let uniform = prior.density == PriorDensity::UniformProduct;
    let volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut theta = prior.lower.clone();
    let r = adaptive_cubature(
        |t, out| {
            let eta = eta_fixed + coef.iter().zip(t).map(|(c, v)| c * v).sum::<f64>();
            let dens = if uniform {
                1.0 / volume
            } else {
                for (slot, &i) in active.iter().enumerate() {
                    theta[i] = t[slot];
                }
                prior.density_at(&theta)
            };
            out[0] = glm_weight(link, eta) * dens;
        },
        &lo,
        &hi,
        1,
        prior.cubature_reltol,
        prior.cubature_max_evals,
    );
    Ok((r.value[0], r.evaluations, r.budget_exceeded))
}

/// Sample mean of `nu(h(x)^T theta_b)` for a GLM.
pub fn ew_glm_weight_sample(model: &ModelSpec, sample: &ParameterSample, x: &[f64]) -> Result<f64> {
    let Family::Glm { link } = model.family() else {
        return Err(Error::Model("scalar EW weight needs a GLM".into()));
    };
    if sample.dim() != model.p() {
        return Err(Error::Sample(format!(
            "sample has {} columns, model has p = {}",
            sample.dim(),
            model.p()
        )));
    }
    let h = model.formula().predictor(x);
    let weights: Vec<f64> = sample
        .rows()
        .iter()
        .map(|theta| glm_weight(link, h.iter().zip(theta).map(|(a, c)| a * c).sum()))
        .collect();
    Ok(pairwise_sum(&weights) / sample.len() as f64)
}

/// Cumulative feasibility is a set of linear inequalities in theta, so the
/// box is feasible iff every corner is.
fn check_cumulative_corners(model: &ModelSpec, prior: &BoxPrior, active: &[usize], x: &[f64]) -> Result<()> {
    let mut theta = prior.lower.clone();
    for mask in 0u64..(1u64 << active.len()) {
        for (bit, &i) in active.iter().enumerate() {
            theta[i] = if mask >> bit & 1 == 1 { prior.upper[i] } else { prior.lower[i] };
        }
        if let Err(Error::InfeasibleParameter(m)) = model.category_probabilities(&theta, x) {
            return Err(Error::InfeasibleParameter(format!(
                "prior box contains infeasible parameters ({m}); use sample-based EW instead"
            )));
        }
    }
    Ok(())
}

/// A `B x p` matrix of parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSample {
    rows: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
}

impl ParameterSample {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Sample("sample has no rows".into()));
        }
        let p = rows[0].len();
        for (b, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Sample(format!("row {b} has {} values, expected {p}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Sample(format!("row {b} has a non-finite value")));
            }
        }
        Ok(ParameterSample { rows, names: None })
    }

    /// Reads a CSV with one header row naming the coefficients and one row per
    /// parameter vector. Every row must have exactly `p` fields.
    pub fn from_csv_reader<R: Read>(reader: R, p: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Sample(e.to_string()))?.clone();
        if headers.len() != p {
            return Err(Error::Sample(format!(
                "header has {} columns, model has p = {p}",
                headers.len()
            )));
        }
        let mut rows = Vec::new();
        for (b, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Sample(format!("data row {b}: {e}")))?;
            if rec.len() != p {
                return Err(Error::Sample(format!(
                    "data row {b} has {} columns, expected {p}",
                    rec.len()
                )));
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Sample(format!("data row {b}: `{f}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let mut s = Self::new(rows)?;
        s.names = Some(headers.iter().map(str::to_string).collect());
        Ok(s)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, p: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Sample(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file, p)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }
}

fn pairwise_matrix_sum(ms: &[InfoMatrix]) -> InfoMatrix {
    if ms.len() <= 8 {
        let mut acc = ms[0].clone();
        for m in &ms[1..] {
            acc += m;
        }
        return acc;
    }
    let mid = ms.len() / 2;
    pairwise_matrix_sum(&ms[..mid]) + pairwise_matrix_sum(&ms[mid..])
}

/// Sample mean of `F(x, theta_b)` over the rows of `sample`.
pub fn ew_info_sample(model: &ModelSpec, sample: &ParameterSample, x: &[f64]) -> Result<InfoMatrix> {
    if sample.dim() != model.p() {
        return Err(Error::Sample(format!(
            "sample has {} columns, model has p = {}",
            sample.dim(),
            model.p()
        )));
    }
    if model.is_glm() {
        let h = model.formula().predictor(x);
        return Ok(&h * h.transpose() * ew_glm_weight_sample(model, sample, x)?);
    }
    let b = sample.len() as f64;
    let mats = sample
        .rows()
        .iter()
        .enumerate()
        .map(|(row, theta)| {
            model.fisher_info(theta, x).map_err(|e| match e {
                Error::InfeasibleParameter(m) => {
                    Error::InfeasibleParameter(format!("sample row {row}: {m}"))
                }
                Error::DegenerateProbability(m) => {
                    Error::DegenerateProbability(format!("sample row {row}: {m}"))
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_matrix_sum(&mats) / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_formula, DesignSpace, Factor, GlmLink, MlmLink};

    fn logit_line() -> ModelSpec {
        let s = DesignSpace::new(vec![Factor::continuous("x", -1.0, 1.0)]).unwrap();
        ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x"], &s).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_box_is_local() {
        let m = logit_line();
        let prior = BoxPrior::uniform(vec![0.2, -0.5], vec![0.2, -0.5]).unwrap();
        let ew = ew_info_integral(&m, &prior, &[0.7]).unwrap();
        let local = m.fisher_info(&[0.2, -0.5], &[0.7]).unwrap();
        assert!((ew.matrix - local).norm() < 1e-15);
    }

    #[test]
    fn partially_degenerate_box() {
        let m = logit_line();
        let prior = BoxPrior::uniform(vec![0.2, -1.0], vec![0.2, 1.0]).unwrap();
        let ew = ew_info_integral(&m, &prior, &[0.0]).unwrap();
        // x = 0: eta = 0.2 regardless of the slope
        let local = m.fisher_info(&[0.2, 0.0], &[0.0]).unwrap();
        assert!((ew.matrix - local).norm() < 1e-12);
    }

    #[test]
    fn mlm_integral_matches_sample_mean_of_constant() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let f = parse_formula(&["1", "1 + x", "0"], &s).unwrap();
        let m = ModelSpec::mlm(3, MlmLink::Baseline, f).unwrap();
        // the x-coefficient of row 2 does not matter at x = 0
        let prior = BoxPrior::uniform(vec![0.1, -0.3, -1.0], vec![0.1, -0.3, 1.0]).unwrap();
        let ew = ew_info_integral(&m, &prior, &[0.0]).unwrap();
        let local = m.fisher_info(&[0.1, -0.3, 0.0], &[0.0]).unwrap();
        assert!((ew.matrix - &local).norm() < 1e-12 * local.norm());
    }

    #[test]
    fn cumulative_infeasible_box_errors() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let f = parse_formula(&["1", "1", "0"], &s).unwrap();
        let m = ModelSpec::mlm(3, MlmLink::Cumulative, f).unwrap();
        let prior = BoxPrior::uniform(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = ew_info_integral(&m, &prior, &[0.5]);
        assert!(matches!(r, Err(Error::InfeasibleParameter(_))));
    }

    #[test]
    fn sample_mean_basic() {
        let m = logit_line();
        let one = ParameterSample::new(vec![vec![0.3, 1.1]]).unwrap();
        let two = ParameterSample::new(vec![vec![0.3, 1.1], vec![0.3, 1.1]]).unwrap();
        let local = m.fisher_info(&[0.3, 1.1], &[0.4]).unwrap();
        assert!((ew_info_sample(&m, &one, &[0.4]).unwrap() - &local).norm() < 1e-15);
        assert!((ew_info_sample(&m, &two, &[0.4]).unwrap() - &local).norm() < 1e-15);
    }

    #[test]
    fn sample_row_errors_name_the_row() {
        let s = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let f = parse_formula(&["1", "1", "0"], &s).unwrap();
        let m = ModelSpec::mlm(3, MlmLink::Cumulative, f).unwrap();
        let sample = ParameterSample::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        match ew_info_sample(&m, &sample, &[0.0]) {
            Err(Error::InfeasibleParameter(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_parsing() {
        let text = "a,b\n1.0,2.0\n-3.5,4e-2\n";
        let s = ParameterSample::from_csv_reader(text.as_bytes(), 2).unwrap();
        assert_eq!(s.rows(), &[vec![1.0, 2.0], vec![-3.5, 0.04]]);
        assert_eq!(s.names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert!(ParameterSample::from_csv_reader("a,b\n1,2,3\n".as_bytes(), 2).is_err());
        assert!(ParameterSample::from_csv_reader("a,b,c\n1,2,3\n".as_bytes(), 2).is_err());
        assert!(ParameterSample::from_csv_reader("a,b\n1,x\n".as_bytes(), 2).is_err());
        assert!(ParameterSample::from_csv_reader("a,b\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn density_table_normalizes() {
        let t = DensityTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert!((t.eval(1.0) - 1.0).abs() < 1e-15);
        assert!((t.eval(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(t.eval(2.5), 0.0);
        let prior = BoxPrior::new(
            vec![0.0, 5.0],
            vec![2.0, 5.0],
            PriorDensity::Tables(vec![Some(t), None]),
        )
        .unwrap();
        let r = adaptive_cubature(
            |v, out| out[0] = prior.density_at(&[v[0], 5.0]),
            &[0.0],
            &[2.0],
            1,
            1e-10,
            100_000,
        );
        assert!((r.value[0] - 1.0).abs() < 1e-8);
    }
}
