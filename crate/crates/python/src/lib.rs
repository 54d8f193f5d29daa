//! Python bindings: design spaces, models, information providers, the design
//! optimizer, rounding and efficiency.

use forlion_core::{
    design_log_det, ew_forlion_optimize, forlion_optimize, parse_formula, relative_efficiency, round_design,
    Allocation, ApproximateDesign, BoxPrior, DesignSpace, Error, Factor, ForLionConfig, GlmLink, InfoProvider,
    MlmLink, ModelSpec, ParameterSample, RoundingConfig,
};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rows(m: &forlion_core::model::InfoMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Round-trips a serde value through Python's `json` module.
fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_dict<T: serde::de::DeserializeOwned>(py: Python<'_>, v: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (v,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Factor space. Each factor is a dict with `name` and either `lower`/`upper`
/// (continuous) or `levels` (discrete).
#[pyclass(name = "DesignSpace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpace(DesignSpace);

#[pymethods]
impl PySpace {
    #[new]
    fn new(factors: Vec<Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut out = Vec::with_capacity(factors.len());
        for f in factors {
            let name: String = f
                .get_item("name")?
                .ok_or_else(|| PyValueError::new_err("factor needs a name"))?
                .extract()?;
            if let Some(levels) = f.get_item("levels")? {
                out.push(Factor::discrete(name, levels.extract()?));
            } else {
                let bound = |k: &str| -> PyResult<f64> {
                    f.get_item(k)?
                        .ok_or_else(|| PyValueError::new_err(format!("factor `{name}` needs `{k}` or `levels`")))?
                        .extract()
                };
                out.push(Factor::continuous(name.clone(), bound("lower")?, bound("upper")?));
            }
        }
        DesignSpace::new(out).map(PySpace).map_err(to_py)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.names().iter().map(|s| s.to_string()).collect()
    }
}

#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(ModelSpec);

#[pymethods]
impl PyModel {
    /// GLM with one formula row.
    #[staticmethod]
    fn glm(space: &PySpace, link: &str, formula: &str) -> PyResult<Self> {
        let link: GlmLink = link.parse().map_err(to_py)?;
        let f = parse_formula(&[formula], &space.0).map_err(to_py)?;
        ModelSpec::glm(link, f).map(PyModel).map_err(to_py)
    }

    /// Multinomial logistic model with `categories` response categories and
    /// `categories` formula rows (the last one for the shared effects, or "0").
    #[staticmethod]
    fn mlm(space: &PySpace, link: &str, categories: usize, formula: Vec<String>) -> PyResult<Self> {
        let link: MlmLink = link.parse().map_err(to_py)?;
        let f = parse_formula(&formula, &space.0).map_err(to_py)?;
        ModelSpec::mlm(categories, link, f).map(PyModel).map_err(to_py)
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    fn fisher_info(&self, theta: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.0.fisher_info(&theta, &x).map(|m| rows(&m)).map_err(to_py)
    }
}

/// Source of per-point information matrices: a fixed parameter vector, a
/// box prior (integral EW) or a parameter sample (sample EW).
#[pyclass(name = "InfoProvider")]
struct PyProvider(InfoProvider);

#[pymethods]
impl PyProvider {
    #[staticmethod]
    fn local(model: &PyModel, theta: Vec<f64>) -> PyResult<Self> {
        InfoProvider::local(model.0.clone(), theta).map(PyProvider).map_err(to_py)
    }

    /// Uniform prior on the box `[lower, upper]`.
    #[staticmethod]
    #[pyo3(signature = (model, lower, upper, cubature_reltol=None, cubature_max_evals=None))]
    fn prior(
        model: &PyModel,
        lower: Vec<f64>,
        upper: Vec<f64>,
        cubature_reltol: Option<f64>,
        cubature_max_evals: Option<usize>,
    ) -> PyResult<Self> {
        let prior = BoxPrior::uniform(lower, upper).map_err(to_py)?;
        let (reltol, max_evals) = (
            cubature_reltol.unwrap_or(prior.cubature_reltol),
            cubature_max_evals.unwrap_or(prior.cubature_max_evals),
        );
        let prior = prior.with_cubature(reltol, max_evals);
        InfoProvider::prior(model.0.clone(), prior).map(PyProvider).map_err(to_py)
    }

    #[staticmethod]
    fn sample(model: &PyModel, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let s = ParameterSample::new(rows).map_err(to_py)?;
        InfoProvider::sample(model.0.clone(), s).map(PyProvider).map_err(to_py)
    }

    #[getter]
    fn p(&self) -> usize {
        self.0.p()
    }

    #[getter]
    fn budget_exceeded(&self) -> bool {
        self.0.budget_exceeded()
    }

    fn info_matrix(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.0.info_matrix(&x).map(|m| rows(&m)).map_err(to_py)
    }
}

#[pyclass(name = "Design", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDesign(ApproximateDesign);

#[pymethods]
impl PyDesign {
    #[new]
    fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<Self> {
        ApproximateDesign::new(points, weights).map(PyDesign).map_err(to_py)
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Design(points={:?}, weights={:?})", self.0.points, self.0.weights)
    }
}

/// Runs the design optimizer. `config` takes the same keys as the CLI's
/// `algorithm` block. Returns a dict with `design` replaced by a `Design`.
#[pyfunction]
#[pyo3(signature = (space, provider, config=None, glm_adapted=false))]
fn optimize<'py>(
    py: Python<'py>,
    space: &PySpace,
    provider: &PyProvider,
    config: Option<Bound<'py, PyDict>>,
    glm_adapted: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ForLionConfig = match config {
        Some(c) => from_dict(py, c.as_any())?,
        None => ForLionConfig::default(),
    };
    let r = if provider.0.is_expected() {
        ew_forlion_optimize(&space.0, &provider.0, &cfg, glm_adapted)
    } else {
        forlion_optimize(&space.0, &provider.0, &cfg, glm_adapted)
    }
    .map_err(to_py)?;
    let out = to_dict(py, &r)?;
    out.set_item("design", PyDesign(r.design))?;
    Ok(out)
}

#[pyfunction]
fn log_det(provider: &PyProvider, design: &PyDesign) -> PyResult<f64> {
    design_log_det(&provider.0, &design.0).map_err(to_py)
}

/// `(|F(design)| / |F(reference)|)^(1/p)`.
#[pyfunction]
fn efficiency(provider: &PyProvider, design: &PyDesign, reference: &PyDesign) -> PyResult<f64> {
    relative_efficiency(&provider.0, &design.0, &reference.0).map_err(to_py)
}

/// Exact design with `n` runs. `grid` holds one step per continuous factor;
/// `allocation` is "greedy" or "largest_remainder".
#[pyfunction]
#[pyo3(signature = (provider, space, design, delta2, grid, n, allocation="greedy"))]
fn round<'py>(
    py: Python<'py>,
    provider: &PyProvider,
    space: &PySpace,
    design: &PyDesign,
    delta2: f64,
    grid: Vec<f64>,
    n: u64,
    allocation: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let allocation: Allocation = serde_json::from_value(serde_json::Value::String(allocation.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown allocation `{allocation}`")))?;
    let cfg = RoundingConfig { allocation, ..RoundingConfig::new(delta2, grid, n) };
    let r = round_design(&provider.0, &space.0, &design.0, &cfg).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("points", PyList::new(py, &r.exact.points)?)?;
    out.set_item("counts", r.exact.counts)?;
    out.set_item("log_det", r.log_det)?;
    out.set_item("rel_efficiency", r.rel_efficiency)?;
    Ok(out.into_any())
}

#[pymodule]
fn forlion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyProvider>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(log_det, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(round, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
