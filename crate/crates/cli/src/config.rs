//! Run configuration: the JSON schema, dotted-path overrides and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use forlion_core::expectation::{DensityTable, DEFAULT_CUBATURE_MAX_EVALS, DEFAULT_CUBATURE_RELTOL};
use forlion_core::rounding::Allocation;
use forlion_core::{
    parse_formula, ApproximateDesign, BoxPrior, DesignSpace, Factor, ForLionConfig, GlmLink, InfoProvider, MlmLink,
    ModelSpec, ParameterSample, PriorDensity, RoundingConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Design,
    EwDesign,
    Round,
    Efficiency,
    Info,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Design => "design",
            Task::EwDesign => "ew-design",
            Task::Round => "round",
            Task::Efficiency => "efficiency",
            Task::Info => "info",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Glm,
    Mlm,
}

/// Which ForLion variant to run. `auto` picks the GLM-adapted one for GLMs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Auto,
    General,
    Glm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub family: Family,
    pub link: String,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<usize>,
    pub formula: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorBlock {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableBlock {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityBlock {
    /// Only `"uniform-product"` is accepted.
    Named(String),
    /// One entry per coefficient; `null` means uniform on that coordinate.
    Tables { tables: Vec<Option<TableBlock>> },
}

impl Default for DensityBlock {
    fn default() -> Self {
        DensityBlock::Named("uniform-product".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub density: DensityBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubature_reltol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubature_max_evals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorBlock>,
    /// CSV path, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundingBlock {
    pub delta2: f64,
    /// Grid step keyed by continuous factor name.
    pub grid: BTreeMap<String, f64>,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(default)]
    pub allocation: Allocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelBlock,
    pub factors: Vec<FactorBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete_list: Option<Vec<Vec<f64>>>,
    pub parameters: ParametersBlock,
    #[serde(default)]
    pub algorithm: ForLionConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<RoundingBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_design: Option<DesignBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

/// A problem with the configuration, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Parses `key=value` where `key` is a dotted path. The value is read as
/// JSON when it parses, otherwise kept as a string.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value), Diagnostic> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Diagnostic::new(text, "override must look like key=value"))?;
    let key = key.trim_start_matches("--");
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Diagnostic::new(key, "empty path component in override"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.split('.').map(String::from).collect(), value))
}

/// Sets `path` inside `root`, creating objects as needed. Numeric components
/// index into existing arrays.
pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<(), Diagnostic> {
    let key = path.join(".");
    let mut cur = root;
    for (depth, part) in path.iter().enumerate() {
        let last = depth + 1 == path.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Diagnostic::new(&key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| Diagnostic::new(&key, format!("index {idx} out of range (length {len})")))?
            }
            Value::Object(map) => map.entry(part.clone()).or_insert_with(|| {
                if last {
                    Value::Null
                } else {
                    Value::Object(Default::default())
                }
            }),
            Value::Null => {
                *cur = Value::Object(Default::default());
                let Value::Object(map) = cur else { unreachable!() };
                map.entry(part.clone()).or_insert(Value::Null)
            }
            _ => return Err(Diagnostic::new(&key, format!("`{part}` indexes into a scalar"))),
        };
    }
    *cur = value;
    Ok(())
}

/// A configuration file with CLI overrides applied, ready to parse.
#[derive(Debug, Clone)]
pub struct RawConfig {
    pub value: Value,
    pub base_dir: PathBuf,
}

impl RawConfig {
    pub fn from_path(path: &Path) -> Result<Self, Diagnostic> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Diagnostic::new("config", format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Diagnostic::new("config", format!("{}: invalid JSON: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(RawConfig { value, base_dir })
    }

    pub fn from_value(value: Value, base_dir: impl Into<PathBuf>) -> Self {
        RawConfig {
            value,
            base_dir: base_dir.into(),
        }
    }

    pub fn apply(&mut self, overrides: &[String]) -> Result<(), Diagnostic> {
        for text in overrides {
            let (path, value) = parse_override(text)?;
            apply_override(&mut self.value, &path, value)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the effective configuration in canonical (key-sorted, compact) JSON.
    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(&self.value).expect("JSON values serialize");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn parse(&self) -> Result<RunConfig, Diagnostic> {
        serde_path_to_error::deserialize(&self.value).map_err(|e| {
            let key = e.path().to_string();
            Diagnostic::new(if key == "." { "config".into() } else { key }, e.into_inner().to_string())
        })
    }
}

/// Everything a run needs, built from a validated configuration.
pub struct Prepared {
    pub config: RunConfig,
    pub task: Task,
    pub space: DesignSpace,
    pub provider: InfoProvider,
    pub glm_adapted: bool,
    pub rounding: Option<RoundingConfig>,
    pub design: Option<ApproximateDesign>,
    pub compare_design: Option<ApproximateDesign>,
}

fn build_space(cfg: &RunConfig, diags: &mut Vec<Diagnostic>) -> Option<DesignSpace> {
    let mut factors = Vec::new();
    for (i, f) in cfg.factors.iter().enumerate() {
        let key = format!("factors[{i}]");
        match f.kind.as_str() {
            "continuous" => match (f.lower, f.upper, &f.levels) {
                (Some(a), Some(b), None) if a.is_finite() && b.is_finite() && a < b => {
                    factors.push(Factor::continuous(&f.name, a, b))
                }
                (_, _, Some(_)) => diags.push(Diagnostic::new(key, "a continuous factor takes lower/upper, not levels")),
                _ => diags.push(Diagnostic::new(key, "a continuous factor needs finite lower < upper")),
            },
            "discrete" => match (&f.levels, f.lower, f.upper) {
                (Some(levels), None, None) if !levels.is_empty() => {
                    factors.push(Factor::discrete(&f.name, levels.clone()))
                }
                (Some(_), _, _) if f.lower.is_some() || f.upper.is_some() => {
                    diags.push(Diagnostic::new(key, "a discrete factor takes levels, not lower/upper"))
                }
                _ => diags.push(Diagnostic::new(key, "a discrete factor needs a nonempty `levels` list")),
            },
            other => diags.push(Diagnostic::new(
                format!("{key}.type"),
                format!("unknown factor type `{other}` (continuous or discrete)"),
            )),
        }
    }
    if !diags.is_empty() {
        return None;
    }
    match DesignSpace::with_discrete_list(factors, cfg.discrete_list.clone()) {
        Ok(s) => Some(s),
        Err(e) => {
            let key = if e.to_string().contains("fixed discrete") {
                "discrete_list"
            } else {
                "factors"
            };
            diags.push(Diagnostic::new(key, e.to_string()));
            None
        }
    }
}

fn build_model(cfg: &RunConfig, space: &DesignSpace, diags: &mut Vec<Diagnostic>) -> Option<ModelSpec> {
    let m = &cfg.model;
    let before = diags.len();
    match parse_formula(&m.formula, space) {
        Err(forlion_core::Error::Formula { row, message }) => {
            diags.push(Diagnostic::new(format!("model.formula[{row}]"), message))
        }
        Err(e) => diags.push(Diagnostic::new("model.formula", e.to_string())),
        Ok(_) => {}
    }
    let link = Value::String(m.link.clone());
    let model = match m.family {
        Family::Glm => {
            if m.categories.is_some() {
                diags.push(Diagnostic::new("model.J", "J applies to family mlm only"));
            }
            if m.formula.len() != 1 {
                diags.push(Diagnostic::new(
                    "model.formula",
                    format!("a GLM takes exactly one formula row, got {}", m.formula.len()),
                ));
            }
            let link: Option<GlmLink> = serde_json::from_value(link).ok();
            if link.is_none() {
                diags.push(Diagnostic::new(
                    "model.link",
                    format!(
                        "unknown GLM link `{}` (identity, logit, probit, cloglog, loglog, cauchit, log)",
                        m.link
                    ),
                ));
            }
            if diags.len() > before {
                return None;
            }
            ModelSpec::glm(link?, parse_formula(&m.formula, space).ok()?)
        }
        Family::Mlm => {
            let link: Option<MlmLink> = serde_json::from_value(link).ok();
            if link.is_none() {
                diags.push(Diagnostic::new(
                    "model.link",
                    format!(
                        "unknown MLM link `{}` (baseline, cumulative, adjacent, continuation)",
                        m.link
                    ),
                ));
            }
            match m.categories {
                Some(j) if j >= 2 => {
                    if m.formula.len() != j {
                        diags.push(Diagnostic::new(
                            "model.formula",
                            format!("J = {j} needs {j} formula rows (the last usually \"0\"), got {}", m.formula.len()),
                        ));
                    }
                }
                _ => diags.push(Diagnostic::new("model.J", "family mlm needs J >= 2")),
            }
            if diags.len() > before {
                return None;
            }
            ModelSpec::mlm(m.categories?, link?, parse_formula(&m.formula, space).ok()?)
        }
    };
    match model {
        Ok(model) => Some(model),
        Err(e) => {
            diags.push(Diagnostic::new("model", e.to_string()));
            None
        }
    }
}

fn build_prior(block: &PriorBlock, p: usize, diags: &mut Vec<Diagnostic>) -> Option<BoxPrior> {
    let before = diags.len();
    if block.lower.len() != p || block.upper.len() != p {
        diags.push(Diagnostic::new(
            "parameters.prior",
            format!(
                "lower/upper have {} and {} entries; the model has {p} coefficients",
                block.lower.len(),
                block.upper.len()
            ),
        ));
        return None;
    }
    let bad: Vec<usize> = (0..p)
        .filter(|&i| !(block.lower[i].is_finite() && block.upper[i].is_finite() && block.lower[i] < block.upper[i]))
        .collect();
    if !bad.is_empty() {
        diags.push(Diagnostic::new(
            "parameters.prior.lower",
            format!("lower must be finite and below upper; violated at index {bad:?}"),
        ));
    }
    let density = match &block.density {
        DensityBlock::Named(name) if name == "uniform-product" => PriorDensity::UniformProduct,
        DensityBlock::Named(name) => {
            diags.push(Diagnostic::new(
                "parameters.prior.density",
                format!("unknown density `{name}` (uniform-product or {{\"tables\": [...]}})"),
            ));
            PriorDensity::UniformProduct
        }
        DensityBlock::Tables { tables } => {
            if tables.len() != p {
                diags.push(Diagnostic::new(
                    "parameters.prior.density.tables",
                    format!("{} tables for {p} coefficients", tables.len()),
                ));
            }
            let mut out = Vec::new();
            for (i, t) in tables.iter().enumerate() {
                out.push(match t {
                    None => None,
                    Some(t) => match DensityTable::new(t.points.clone(), t.values.clone()) {
                        Ok(t) => Some(t),
                        Err(e) => {
                            diags.push(Diagnostic::new(format!("parameters.prior.density.tables[{i}]"), e.to_string()));
                            None
                        }
                    },
                });
            }
            PriorDensity::Tables(out)
        }
    };
    let reltol = block.cubature_reltol.unwrap_or(DEFAULT_CUBATURE_RELTOL);
    if !(reltol > 0.0 && reltol < 1.0) {
        diags.push(Diagnostic::new("parameters.prior.cubature_reltol", "must lie in (0, 1)"));
    }
    let max_evals = block.cubature_max_evals.unwrap_or(DEFAULT_CUBATURE_MAX_EVALS);
    if max_evals == 0 {
        diags.push(Diagnostic::new("parameters.prior.cubature_max_evals", "must be positive"));
    }
    if diags.len() > before {
        return None;
    }
    match BoxPrior::new(block.lower.clone(), block.upper.clone(), density) {
        Ok(prior) => Some(prior.with_cubature(reltol, max_evals)),
        Err(e) => {
            diags.push(Diagnostic::new("parameters.prior", e.to_string()));
            None
        }
    }
}

fn build_provider(
    cfg: &RunConfig,
    model: ModelSpec,
    base_dir: &Path,
    diags: &mut Vec<Diagnostic>,
) -> Option<InfoProvider> {
    let p = model.p();
    let par = &cfg.parameters;
    let given = [par.theta.is_some(), par.prior.is_some(), par.samples.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        diags.push(Diagnostic::new(
            "parameters",
            format!("give exactly one of theta, prior, samples ({given} given)"),
        ));
        return None;
    }
    let res = if let Some(theta) = &par.theta {
        if theta.len() != p {
            diags.push(Diagnostic::new(
                "parameters.theta",
                format!("{} values for {p} coefficients", theta.len()),
            ));
            return None;
        }
        InfoProvider::local(model, theta.clone()).map_err(|e| Diagnostic::new("parameters.theta", e.to_string()))
    } else if let Some(prior) = &par.prior {
        let prior = build_prior(prior, p, diags)?;
        InfoProvider::prior(model, prior).map_err(|e| Diagnostic::new("parameters.prior", e.to_string()))
    } else {
        let rel = par.samples.as_ref().expect("one mode is set");
        let path = base_dir.join(rel);
        ParameterSample::from_csv_path(&path, p)
            .and_then(|s| InfoProvider::sample(model, s))
            .map_err(|e| Diagnostic::new("parameters.samples", format!("{}: {e}", path.display())))
    };
    res.map_err(|d| diags.push(d)).ok()
}

fn build_design(
    block: &DesignBlock,
    key: &str,
    space: &DesignSpace,
    diags: &mut Vec<Diagnostic>,
) -> Option<ApproximateDesign> {
    for (i, x) in block.points.iter().enumerate() {
        if !space.contains(x) {
            diags.push(Diagnostic::new(
                format!("{key}.points[{i}]"),
                format!("{x:?} is outside the design region"),
            ));
            return None;
        }
    }
    ApproximateDesign::new(block.points.clone(), block.weights.clone())
        .map_err(|e| diags.push(Diagnostic::new(key, e.to_string())))
        .ok()
}

/// Static validation plus construction of the model, space and information source.
/// `task` overrides the configuration's own `task` field.
pub fn prepare(raw: &RawConfig, task: Option<Task>) -> Result<Prepared, Vec<Diagnostic>> {
    let cfg = raw.parse().map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        diags.push(Diagnostic::new(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
        ));
    }
    let task = match task.or(cfg.task) {
        Some(t) => t,
        None => {
            diags.push(Diagnostic::new("task", "no task given in the config or on the command line"));
            Task::Design
        }
    };
    if raw.value.pointer("/algorithm/seed").is_some() {
        diags.push(Diagnostic::new("algorithm.seed", "set the top-level `seed` instead"));
    }
    if let Err(e) = cfg.algorithm.validate() {
        diags.push(Diagnostic::new("algorithm", e.to_string()));
    }
    if cfg.mode == Mode::Glm && cfg.model.family == Family::Mlm {
        diags.push(Diagnostic::new("mode", "the GLM-adapted algorithm needs family glm"));
    }

    let Some(space) = build_space(&cfg, &mut diags) else {
        return Err(diags);
    };
    let Some(model) = build_model(&cfg, &space, &mut diags) else {
        return Err(diags);
    };
    let glm_adapted = match cfg.mode {
        Mode::Auto => model.is_glm(),
        Mode::General => false,
        Mode::Glm => true,
    };
    let provider = build_provider(&cfg, model, &raw.base_dir, &mut diags);

    let param_mode = if cfg.parameters.theta.is_some() { "theta" } else { "prior/samples" };
    match task {
        Task::Design if cfg.parameters.theta.is_none() => diags.push(Diagnostic::new(
            "parameters",
            "task design needs parameters.theta; use ew-design for a prior or samples",
        )),
        Task::EwDesign if cfg.parameters.theta.is_some() => diags.push(Diagnostic::new(
            "parameters",
            format!("task ew-design needs parameters.prior or parameters.samples, got {param_mode}"),
        )),
        _ => {}
    }

    let rounding = match (&cfg.rounding, task) {
        (None, Task::Round) => {
            diags.push(Diagnostic::new("rounding", "task round needs a rounding block"));
            None
        }
        (Some(r), _) => {
            let names: Vec<&str> = space.factors()[..space.n_continuous()]
                .iter()
                .map(|f| f.name.as_str())
                .collect();
            let mut grid = Vec::new();
            for name in &names {
                match r.grid.get(*name) {
                    Some(&s) if s > 0.0 && s.is_finite() => grid.push(s),
                    Some(_) => diags.push(Diagnostic::new(format!("rounding.grid.{name}"), "step must be positive")),
                    None => diags.push(Diagnostic::new(format!("rounding.grid.{name}"), "missing grid step")),
                }
            }
            for key in r.grid.keys() {
                if !names.contains(&key.as_str()) {
                    diags.push(Diagnostic::new(
                        format!("rounding.grid.{key}"),
                        "not a continuous factor",
                    ));
                }
            }
            if !(r.delta2 >= 0.0 && r.delta2.is_finite()) {
                diags.push(Diagnostic::new("rounding.delta2", "must be >= 0"));
            }
            if r.n == 0 {
                diags.push(Diagnostic::new("rounding.N", "must be at least 1"));
            }
            Some(RoundingConfig {
                delta2: r.delta2,
                grid,
                n: r.n,
                allocation: r.allocation,
            })
        }
        (None, _) => None,
    };

    let design = cfg.design.as_ref().and_then(|d| build_design(d, "design", &space, &mut diags));
    let compare_design = cfg
        .compare_design
        .as_ref()
        .and_then(|d| build_design(d, "compare_design", &space, &mut diags));
    if task == Task::Efficiency {
        if cfg.design.is_none() {
            diags.push(Diagnostic::new("design", "task efficiency needs a design"));
        }
        if cfg.compare_design.is_none() {
            diags.push(Diagnostic::new("compare_design", "task efficiency needs a compare_design"));
        }
    }
    if task == Task::Info {
        match &cfg.point {
            None => diags.push(Diagnostic::new("point", "task info needs a point")),
            Some(x) if !space.contains(x) => {
                diags.push(Diagnostic::new("point", format!("{x:?} is outside the design region")))
            }
            _ => {}
        }
    }

    match provider {
        Some(provider) if diags.is_empty() => Ok(Prepared {
            config: cfg,
            task,
            space,
            provider,
            glm_adapted,
            rounding,
            design,
            compare_design,
        }),
        _ => Err(diags),
    }
}

/// Diagnostics for a configuration without running it. Empty means runnable.
pub fn validate(raw: &RawConfig, task: Option<Task>) -> Vec<Diagnostic> {
    match prepare(raw, task) {
        Ok(_) => Vec::new(),
        Err(d) => d,
    }
}
