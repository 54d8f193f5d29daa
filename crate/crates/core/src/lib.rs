//! Locally and EW D-optimal designs for generalized linear models and
//! multinomial logistic models over mixed continuous/discrete factor spaces.

pub mod design;
pub mod engine;
pub mod error;
pub mod expectation;
pub mod liftone;
pub mod linalg;
pub mod model;
pub mod rounding;

pub use design::{
    design_info, design_log_det, merge_design, relative_efficiency, sensitivity, ApproximateDesign,
    ExactDesign, InfoProvider, InfoSource,
};
pub use engine::{ew_forlion_optimize, forlion_optimize, ForLionConfig, ForLionResult};
pub use error::{Error, Result};
pub use expectation::{BoxPrior, ParameterSample, PriorDensity};
pub use liftone::{liftone_optimize, LiftOneConfig, PathSolver};
pub use model::{parse_formula, DesignSpace, Factor, FactorKind, GlmLink, MlmLink, ModelSpec};
pub use rounding::{round_design, Allocation, RoundingConfig, RoundingResult};
