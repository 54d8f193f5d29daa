//! Statistical models: GLMs and multinomial logistic models with monomial predictors.

pub mod formula;
pub mod links;
pub mod space;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use formula::{parse_formula, PredictorFormula, Term};
pub use links::{glm_weight, mlm_probabilities, GlmLink, MlmLink};
pub use space::{DesignSpace, Factor, FactorKind};

use crate::error::{Error, Result};

/// Symmetric positive semidefinite `p x p` information matrix.
pub type InfoMatrix = DMatrix<f64>;

/// Category probabilities below this make the multinomial information undefined.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Glm { link: GlmLink },
    Mlm { categories: usize, link: MlmLink },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    family: Family,
    formula: PredictorFormula,
}

impl ModelSpec {
    pub fn glm(link: GlmLink, formula: PredictorFormula) -> Result<Self> {
        if formula.n_rows() != 1 {
            return Err(Error::Model(format!(
                "a GLM formula has exactly one row, got {}",
                formula.n_rows()
            )));
        }
        Ok(ModelSpec {
            family: Family::Glm { link },
            formula,
        })
    }

    pub fn mlm(categories: usize, link: MlmLink, formula: PredictorFormula) -> Result<Self> {
        if categories < 2 {
            return Err(Error::Model("J must be at least 2".into()));
        }
        if formula.n_rows() != categories {
            return Err(Error::Model(format!(
                "an MLM with J = {categories} needs {categories} formula rows, got {}",
                formula.n_rows()
            )));
        }
        Ok(ModelSpec {
            family: Family::Mlm { categories, link },
            formula,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn formula(&self) -> &PredictorFormula {
        &self.formula
    }

    /// Number of parameters.
    pub fn p(&self) -> usize {
        self.formula.n_coefficients()
    }

    pub fn is_glm(&self) -> bool {
        matches!(self.family, Family::Glm { .. })
    }

    /// `h(x)` for a GLM (1 x p) or the J x p model matrix for an MLM.
    pub fn eval_predictor(&self, x: &[f64]) -> DMatrix<f64> {
        self.formula.model_matrix(x)
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, model has p = {}",
                theta.len(),
                self.p()
            )));
        }
        Ok(())
    }

    /// Information of a single observation at `x`.
    pub fn fisher_info(&self, theta: &[f64], x: &[f64]) -> Result<InfoMatrix> {
        match self.family {
            Family::Glm { .. } => fisher_info_glm(self, theta, x),
            Family::Mlm { .. } => fisher_info_mlm(self, theta, x),
        }
    }

    /// GLM shortcut: the information is `weight * h h^T`.
    pub fn glm_weight_and_predictor(&self, theta: &[f64], x: &[f64]) -> Option<(f64, DVector<f64>)> {
        let Family::Glm { link } = self.family else {
            return None;
        };
        let h = self.formula.predictor(x);
        let eta: f64 = h.iter().zip(theta).map(|(a, b)| a * b).sum();
        Some((glm_weight(link, eta), h))
    }

    /// Category probabilities at `(x, theta)` for an MLM.
    pub fn category_probabilities(&self, theta: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        let Family::Mlm { link, .. } = self.family else {
            return Err(Error::Model("category probabilities need an MLM".into()));
        };
        self.check_theta(theta)?;
        let eta = self.eval_predictor(x) * DVector::from_column_slice(theta);
        mlm_probabilities(link, eta.as_slice())
    }
}

/// `nu(h^T theta) h h^T`.
pub fn fisher_info_glm(model: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<InfoMatrix> {
    model.check_theta(theta)?;
    let (w, h) = model
        .glm_weight_and_predictor(theta, x)
        .ok_or_else(|| Error::Model("fisher_info_glm needs a GLM".into()))?;
    Ok(&h * h.transpose() * w)
}

/// Single-trial multinomial information `sum_j g_j g_j^T / pi_j`, where
/// `g_j = d pi_j / d theta`. This equals `G^T Sigma^{-1} G` with the reduced
/// `(J-1)` covariance `Sigma = diag(pi) - pi pi^T`.
pub fn fisher_info_mlm(model: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<InfoMatrix> {
    let Family::Mlm { link, .. } = model.family else {
        return Err(Error::Model("fisher_info_mlm needs an MLM".into()));
    };
    model.check_theta(theta)?;
    let xm = model.eval_predictor(x);
    let eta = &xm * DVector::from_column_slice(theta);
    let (pi, jac) = links::mlm_probabilities_with_jacobian(link, eta.as_slice())?;
    if let Some((j, v)) = pi.iter().enumerate().find(|(_, &v)| !(v > PROBABILITY_FLOOR)) {
        return Err(Error::DegenerateProbability(format!(
            "category {} has probability {v:e} at x = {x:?}",
            j + 1
        )));
    }
    let q = pi.len() - 1;
    // J x p: rows are d pi_j / d theta
    let g = jac * xm.rows(0, q);
    let p = model.p();
    let mut f = DMatrix::zeros(p, p);
    for j in 0..pi.len() {
        let row = g.row(j);
        f += row.transpose() * row / pi[j];
    }
    symmetrize(&mut f);
    Ok(f)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house_flies() -> (ModelSpec, Vec<f64>) {
        let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 200.0)]).unwrap();
        let f = parse_formula(&["1 + x + x^2", "1 + x", "0"], &space).unwrap();
        let m = ModelSpec::mlm(3, MlmLink::Continuation, f).unwrap();
        (m, vec![-1.935, -0.02642, 0.0003174, -9.159, 0.06386])
    }

    #[test]
    fn intercept_logit() {
        let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1"], &space).unwrap()).unwrap();
        let f = m.fisher_info(&[0.0], &[0.4]).unwrap();
        assert_eq!(f, DMatrix::from_element(1, 1, 0.25));
    }

    #[test]
    fn identity_outer_product() {
        let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 5.0)]).unwrap();
        let m =
            ModelSpec::glm(GlmLink::Identity, parse_formula(&["1 + x"], &space).unwrap()).unwrap();
        let f = m.fisher_info(&[0.3, -1.0], &[2.0]).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn binary_baseline_equals_logit() {
        let space = DesignSpace::new(vec![Factor::continuous("x", -2.0, 2.0)]).unwrap();
        let glm =
            ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x"], &space).unwrap()).unwrap();
        let mlm = ModelSpec::mlm(
            2,
            MlmLink::Baseline,
            parse_formula(&["1 + x", "0"], &space).unwrap(),
        )
        .unwrap();
        for x in [-1.7, 0.0, 0.6, 2.0] {
            let a = glm.fisher_info(&[0.4, -1.3], &[x]).unwrap();
            let b = mlm.fisher_info(&[0.4, -1.3], &[x]).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn mlm_shape_and_symmetry() {
        let (m, theta) = house_flies();
        assert_eq!(m.p(), 5);
        let f = m.fisher_info(&theta, &[103.53]).unwrap();
        assert_eq!(f.shape(), (5, 5));
        assert!((&f - f.transpose()).norm() <= 1e-12 * f.norm());
    }

    #[test]
    fn saturated_probability_is_an_error() {
        let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let m = ModelSpec::mlm(
            2,
            MlmLink::Baseline,
            parse_formula(&["1", "0"], &space).unwrap(),
        )
        .unwrap();
        let r = m.fisher_info(&[-800.0], &[0.5]);
        assert!(matches!(r, Err(Error::DegenerateProbability(_))));
    }

    #[test]
    fn mlm_needs_j_rows() {
        let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 1.0)]).unwrap();
        let f = parse_formula(&["1 + x", "1"], &space).unwrap();
        assert!(ModelSpec::mlm(3, MlmLink::Continuation, f).is_err());
    }
}
