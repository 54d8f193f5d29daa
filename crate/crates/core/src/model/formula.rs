//! Monomial predictor formulas.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! row       := "0" | term ("+" term)*
//! term      := "1" | factor_pow ("*" factor_pow)*
//! factor_pow:= IDENT ("^" UINT)?
//! ```
//!
//! A GLM formula has one row. A multinomial formula has one row per response
//! category; each row owns its own block of coefficients, laid out in row order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::space::DesignSpace;
use crate::error::{Error, Result};

/// A monomial `prod_j x_j^{e_j}`; the all-zero exponent vector is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
}

impl Term {
    pub fn intercept(n_factors: usize) -> Self {
        Term {
            exponents: vec![0; n_factors],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }

    /// Partial derivative with respect to coordinate `k`.
    pub fn derivative(&self, x: &[f64], k: usize) -> f64 {
        let ek = self.exponents[k];
        if ek == 0 {
            return 0.0;
        }
        let mut out = ek as f64 * x[k].powi(ek as i32 - 1);
        for (j, (&e, &v)) in self.exponents.iter().zip(x).enumerate() {
            if j != k && e > 0 {
                out *= v.powi(e as i32);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorFormula {
    rows: Vec<Vec<Term>>,
    n_factors: usize,
}

impl PredictorFormula {
    pub fn from_rows(rows: Vec<Vec<Term>>, n_factors: usize) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            for t in row {
                if t.exponents.len() != n_factors {
                    return Err(Error::Formula {
                        row: r,
                        message: format!(
                            "term has {} exponents, expected {n_factors}",
                            t.exponents.len()
                        ),
                    });
                }
            }
            for (i, t) in row.iter().enumerate() {
                if row[..i].contains(t) {
                    return Err(Error::Formula {
                        row: r,
                        message: "duplicate term".into(),
                    });
                }
            }
        }
        let f = PredictorFormula { rows, n_factors };
        if f.n_coefficients() == 0 {
            return Err(Error::Formula {
                row: 0,
                message: "formula has no terms".into(),
            });
        }
        Ok(f)
    }

    pub fn rows(&self) -> &[Vec<Term>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    /// Total number of coefficients `p`.
    pub fn n_coefficients(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Model matrix with one row per formula row and `p` columns; row `r`
    /// is nonzero only on its own coefficient block.
    pub fn model_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_coefficients());
        let mut col = 0;
        for (r, row) in self.rows.iter().enumerate() {
            for t in row {
                m[(r, col)] = t.eval(x);
                col += 1;
            }
        }
        m
    }

    /// Predictor vector for a single-row formula (all rows concatenated).
    pub fn predictor(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n_coefficients(),
            self.rows.iter().flatten().map(|t| t.eval(x)),
        )
    }

    /// `d(model matrix)/d x_k`.
    pub fn model_matrix_derivative(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_coefficients());
        let mut col = 0;
        for (r, row) in self.rows.iter().enumerate() {
            for t in row {
                m[(r, col)] = t.derivative(x, k);
                col += 1;
            }
        }
        m
    }

    pub fn predictor_derivative(&self, x: &[f64], k: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.n_coefficients(),
            self.rows.iter().flatten().map(|t| t.derivative(x, k)),
        )
    }

    /// Renders the formula back into the textual grammar.
    pub fn to_strings(&self, space: &DesignSpace) -> Vec<String> {
        let names = space.names();
        self.rows
            .iter()
            .map(|row| {
                if row.is_empty() {
                    return "0".to_string();
                }
                row.iter()
                    .map(|t| {
                        let parts: Vec<String> = t
                            .exponents
                            .iter()
                            .enumerate()
                            .filter(|(_, &e)| e > 0)
                            .map(|(j, &e)| {
                                if e == 1 {
                                    names[j].to_string()
                                } else {
                                    format!("{}^{e}", names[j])
                                }
                            })
                            .collect();
                        if parts.is_empty() {
                            "1".to_string()
                        } else {
                            parts.join("*")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" + ")
            })
            .collect()
    }
}

/// Parses one formula string per row against the factor names of `space`.
/// An empty string is accepted as a synonym for `"0"`.
pub fn parse_formula<S: AsRef<str>>(rows: &[S], space: &DesignSpace) -> Result<PredictorFormula> {
    if rows.is_empty() {
        return Err(Error::Formula {
            row: 0,
            message: "no formula rows".into(),
        });
    }
    let parsed = rows
        .iter()
        .enumerate()
        .map(|(r, text)| parse_row(text.as_ref(), r, space))
        .collect::<Result<Vec<_>>>()?;
    PredictorFormula::from_rows(parsed, space.dim())
}

fn parse_row(text: &str, row: usize, space: &DesignSpace) -> Result<Vec<Term>> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() || compact == "0" {
        return Ok(Vec::new());
    }
    let err = |message: String| Error::Formula { row, message };
    let mut terms: Vec<Term> = Vec::new();
    for term_text in compact.split('+') {
        if term_text.is_empty() {
            return Err(err(format!("empty term in `{text}`")));
        }
        let term = if term_text == "1" {
            Term::intercept(space.dim())
        } else {
            let mut exponents = vec![0u32; space.dim()];
            for factor_text in term_text.split('*') {
                let (name, power) = match factor_text.split_once('^') {
                    Some((n, e)) => {
                        let e: i64 = e
                            .parse()
                            .map_err(|_| err(format!("bad exponent `{e}` in `{term_text}`")))?;
                        if e <= 0 {
                            return Err(err(format!("non-positive exponent in `{term_text}`")));
                        }
                        (n, e as u32)
                    }
                    None => (factor_text, 1),
                };
                if name.is_empty() {
                    return Err(err(format!("missing factor name in `{term_text}`")));
                }
                let idx = space
                    .factor_index(name)
                    .ok_or_else(|| err(format!("unknown factor `{name}`")))?;
                exponents[idx] += power;
            }
            Term { exponents }
        };
        if terms.contains(&term) {
            return Err(err(format!("duplicate term `{term_text}`")));
        }
        terms.push(term);
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::space::Factor;

    fn one_factor() -> DesignSpace {
        DesignSpace::new(vec![Factor::continuous("x1", 0.0, 200.0)]).unwrap()
    }

    fn two_factors() -> DesignSpace {
        DesignSpace::new(vec![
            Factor::continuous("x1", -1.0, 1.0),
            Factor::continuous("x2", -1.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn house_flies_rows() {
        let f = parse_formula(&["1 + x1 + x1^2", "1 + x1", ""], &one_factor()).unwrap();
        assert_eq!(f.n_coefficients(), 5);
        assert_eq!(f.n_rows(), 3);
        let exps: Vec<Vec<Vec<u32>>> = f
            .rows()
            .iter()
            .map(|r| r.iter().map(|t| t.exponents.clone()).collect())
            .collect();
        assert_eq!(exps, vec![vec![vec![0], vec![1], vec![2]], vec![vec![0], vec![1]], vec![]]);

        let m = f.model_matrix(&[100.0]);
        let expected = DMatrix::from_row_slice(
            3,
            5,
            &[1.0, 100.0, 10000.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        assert_eq!(m, expected);
    }

    #[test]
    fn product_term_then_intercept() {
        let f = parse_formula(&["x1*x2 + 1"], &two_factors()).unwrap();
        assert_eq!(f.n_coefficients(), 2);
        assert_eq!(f.rows()[0][0].exponents, vec![1, 1]);
        assert_eq!(f.rows()[0][1].exponents, vec![0, 0]);
    }

    #[test]
    fn intercept_only() {
        let f = parse_formula(&["1"], &two_factors()).unwrap();
        assert_eq!(f.n_coefficients(), 1);
        assert_eq!(f.predictor(&[0.3, -0.7]).as_slice(), &[1.0]);
    }

    #[test]
    fn parse_errors() {
        let s = two_factors();
        assert!(matches!(parse_formula(&["x9 + 1"], &s), Err(Error::Formula { .. })));
        assert!(parse_formula(&["x1^0"], &s).is_err());
        assert!(parse_formula(&["x1^-2"], &s).is_err());
        assert!(parse_formula(&["x1 + x1"], &s).is_err());
        assert!(parse_formula(&["x1*x2 + x2*x1"], &s).is_err());
        assert!(parse_formula(&["0"], &s).is_err());
        assert!(parse_formula(&[""], &s).is_err());
        assert!(parse_formula(&["x1 + "], &s).is_err());
    }

    #[test]
    fn whitespace_is_insignificant() {
        let s = two_factors();
        let a = parse_formula(&["x1 ^ 2 * x2 + 1"], &s).unwrap();
        let b = parse_formula(&["x1^2*x2+1"], &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_strings(&s), vec!["x1^2*x2 + 1".to_string()]);
    }

    #[test]
    fn monomial_derivative() {
        let t = Term { exponents: vec![2, 1] };
        let x = [1.5, -2.0];
        assert!((t.derivative(&x, 0) - 2.0 * 1.5 * -2.0).abs() < 1e-15);
        assert!((t.derivative(&x, 1) - 2.25).abs() < 1e-15);
    }
}
