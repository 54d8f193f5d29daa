use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous interval or finite level set for one design factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Continuous { lower: f64, upper: f64 },
    Discrete { levels: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
}

impl Factor {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Factor {
            name: name.into(),
            kind: FactorKind::Continuous { lower, upper },
        }
    }

    pub fn discrete(name: impl Into<String>, levels: Vec<f64>) -> Self {
        Factor {
            name: name.into(),
            kind: FactorKind::Discrete { levels },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FactorKind::Continuous { .. })
    }

    fn validate(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::Space(format!("factor name `{}` is not an identifier", self.name)));
        }
        match &self.kind {
            FactorKind::Continuous { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Space(format!(
                        "factor `{}`: need finite lower < upper, got [{lower}, {upper}]",
                        self.name
                    )));
                }
            }
            FactorKind::Discrete { levels } => {
                if levels.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Space(format!("factor `{}`: non-finite level", self.name)));
                }
                let mut sorted = levels.clone();
                sorted.sort_by(f64::total_cmp);
                sorted.dedup();
                if sorted.len() != levels.len() {
                    return Err(Error::Space(format!("factor `{}`: duplicate levels", self.name)));
                }
                if sorted.len() < 2 {
                    return Err(Error::Space(format!(
                        "factor `{}`: a discrete factor needs at least 2 distinct levels",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// The design region: continuous factors first, then discrete ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    factors: Vec<Factor>,
    fixed_discrete_list: Option<Vec<Vec<f64>>>,
}

impl DesignSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        Self::with_discrete_list(factors, None)
    }

    /// Restricts the discrete part of the region to an explicit list of level combinations.
    pub fn with_discrete_list(
        factors: Vec<Factor>,
        fixed_discrete_list: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Space("no factors declared".into()));
        }
        let mut seen_discrete = false;
        for (i, f) in factors.iter().enumerate() {
            f.validate()?;
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Space(format!("duplicate factor name `{}`", f.name)));
            }
            if f.is_continuous() && seen_discrete {
                return Err(Error::Space(format!(
                    "continuous factor `{}` follows a discrete factor; continuous factors come first",
                    f.name
                )));
            }
            seen_discrete |= !f.is_continuous();
        }
        let space = DesignSpace {
            factors,
            fixed_discrete_list: None,
        };
        if let Some(list) = &fixed_discrete_list {
            let discrete: Vec<&Factor> = space.factors[space.n_continuous()..].iter().collect();
            if list.is_empty() {
                return Err(Error::Space("fixed discrete list is empty".into()));
            }
            for (r, combo) in list.iter().enumerate() {
                if combo.len() != discrete.len() {
                    return Err(Error::Space(format!(
                        "fixed discrete entry {r} has {} values, expected {}",
                        combo.len(),
                        discrete.len()
                    )));
                }
                for (v, f) in combo.iter().zip(&discrete) {
                    if let FactorKind::Discrete { levels } = &f.kind {
                        if !levels.contains(v) {
                            return Err(Error::Space(format!(
                                "fixed discrete entry {r}: {v} is not a level of `{}`",
                                f.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(DesignSpace {
            fixed_discrete_list,
            ..space
        })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn fixed_discrete_list(&self) -> Option<&[Vec<f64>]> {
        self.fixed_discrete_list.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// Number of continuous factors (they occupy the leading coordinates).
    pub fn n_continuous(&self) -> usize {
        self.factors.iter().take_while(|f| f.is_continuous()).count()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn continuous_bounds(&self) -> Vec<(f64, f64)> {
        self.factors
            .iter()
            .filter_map(|f| match f.kind {
                FactorKind::Continuous { lower, upper } => Some((lower, upper)),
                FactorKind::Discrete { .. } => None,
            })
            .collect()
    }

    /// All discrete level combinations to search: the fixed list when given,
    /// else the full Cartesian product. A single empty combination when k = d.
    pub fn discrete_combinations(&self) -> Vec<Vec<f64>> {
        if let Some(list) = &self.fixed_discrete_list {
            return list.clone();
        }
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for f in &self.factors[self.n_continuous()..] {
            if let FactorKind::Discrete { levels } = &f.kind {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        levels.iter().map(move |&l| {
                            let mut next = c.clone();
                            next.push(l);
                            next
                        })
                    })
                    .collect();
            }
        }
        combos
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let k = self.n_continuous();
        let in_factors = self.factors.iter().zip(x).all(|(f, &v)| match &f.kind {
            FactorKind::Continuous { lower, upper } => v >= *lower && v <= *upper,
            FactorKind::Discrete { levels } => levels.contains(&v),
        });
        in_factors
            && self
                .fixed_discrete_list
                .as_ref()
                .is_none_or(|list| list.iter().any(|c| c.as_slice() == &x[k..]))
    }

    /// Uniform draw: continuous coordinates uniform on their intervals,
    /// discrete part uniform over the searched combinations.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .continuous_bounds()
            .iter()
            .map(|&(a, b)| rng.random_range(a..=b))
            .collect();
        if self.n_continuous() < self.dim() {
            let combos = self.discrete_combinations();
            let pick = rng.random_range(0..combos.len());
            x.extend_from_slice(&combos[pick]);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn esd() -> DesignSpace {
        let mut f = vec![Factor::continuous("Vol", 25.0, 45.0)];
        for n in ["LotA", "LotB", "ESD", "Pulse"] {
            f.push(Factor::discrete(n, vec![-1.0, 1.0]));
        }
        DesignSpace::new(f).unwrap()
    }

    #[test]
    fn cartesian_product_of_levels() {
        let s = esd();
        assert_eq!(s.n_continuous(), 1);
        let combos = s.discrete_combinations();
        assert_eq!(combos.len(), 16);
        assert_eq!(combos[0], vec![-1.0, -1.0, -1.0, -1.0]);
        assert!(s.contains(&[25.0, 1.0, -1.0, 1.0, 1.0]));
        assert!(!s.contains(&[24.9, 1.0, -1.0, 1.0, 1.0]));
        assert!(!s.contains(&[30.0, 0.0, -1.0, 1.0, 1.0]));
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(DesignSpace::new(vec![Factor::continuous("x", 1.0, 1.0)]).is_err());
        assert!(DesignSpace::new(vec![Factor::discrete("x", vec![1.0])]).is_err());
        assert!(DesignSpace::new(vec![Factor::discrete("x", vec![1.0, 1.0])]).is_err());
        let order = DesignSpace::new(vec![
            Factor::discrete("a", vec![0.0, 1.0]),
            Factor::continuous("x", 0.0, 1.0),
        ]);
        assert!(matches!(order, Err(Error::Space(_))));
    }

    #[test]
    fn fixed_list_limits_combinations() {
        let f = vec![
            Factor::discrete("a", vec![0.0, 1.0]),
            Factor::discrete("b", vec![0.0, 1.0]),
        ];
        let s = DesignSpace::with_discrete_list(f.clone(), Some(vec![vec![0.0, 1.0], vec![1.0, 1.0]]))
            .unwrap();
        assert_eq!(s.n_continuous(), 0);
        assert_eq!(s.discrete_combinations().len(), 2);
        assert!(!s.contains(&[0.0, 0.0]));
        assert!(DesignSpace::with_discrete_list(f, Some(vec![vec![0.0, 2.0]])).is_err());
    }
}
