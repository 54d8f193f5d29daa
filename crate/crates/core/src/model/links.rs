//! Link functions: GLM information weights and multinomial category probabilities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Weights below this are reported as exactly zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmLink {
    Identity,
    Logit,
    Probit,
    Cloglog,
    Loglog,
    Cauchit,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlmLink {
    Baseline,
    Cumulative,
    Adjacent,
    Continuation,
}

impl std::str::FromStr for GlmLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => GlmLink::Identity,
            "logit" => GlmLink::Logit,
            "probit" => GlmLink::Probit,
            "cloglog" => GlmLink::Cloglog,
            "loglog" => GlmLink::Loglog,
            "cauchit" => GlmLink::Cauchit,
            "log" => GlmLink::Log,
            other => return Err(Error::Model(format!("unknown GLM link `{other}`"))),
        })
    }
}

impl std::str::FromStr for MlmLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => MlmLink::Baseline,
            "cumulative" => MlmLink::Cumulative,
            "adjacent" => MlmLink::Adjacent,
            "continuation" => MlmLink::Continuation,
            other => return Err(Error::Model(format!("unknown MLM link `{other}`"))),
        })
    }
}

fn floor(v: f64) -> f64 {
    if v < WEIGHT_FLOOR {
        0.0
    } else {
        v
    }
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Logistic function, stable for large |x|.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn cloglog_weight(eta: f64) -> f64 {
    // mu = 1 - exp(-t), t = e^eta; nu = t^2 e^{-t} / mu
    let t = eta.exp();
    if t == 0.0 {
        return 0.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    floor(t * t * (-t).exp() / -(-t).exp_m1())
}

/// Information weight `(dmu/deta)^2 / Var(Y)` of a single observation, unit dispersion.
pub fn glm_weight(link: GlmLink, eta: f64) -> f64 {
    match link {
        GlmLink::Identity => 1.0,
        GlmLink::Logit => {
            let e = (-eta.abs()).exp();
            floor(e / ((1.0 + e) * (1.0 + e)))
        }
        GlmLink::Probit => {
            let upper = std_normal_cdf(-eta.abs());
            if upper <= 0.0 {
                return 0.0;
            }
            let lower = 1.0 - upper;
            let phi = std_normal_pdf(eta);
            floor((phi / upper) * (phi / lower))
        }
        GlmLink::Cloglog => cloglog_weight(eta),
        // mu = exp(-exp(-eta)) is the mirror image of the complementary log-log.
        GlmLink::Loglog => cloglog_weight(-eta),
        GlmLink::Cauchit => {
            let a = eta.abs();
            let tail = (1.0f64).atan2(a) / PI;
            let dens = 1.0 / (PI * (1.0 + a * a));
            floor(dens * dens / (tail * (1.0 - tail)))
        }
        GlmLink::Log => eta.exp().min(f64::MAX),
    }
}

/// Derivative of [`glm_weight`] in `eta`, by central differences.
pub fn glm_weight_derivative(link: GlmLink, eta: f64) -> f64 {
    if link == GlmLink::Identity {
        return 0.0;
    }
    if link == GlmLink::Log {
        return glm_weight(link, eta);
    }
    let h = 1e-5 * eta.abs().max(1.0);
    (glm_weight(link, eta + h) - glm_weight(link, eta - h)) / (2.0 * h)
}

/// Category probabilities from the linear predictors; only the first `J - 1`
/// entries of `eta` are used.
pub fn mlm_probabilities(link: MlmLink, eta: &[f64]) -> Result<DVector<f64>> {
    Ok(mlm_probabilities_with_jacobian(link, eta)?.0)
}

/// Category probabilities plus the `J x (J-1)` Jacobian `d pi_j / d eta_l`.
pub fn mlm_probabilities_with_jacobian(
    link: MlmLink,
    eta: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let j_cat = eta.len();
    if j_cat < 2 {
        return Err(Error::Model("a multinomial model needs at least 2 categories".into()));
    }
    let q = j_cat - 1;
    let eta = &eta[..q];
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::InfeasibleParameter("non-finite linear predictor".into()));
    }
    let mut pi = DVector::zeros(j_cat);
    let mut jac = DMatrix::zeros(j_cat, q);
    match link {
        MlmLink::Baseline => {
            let mut s: Vec<f64> = eta.to_vec();
            s.push(0.0);
            softmax_into(&s, &mut pi);
            for j in 0..j_cat {
                for l in 0..q {
                    let delta = if j == l { 1.0 } else { 0.0 };
                    jac[(j, l)] = pi[j] * (delta - pi[l]);
                }
            }
        }
        MlmLink::Adjacent => {
            // log(pi_j / pi_{j+1}) = eta_j  =>  log pi_j = const + sum_{l >= j} eta_l
            let mut s = vec![0.0; j_cat];
            for j in (0..q).rev() {
                s[j] = s[j + 1] + eta[j];
            }
            softmax_into(&s, &mut pi);
            for l in 0..q {
                let head: f64 = (0..=l).map(|k| pi[k]).sum();
                for j in 0..j_cat {
                    let ind = if j <= l { 1.0 } else { 0.0 };
                    jac[(j, l)] = pi[j] * (ind - head);
                }
            }
        }
        MlmLink::Cumulative => {
            for w in eta.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InfeasibleParameter(format!(
                        "cumulative logits must be strictly increasing, got {:?}",
                        eta
                    )));
                }
            }
            for j in 0..j_cat {
                pi[j] = match j {
                    0 => logistic(eta[0]),
                    _ if j == q => logistic(-eta[q - 1]),
                    _ => {
                        let (lo, hi) = (eta[j - 1], eta[j]);
                        if lo + hi > 0.0 {
                            logistic(-lo) - logistic(-hi)
                        } else {
                            logistic(hi) - logistic(lo)
                        }
                    }
                };
            }
            for l in 0..q {
                let g = logistic(eta[l]);
                let d = g * (1.0 - g);
                jac[(l, l)] = d;
                jac[(l + 1, l)] = -d;
            }
        }
        MlmLink::Continuation => {
            // pi_j = c_j prod_{l<j} (1 - c_l), c_j = logistic(eta_j)
            let mut log_survive = 0.0;
            let c: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
            for j in 0..q {
                pi[j] = (log_survive - softplus(-eta[j])).exp();
                log_survive -= softplus(eta[j]);
            }
            pi[q] = log_survive.exp();
            for j in 0..j_cat {
                for l in 0..q {
                    jac[(j, l)] = if l < j {
                        -pi[j] * c[l]
                    } else if l == j {
                        pi[j] * (1.0 - c[j])
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    Ok((pi, jac))
}

fn softmax_into(s: &[f64], out: &mut DVector<f64>) {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(s) {
        *o = (v - max).exp();
        total += *o;
    }
    *out /= total;
}

/// Inverse of [`mlm_probabilities`]: recovers the `J - 1` linear predictors
/// from interior category probabilities.
pub fn mlm_linear_predictors(link: MlmLink, pi: &[f64]) -> Vec<f64> {
    let j_cat = pi.len();
    let q = j_cat - 1;
    match link {
        MlmLink::Baseline => (0..q).map(|j| (pi[j] / pi[q]).ln()).collect(),
        MlmLink::Adjacent => (0..q).map(|j| (pi[j] / pi[j + 1]).ln()).collect(),
        MlmLink::Cumulative => {
            let mut below = 0.0;
            (0..q)
                .map(|j| {
                    below += pi[j];
                    let above: f64 = pi[j + 1..].iter().sum();
                    (below / above).ln()
                })
                .collect()
        }
        MlmLink::Continuation => (0..q)
            .map(|j| {
                let rest: f64 = pi[j + 1..].iter().sum();
                (pi[j] / rest).ln()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_at_zero() {
        assert_eq!(glm_weight(GlmLink::Logit, 0.0), 0.25);
        assert_eq!(glm_weight(GlmLink::Identity, 3.7), 1.0);
        assert_eq!(glm_weight(GlmLink::Identity, -1e9), 1.0);
        // phi(0)^2 / (Phi(0)(1 - Phi(0))) = (1/(2 pi)) / 0.25 = 2/pi
        assert!((glm_weight(GlmLink::Probit, 0.0) - 0.6366198).abs() < 1e-7);
        assert!((glm_weight(GlmLink::Log, 1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn tails_do_not_produce_nan() {
        for link in [
            GlmLink::Logit,
            GlmLink::Probit,
            GlmLink::Cloglog,
            GlmLink::Loglog,
            GlmLink::Cauchit,
        ] {
            for eta in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
                let w = glm_weight(link, eta);
                assert!(w.is_finite() && w >= 0.0, "{link:?} at {eta}: {w}");
            }
        }
        assert_eq!(glm_weight(GlmLink::Probit, 60.0), 0.0);
    }

    #[test]
    fn loglog_mirrors_cloglog() {
        for eta in [-3.0, -0.4, 0.0, 1.2, 2.5] {
            assert_eq!(glm_weight(GlmLink::Loglog, eta), glm_weight(GlmLink::Cloglog, -eta));
        }
    }

    #[test]
    fn continuation_even_splits() {
        let p = mlm_probabilities(MlmLink::Continuation, &[0.0, 0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
        assert!((p[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn baseline_uniform() {
        let p = mlm_probabilities(MlmLink::Baseline, &[0.0, 0.0, 0.0]).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn house_flies_at_zero_dose() {
        let eta = [-1.935, -9.159, 0.0];
        let p = mlm_probabilities(MlmLink::Continuation, &eta).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-15);
        let back = mlm_linear_predictors(MlmLink::Continuation, p.as_slice());
        assert!((back[0] - eta[0]).abs() < 1e-10);
        assert!((back[1] - eta[1]).abs() < 1e-10);
    }

    #[test]
    fn cumulative_requires_increasing() {
        let r = mlm_probabilities(MlmLink::Cumulative, &[0.5, 0.5, 0.0]);
        assert!(matches!(r, Err(Error::InfeasibleParameter(_))));
        let p = mlm_probabilities(MlmLink::Cumulative, &[-1.0, 0.5, 0.0]).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_differences() {
        let eta = [0.3, 0.9, -0.4, 0.0];
        for link in [
            MlmLink::Baseline,
            MlmLink::Cumulative,
            MlmLink::Adjacent,
            MlmLink::Continuation,
        ] {
            let eta: Vec<f64> = if link == MlmLink::Cumulative {
                vec![-0.7, 0.2, 1.1, 0.0]
            } else {
                eta.to_vec()
            };
            let (_, jac) = mlm_probabilities_with_jacobian(link, &eta).unwrap();
            for l in 0..3 {
                let h = 1e-6;
                let mut up = eta.clone();
                let mut dn = eta.clone();
                up[l] += h;
                dn[l] -= h;
                let pu = mlm_probabilities(link, &up).unwrap();
                let pd = mlm_probabilities(link, &dn).unwrap();
                for j in 0..4 {
                    let fd = (pu[j] - pd[j]) / (2.0 * h);
                    assert!((fd - jac[(j, l)]).abs() < 1e-8, "{link:?} j={j} l={l}");
                }
            }
        }
    }
}
