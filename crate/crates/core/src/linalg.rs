//! Small dense symmetric positive-definite helpers.

use nalgebra::{DMatrix, DVector};

/// Absolute pivot floor for declaring a matrix singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// A pivot that has lost this fraction of its original diagonal entry is
/// treated as zero. The ratio is invariant to diagonal rescaling.
pub const RELATIVE_PIVOT_FLOOR: f64 = 1e-14;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    /// Returns `None` when `m` is not numerically positive definite.
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        debug_assert_eq!(n, m.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > PIVOT_FLOOR) || d <= RELATIVE_PIVOT_FLOOR * m[(j, j)].abs() || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(SpdFactor { l })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `M^{-1} B`, column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col = self.solve_vector(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    /// `v^T M^{-1} v`.
    pub fn inv_quadratic_form(&self, v: &DVector<f64>) -> f64 {
        // ||L^{-1} v||^2
        let n = self.l.nrows();
        let mut y = v.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y.norm_squared()
    }
}

/// Log determinant of a symmetric matrix, or `-inf` when it is not positive definite.
pub fn log_det(m: &DMatrix<f64>) -> f64 {
    SpdFactor::new(m).map_or(f64::NEG_INFINITY, |f| f.log_det())
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(log_det(&DMatrix::identity(5, 5)), 0.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((log_det(&d) - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn singular_is_neg_inf() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert_eq!(log_det(&m), f64::NEG_INFINITY);
        assert_eq!(log_det(&DMatrix::zeros(2, 2)), f64::NEG_INFINITY);
    }

    #[test]
    fn solves() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&m).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = f.solve_vector(&b);
        assert!((&m * &x - &b).norm() < 1e-13);
        let q = f.inv_quadratic_form(&b);
        assert!((q - b.dot(&x)).abs() < 1e-13);
        assert!((f.log_det() - m.determinant().ln()).abs() < 1e-13);
    }

    #[test]
    fn pairwise_matches_naive_for_small_inputs() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), 249750.0);
    }
}
