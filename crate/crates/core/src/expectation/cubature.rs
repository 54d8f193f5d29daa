//! Adaptive cubature over hyper-rectangles with the Genz–Malik degree-7 rule
//! and its embedded degree-5 rule as error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Outcome of [`adaptive_cubature`].
#[derive(Debug, Clone, PartialEq)]
pub struct CubatureResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
    /// Set when `max_evals` ran out before the tolerance was met.
    pub budget_exceeded: bool,
}

struct GenzMalik {
    dim: usize,
    lambda2: f64,
    lambda4: f64,
    lambda5: f64,
    w: [f64; 5],
    we: [f64; 4],
    ratio: f64,
}

impl GenzMalik {
    fn new(dim: usize) -> Self {
        let n = dim as f64;
        let lambda2 = (9.0f64 / 70.0).sqrt();
        let lambda4 = (9.0f64 / 10.0).sqrt();
        let lambda5 = (9.0f64 / 19.0).sqrt();
        GenzMalik {
            dim,
            lambda2,
            lambda4,
            lambda5,
            w: [
                (12824.0 - 9120.0 * n + 400.0 * n * n) / 19683.0,
                980.0 / 6561.0,
                (1820.0 - 400.0 * n) / 19683.0,
                200.0 / 19683.0,
                6859.0 / 19683.0 / 2f64.powi(dim as i32),
            ],
            we: [
                (729.0 - 950.0 * n + 50.0 * n * n) / 729.0,
                245.0 / 486.0,
                (265.0 - 100.0 * n) / 1458.0,
                25.0 / 729.0,
            ],
            ratio: (lambda2 * lambda2) / (lambda4 * lambda4),
        }
    }

    fn points(&self) -> usize {
        let n = self.dim;
        1 + 4 * n + 2 * n * n.saturating_sub(1) + (1usize << n)
    }
}

struct Region {
    center: Vec<f64>,
    half: Vec<f64>,
    value: Vec<f64>,
    error: Vec<f64>,
    split_dim: usize,
    priority: f64,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}

impl Eq for Region {}

impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Region {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

struct Integrator<'f, F: FnMut(&[f64], &mut [f64])> {
    rule: GenzMalik,
    f: &'f mut F,
    n_out: usize,
    x: Vec<f64>,
    buf: Vec<f64>,
    sums: [Vec<f64>; 5],
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64])> Integrator<'_, F> {
    fn eval_at(&mut self, offsets: &[(usize, f64)], center: &[f64], half: &[f64], slot: usize) {
        self.x.copy_from_slice(center);
        for &(d, s) in offsets {
            self.x[d] = center[d] + s * half[d];
        }
        (self.f)(&self.x, &mut self.buf);
        self.evaluations += 1;
        for (acc, v) in self.sums[slot].iter_mut().zip(&self.buf) {
            *acc += v;
        }
    }

    fn region(&mut self, center: Vec<f64>, half: Vec<f64>) -> Region {
        let n = self.rule.dim;
        let (l2, l4, l5) = (self.rule.lambda2, self.rule.lambda4, self.rule.lambda5);
        for s in self.sums.iter_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        self.eval_at(&[], &center, &half, 0);
        let f0 = self.sums[0].clone();
        let mut best_dim = 0;
        let mut best_diff = f64::NEG_INFINITY;
        let mut tmp2 = vec![0.0; self.n_out];
        let mut tmp3 = vec![0.0; self.n_out];
        for d in 0..n {
            let before2 = self.sums[1].clone();
            let before3 = self.sums[2].clone();
            self.eval_at(&[(d, l2)], &center, &half, 1);
            self.eval_at(&[(d, -l2)], &center, &half, 1);
            self.eval_at(&[(d, l4)], &center, &half, 2);
            self.eval_at(&[(d, -l4)], &center, &half, 2);
            for k in 0..self.n_out {
                tmp2[k] = self.sums[1][k] - before2[k];
                tmp3[k] = self.sums[2][k] - before3[k];
            }
            // fourth divided difference along d, summed over components
            let mut diff = 0.0;
            for k in 0..self.n_out {
                diff += ((tmp2[k] - 2.0 * f0[k]) - self.rule.ratio * (tmp3[k] - 2.0 * f0[k])).abs();
            }
            if diff > best_diff * (1.0 + 1e-12)
                || (diff >= best_diff * (1.0 - 1e-12) && half[d] > half[best_dim])
            {
                best_diff = diff;
                best_dim = d;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                for (si, sj) in [(l4, l4), (l4, -l4), (-l4, l4), (-l4, -l4)] {
                    self.eval_at(&[(i, si), (j, sj)], &center, &half, 3);
                }
            }
        }
        for mask in 0..(1usize << n) {
            for d in 0..n {
                let s = if mask >> d & 1 == 1 { l5 } else { -l5 };
                self.x[d] = center[d] + s * half[d];
            }
            (self.f)(&self.x, &mut self.buf);
            self.evaluations += 1;
            for (acc, v) in self.sums[4].iter_mut().zip(&self.buf) {
                *acc += v;
            }
        }
        let volume: f64 = half.iter().map(|h| 2.0 * h).product();
        let w = self.rule.w;
        let we = self.rule.we;
        let mut value = vec![0.0; self.n_out];
        let mut error = vec![0.0; self.n_out];
        for k in 0..self.n_out {
            let s = [
                self.sums[0][k],
                self.sums[1][k],
                self.sums[2][k],
                self.sums[3][k],
                self.sums[4][k],
            ];
            let r7 = w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + w[3] * s[3] + w[4] * s[4];
            let r5 = we[0] * s[0] + we[1] * s[1] + we[2] * s[2] + we[3] * s[3];
            value[k] = volume * r7;
            error[k] = (volume * (r7 - r5)).abs();
        }
        let priority = error.iter().fold(0.0, |m: f64, e| m.max(*e));
        Region {
            center,
            half,
            value,
            error,
            split_dim: best_dim,
            priority,
        }
    }
}

/// Integrates a vector-valued `f` over the box `[lower, upper]`.
///
/// `f(x, out)` writes `n_out` values. Refinement bisects the region with the
/// largest error along its axis of largest fourth difference. Stops when the
/// summed error is at most `reltol * max_k |value_k|` in every component, or
/// when the next bisection would exceed `max_evals`.
pub fn adaptive_cubature<F>(
    mut f: F,
    lower: &[f64],
    upper: &[f64],
    n_out: usize,
    reltol: f64,
    max_evals: usize,
) -> CubatureResult
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = lower.len();
    assert_eq!(dim, upper.len(), "box bounds must have equal length");
    assert!(dim >= 1, "cubature needs at least one dimension");
    let rule = GenzMalik::new(dim);
    let per_region = rule.points();
    let mut integ = Integrator {
        rule,
        f: &mut f,
        n_out,
        x: vec![0.0; dim],
        buf: vec![0.0; n_out],
        sums: std::array::from_fn(|_| vec![0.0; n_out]),
        evaluations: 0,
    };
    let center: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| 0.5 * (b - a)).collect();
    let first = integ.region(center, half);
    let mut total_value = first.value.clone();
    let mut total_error = first.error.clone();
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut budget_exceeded = false;
    let mut splits = 0usize;
    loop {
        let scale = total_value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = total_error.iter().fold(0.0f64, |m, v| m.max(*v));
        if worst <= reltol * scale || worst == 0.0 {
            break;
        }
        if integ.evaluations + 2 * per_region > max_evals {
            budget_exceeded = true;
            break;
        }
        let r = heap.pop().expect("heap is never empty");
        let d = r.split_dim;
        let mut half = r.half.clone();
        half[d] *= 0.5;
        let mut c1 = r.center.clone();
        let mut c2 = r.center.clone();
        c1[d] -= half[d];
        c2[d] += half[d];
        let a = integ.region(c1, half.clone());
        let b = integ.region(c2, half);
        for k in 0..n_out {
            total_value[k] += a.value[k] + b.value[k] - r.value[k];
            total_error[k] += a.error[k] + b.error[k] - r.error[k];
        }
        heap.push(a);
        heap.push(b);
        splits += 1;
        if splits % 64 == 0 {
            // resynchronize running sums to avoid drift
            total_value.iter_mut().for_each(|v| *v = 0.0);
            total_error.iter_mut().for_each(|v| *v = 0.0);
            for r in heap.iter() {
                for k in 0..n_out {
                    total_value[k] += r.value[k];
                    total_error[k] += r.error[k];
                }
            }
        }
    }
    let mut regions: Vec<Region> = heap.into_vec();
    // fixed summation order for reproducibility
    regions.sort_by(|a, b| {
        a.center
            .iter()
            .zip(&b.center)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut value = vec![0.0; n_out];
    let mut error = vec![0.0; n_out];
    for r in &regions {
        for k in 0..n_out {
            value[k] += r.value[k];
            error[k] += r.error[k];
        }
    }
    CubatureResult {
        value,
        error,
        evaluations: integ.evaluations,
        budget_exceeded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_over_unit_cube() {
        let r = adaptive_cubature(|_, out| out[0] = 1.0, &[0.0; 3], &[1.0; 3], 1, 1e-10, 100_000);
        assert!((r.value[0] - 1.0).abs() < 1e-12);
        assert!(!r.budget_exceeded);
    }

    #[test]
    fn bilinear_exact() {
        let r = adaptive_cubature(
            |x, out| out[0] = x[0] * x[1],
            &[0.0, 0.0],
            &[1.0, 1.0],
            1,
            1e-12,
            100_000,
        );
        assert!((r.value[0] - 0.25).abs() < 1e-10);
        assert_eq!(r.evaluations, GenzMalik::new(2).points());
    }

    #[test]
    fn rule_sizes() {
        assert_eq!(GenzMalik::new(2).points(), 17);
        assert_eq!(GenzMalik::new(7).points(), 241);
    }

    #[test]
    fn budget_flag() {
        let r = adaptive_cubature(
            |x, out| out[0] = (50.0 * x[0]).sin().abs(),
            &[0.0, 0.0],
            &[1.0, 1.0],
            1,
            1e-14,
            500,
        );
        assert!(r.budget_exceeded);
        assert!(r.evaluations <= 500);
    }

    #[test]
    fn vector_integrand() {
        let r = adaptive_cubature(
            |x, out| {
                out[0] = 1.0;
                out[1] = x[0];
                out[2] = (x[0] + x[1]).exp();
            },
            &[0.0, 0.0],
            &[2.0, 1.0],
            3,
            1e-10,
            1_000_000,
        );
        let e = std::f64::consts::E;
        assert!((r.value[0] - 2.0).abs() < 1e-12);
        assert!((r.value[1] - 2.0).abs() < 1e-12);
        let exact = (e * e - 1.0) * (e - 1.0);
        assert!((r.value[2] - exact).abs() < 1e-9 * exact);
    }
}
