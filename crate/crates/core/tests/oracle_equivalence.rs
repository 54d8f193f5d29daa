use forlion_core::expectation::cubature::adaptive_cubature;
use forlion_core::liftone::{liftone_optimize, LiftOneConfig, PathSolver};
use forlion_core::linalg::log_det;
use forlion_core::{
    parse_formula, round_design, ApproximateDesign, DesignSpace, Factor, GlmLink, InfoProvider, MlmLink, ModelSpec,
    RoundingConfig,
};
use forlion_oracle::{exhaustive_rounding, fd_fisher, simplex_grid_best, tensor_gauss_legendre_2d, DEFAULT_FD_STEP};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GLM_LINKS: [GlmLink; 7] = [
    GlmLink::Logit,
    GlmLink::Probit,
    GlmLink::Cloglog,
    GlmLink::Loglog,
    GlmLink::Cauchit,
    GlmLink::Identity,
    GlmLink::Log,
];
const MLM_LINKS: [MlmLink; 4] = [MlmLink::Baseline, MlmLink::Cumulative, MlmLink::Adjacent, MlmLink::Continuation];

fn space2() -> DesignSpace {
    DesignSpace::new(vec![Factor::continuous("x", -2.0, 2.0), Factor::discrete("z", vec![-1.0, 1.0])]).unwrap()
}

fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn glm_information_matches_likelihood_curvature(
        link in 0usize..7,
        x in -2.0f64..2.0,
        z in prop_oneof![Just(-1.0f64), Just(1.0)],
        theta in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let s = space2();
        let m = ModelSpec::glm(GLM_LINKS[link], parse_formula(&["1 + x + x*z"], &s).unwrap()).unwrap();
        let a = m.fisher_info(&theta, &[x, z]).unwrap();
        let b = fd_fisher(&m, &theta, &[x, z], DEFAULT_FD_STEP).unwrap();
        prop_assert!(frob_rel(&a, &b) < 1e-4, "{:?} {}", GLM_LINKS[link], frob_rel(&a, &b));
    }

    #[test]
    fn mlm_information_matches_likelihood_curvature(
        link in 0usize..4,
        x in -2.0f64..2.0,
        theta in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let s = DesignSpace::new(vec![Factor::continuous("x", -2.0, 2.0)]).unwrap();
        let m = ModelSpec::mlm(3, MLM_LINKS[link], parse_formula(&["1 + x", "1 + x", "0"], &s).unwrap()).unwrap();
        let mut th = theta.to_vec();
        th[2] += 3.0;
        match m.fisher_info(&th, &[x]) {
            Ok(a) => {
                let b = fd_fisher(&m, &th, &[x], DEFAULT_FD_STEP).unwrap();
                prop_assert!(frob_rel(&a, &b) < 1e-4, "{:?} {}", MLM_LINKS[link], frob_rel(&a, &b));
            }
            Err(_) => prop_assert_eq!(MLM_LINKS[link], MlmLink::Cumulative),
        }
    }
}

fn random_mats(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Vec<DMatrix<f64>> {
    use rand::Rng;
    (0..m)
        .map(|_| {
            let v = nalgebra::DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let w: f64 = rng.random_range(0.1..1.0);
            &v * v.transpose() * w
        })
        .collect()
}

#[test]
fn liftone_reaches_simplex_grid_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut done = 0;
    while done < 20 {
        let p = 2 + done % 2;
        let m = p + done % (5 - p);
        let mats = random_mats(&mut rng, m, p);
        let (_, grid_ld) = simplex_grid_best(&mats, 0.005);
        if !grid_ld.is_finite() {
            continue;
        }
        for solver in [PathSolver::Log, PathSolver::Polynomial] {
            let cfg = LiftOneConfig { reltol: 1e-12, maxit: 2000, solver, ..Default::default() };
            let r = liftone_optimize(&mats, &vec![1.0 / m as f64; m], &cfg, &mut rng).unwrap();
            assert!(r.log_det.exp() >= grid_ld.exp() - 1e-6, "{solver:?} {} < {}", r.log_det, grid_ld);
        }
        done += 1;
    }
}

#[test]
fn greedy_rounding_matches_enumeration() {
    use rand::Rng;
    let s = DesignSpace::new(vec![Factor::continuous("x", -3.0, 3.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let m = 2 + case % 3;
        let n: u64 = rng.random_range(m as u64..=12);
        let model = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x"], &s).unwrap()).unwrap();
        let prov = InfoProvider::local(model, vec![rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)]).unwrap();
        let pts: Vec<Vec<f64>> = (0..m).map(|i| vec![-3.0 + 6.0 * i as f64 / (m - 1) as f64]).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let xi = ApproximateDesign::new(pts.clone(), raw.iter().map(|w| w / total).collect()).unwrap();
        let r = round_design(&prov, &s, &xi, &RoundingConfig::new(0.0, vec![1.0], n)).unwrap();
        let mats: Vec<_> = pts.iter().map(|x| prov.info_matrix(x).unwrap()).collect();
        let floors: Vec<u64> = xi.weights.iter().map(|w| (n as f64 * w + 1e-9).floor() as u64).collect();
        let (_, best) = exhaustive_rounding(&mats, &floors, n);
        assert!((r.log_det.exp() - best.exp()).abs() <= 1e-9 * best.exp().max(1.0), "case {case}");
    }
}

#[test]
fn cubature_is_exact_for_low_degree_monomials() {
    for dim in [2usize, 3] {
        let lower = vec![-0.5; dim];
        let upper = vec![1.0; dim];
        let mut exps = vec![vec![]];
        for _ in 0..dim {
            exps = exps.into_iter().flat_map(|e: Vec<i32>| (0..=5).map(move |k| [e.clone(), vec![k]].concat())).collect();
        }
        for e in exps.into_iter().filter(|e| e.iter().sum::<i32>() <= 5) {
            let f = |x: &[f64], out: &mut [f64]| out[0] = x.iter().zip(&e).map(|(v, k)| v.powi(*k)).product();
            let r = adaptive_cubature(f, &lower, &upper, 1, 1e-12, 10_000);
            let exact: f64 = e.iter().map(|&k| (1.0f64.powi(k + 1) - (-0.5f64).powi(k + 1)) / (k + 1) as f64).product();
            assert!((r.value[0] - exact).abs() <= 1e-10 * exact.abs().max(1e-300), "{e:?}: {} vs {exact}", r.value[0]);
        }
    }
}

#[test]
fn cubature_gaussian_matches_tensor_rule() {
    let g = |x: f64, y: f64| (-(x * x + 0.5 * x * y + y * y)).exp();
    let oracle = tensor_gauss_legendre_2d(g, [-2.0, -1.0], [1.5, 2.5], 200);
    let r = adaptive_cubature(|x, out| out[0] = g(x[0], x[1]), &[-2.0, -1.0], &[1.5, 2.5], 1, 1e-9, 1_000_000);
    assert!((r.value[0] - oracle).abs() / oracle < 1e-6);
}

#[test]
fn liftone_start_is_not_degraded() {
    let mats = vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = liftone_optimize(&mats, &[0.5, 0.5], &LiftOneConfig::default(), &mut rng).unwrap();
    assert!((r.weights[0] - 1.0).abs() < 1e-9);
    assert!((log_det(&DMatrix::from_element(1, 1, 2.0)) - r.log_det).abs() < 1e-12);
}
