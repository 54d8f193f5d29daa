use forlion_core::{
    design_log_det, merge_design, parse_formula, round_design, Allocation, ApproximateDesign, DesignSpace, Factor,
    GlmLink, InfoProvider, ModelSpec, RoundingConfig,
};
use proptest::prelude::*;

fn setup() -> (DesignSpace, InfoProvider) {
    let s = DesignSpace::new(vec![Factor::continuous("x", -3.0, 3.0), Factor::discrete("z", vec![0.0, 1.0])]).unwrap();
    let m = ModelSpec::glm(GlmLink::Logit, parse_formula(&["1 + x + z"], &s).unwrap()).unwrap();
    (s, InfoProvider::local(m, vec![0.3, 1.1, -0.4]).unwrap())
}

fn design_strategy() -> impl Strategy<Value = ApproximateDesign> {
    prop::collection::vec((-3.0f64..3.0, 0u8..2, 0.05f64..1.0), 3..7).prop_map(|rows| {
        let total: f64 = rows.iter().map(|r| r.2).sum();
        ApproximateDesign::new(
            rows.iter().map(|r| vec![r.0, r.1 as f64]).collect(),
            rows.iter().map(|r| r.2 / total).collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rounding_invariants(
        xi in design_strategy(),
        step in prop_oneof![Just(0.1f64), Just(0.25), Just(1.0), Just(2.5)],
        n in 1u64..200,
        delta2 in 0.0f64..0.5,
        remainder in any::<bool>(),
    ) {
        let (s, prov) = setup();
        prop_assume!(design_log_det(&prov, &xi).unwrap().is_finite());
        let allocation = if remainder { Allocation::LargestRemainder } else { Allocation::Greedy };
        let cfg = RoundingConfig { allocation, ..RoundingConfig::new(delta2, vec![step], n) };
        let Ok(r) = round_design(&prov, &s, &xi, &cfg) else { return Ok(()); };
        prop_assert_eq!(r.exact.counts.iter().sum::<u64>(), n);
        prop_assert!(r.exact.counts.iter().all(|&c| c > 0));
        for x in &r.exact.points {
            let k = (x[0] / step).round();
            prop_assert!((x[0] - k * step).abs() < 1e-9);
            prop_assert!((-3.0..=3.0).contains(&x[0]));
        }
    }

    #[test]
    fn merge_keeps_mass_and_support(xi in design_strategy(), delta in 0.0f64..2.0) {
        let (s, prov) = setup();
        prop_assume!(design_log_det(&prov, &xi).unwrap().is_finite());
        let merged = merge_design(&prov, &s, &xi, delta).unwrap();
        prop_assert!((merged.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(merged.len() <= xi.len());
        prop_assert!(design_log_det(&prov, &merged).unwrap().is_finite());
        for x in &merged.points {
            prop_assert!(s.contains(x));
        }
    }
}
