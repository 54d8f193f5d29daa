mod common;

use common::*;
use forlion_core::{design_log_det, round_design, Allocation, InfoProvider, RoundingConfig};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn house_flies_printed_determinant() {
    let (_, model, theta) = house_flies();
    let p = InfoProvider::local(model, theta).unwrap();
    let det = design_log_det(&p, &house_flies_published()).unwrap().exp();
    assert!(rel(det, 54016299.0) < 1e-3, "det {det}");
}

#[test]
fn esd_local_printed_determinant() {
    let (_, model, theta) = esd();
    let p = InfoProvider::local(model, theta).unwrap();
    let det = design_log_det(&p, &esd_local_published()).unwrap().exp();
    assert!(rel(det, 1.256089e-5) < 1e-3, "det {det}");
}

#[test]
fn esd_ew_printed_determinant() {
    let (_, model, _) = esd();
    let p = InfoProvider::prior(model, esd_prior()).unwrap();
    let det = design_log_det(&p, &esd_ew_published()).unwrap().exp();
    assert!(rel(det, 4.372488e-6) < 1e-3, "det {det}");
}

fn remainder(delta2: f64, step: f64, n: u64) -> RoundingConfig {
    RoundingConfig { allocation: Allocation::LargestRemainder, ..RoundingConfig::new(delta2, vec![step], n) }
}

const TABLE: [(f64, [f64; 3], f64); 5] = [
    (0.1, [0.0, 103.5, 149.2], 0.9999989),
    (1.0, [0.0, 104.0, 149.0], 0.9998448),
    (5.0, [0.0, 105.0, 150.0], 0.9993424),
    (10.0, [0.0, 100.0, 150.0], 0.9948902),
    (20.0, [0.0, 100.0, 140.0], 0.9465724),
];

#[test]
fn house_flies_rounding_table_largest_remainder() {
    let (space, model, theta) = house_flies();
    let p = InfoProvider::local(model, theta).unwrap();
    let xi = house_flies_published();
    for (step, pts, eff) in TABLE {
        let r = round_design(&p, &space, &xi, &remainder(1.0, step, 3500)).unwrap();
        let got: Vec<f64> = r.exact.points.iter().map(|x| x[0]).collect();
        assert_eq!(got, pts.to_vec(), "step {step}");
        assert_eq!(r.exact.counts, vec![710, 1393, 1397], "step {step}");
        assert!((r.rel_efficiency - eff).abs() < 1e-6, "step {step}: {}", r.rel_efficiency);
    }
}

#[test]
fn house_flies_rounding_table_greedy() {
    let (space, model, theta) = house_flies();
    let p = InfoProvider::local(model, theta).unwrap();
    let xi = house_flies_published();
    for (step, pts, eff) in TABLE {
        let r = round_design(&p, &space, &xi, &RoundingConfig::new(1.0, vec![step], 3500)).unwrap();
        let got: Vec<f64> = r.exact.points.iter().map(|x| x[0]).collect();
        assert_eq!(got, pts.to_vec(), "step {step}");
        assert_eq!(r.exact.counts.iter().sum::<u64>(), 3500);
        // greedy is never worse than the tabulated allocation
        assert!(r.rel_efficiency >= eff - 1e-7, "step {step}: {}", r.rel_efficiency);
        assert!((r.rel_efficiency - eff).abs() < 1e-6, "step {step}: {}", r.rel_efficiency);
    }
}

#[test]
fn esd_rounding_printed_counts() {
    let (space, model, theta) = esd();
    let p = InfoProvider::local(model, theta).unwrap();
    for cfg in [RoundingConfig::new(0.5, vec![0.1], 500), remainder(0.5, 0.1, 500)] {
        let r = round_design(&p, &space, &esd_local_published(), &cfg).unwrap();
        assert_eq!(r.exact.points.len(), 14);
        // the merged pair sits where its first member was
        let want = vec![22u64, 41, 55, 37, 64, 43, 17, 7, 46, 66, 1, 7, 51, 43];
        assert_eq!(r.exact.counts, want);
        assert!((r.exact.points[4][0] - 32.9).abs() < 1e-12);
        assert!((r.rel_efficiency - 1.000069).abs() < 1e-6, "{}", r.rel_efficiency);
    }
}

#[test]
fn esd_rounding_table_largest_remainder() {
    let (space, model, theta) = esd();
    let p = InfoProvider::local(model, theta).unwrap();
    let cases = [
        (100, vec![4u64, 8, 11, 8, 13, 9, 4, 1, 9, 13, 1, 10, 9], 1.000529),
        (500, vec![22u64, 41, 55, 37, 64, 43, 17, 7, 46, 66, 1, 7, 51, 43], 1.001184),
    ];
    for (n, counts, eff) in cases {
        let r = round_design(&p, &space, &esd_local_published(), &remainder(0.5, 0.5, n)).unwrap();
        assert_eq!(r.exact.counts, counts, "N={n}");
        assert!((r.rel_efficiency - eff).abs() < 1e-6, "N={n}: {}", r.rel_efficiency);
        let greedy = round_design(&p, &space, &esd_local_published(), &RoundingConfig::new(0.5, vec![0.5], n)).unwrap();
        assert!(greedy.rel_efficiency >= r.rel_efficiency);
    }
}
