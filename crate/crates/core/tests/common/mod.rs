#![allow(dead_code)]

use forlion_core::{parse_formula, ApproximateDesign, BoxPrior, DesignSpace, Factor, GlmLink, MlmLink, ModelSpec};

pub fn house_flies() -> (DesignSpace, ModelSpec, Vec<f64>) {
    let space = DesignSpace::new(vec![Factor::continuous("x", 0.0, 200.0)]).unwrap();
    let f = parse_formula(&["1 + x + x^2", "1 + x", "0"], &space).unwrap();
    let model = ModelSpec::mlm(3, MlmLink::Continuation, f).unwrap();
    (space, model, vec![-1.935, -0.02642, 0.0003174, -9.159, 0.06386])
}

pub fn esd() -> (DesignSpace, ModelSpec, Vec<f64>) {
    let pm = vec![-1.0, 1.0];
    let space = DesignSpace::new(vec![
        Factor::continuous("Vol", 25.0, 45.0),
        Factor::discrete("LotA", pm.clone()),
        Factor::discrete("LotB", pm.clone()),
        Factor::discrete("ESD", pm.clone()),
        Factor::discrete("Pulse", pm),
    ])
    .unwrap();
    let f = parse_formula(&["Vol + LotA + LotB + ESD + Pulse + ESD*Pulse + 1"], &space).unwrap();
    let model = ModelSpec::glm(GlmLink::Logit, f).unwrap();
    (space, model, vec![0.35, 1.50, -0.2, -0.15, 0.25, 0.4, -7.5])
}

pub fn esd_prior() -> BoxPrior {
    BoxPrior::uniform(
        vec![0.25, 1.0, -0.3, -0.3, 0.1, 0.35, -8.0],
        vec![0.45, 2.0, -0.1, 0.0, 0.4, 0.45, -7.0],
    )
    .unwrap()
}

/// Printed weights are rounded to four decimals, so they are renormalized.
fn design(rows: &[(f64, [f64; 4], f64)]) -> ApproximateDesign {
    let total: f64 = rows.iter().map(|r| r.2).sum();
    ApproximateDesign::new(
        rows.iter()
            .map(|(v, d, _)| {
                let mut x = vec![*v];
                x.extend_from_slice(d);
                x
            })
            .collect(),
        rows.iter().map(|r| r.2 / total).collect(),
    )
    .unwrap()
}

/// Published locally D-optimal ESD design.
pub fn esd_local_published() -> ApproximateDesign {
    design(&[
        (25.0275, [-1., 1., 1., -1.], 0.0432),
        (25.1062, [-1., 1., -1., -1.], 0.0828),
        (25.1957, [-1., -1., 1., -1.], 0.1100),
        (28.5555, [-1., -1., -1., 1.], 0.0742),
        (33.0930, [-1., 1., 1., -1.], 0.0462),
        (25.0, [-1., -1., 1., 1.], 0.0855),
        (25.0, [-1., -1., -1., 1.], 0.0339),
        (29.1384, [-1., 1., -1., -1.], 0.0135),
        (25.0, [-1., 1., 1., 1.], 0.0923),
        (25.0, [1., 1., 1., -1.], 0.1331),
        (31.5543, [-1., -1., 1., -1.], 0.0018),
        (25.0, [1., -1., 1., -1.], 0.0136),
        (25.0, [-1., 1., -1., 1.], 0.1013),
        (25.0, [-1., -1., -1., -1.], 0.0865),
        (32.8079, [-1., 1., 1., -1.], 0.0822),
    ])
}

/// Published EW D-optimal ESD design under the uniform box prior.
pub fn esd_ew_published() -> ApproximateDesign {
    design(&[
        (25.0275, [-1., 1., 1., -1.], 0.0756),
        (25.1062, [-1., 1., -1., -1.], 0.0688),
        (25.1210, [-1., -1., -1., -1.], 0.0848),
        (25.1297, [-1., 1., -1., 1.], 0.0718),
        (25.1957, [-1., -1., 1., -1.], 0.0585),
        (25.2129, [-1., 1., 1., 1.], 0.0864),
        (25.4221, [-1., -1., 1., 1.], 0.0847),
        (25.4990, [-1., -1., -1., 1.], 0.0645),
        (25.0, [1., 1., -1., 1.], 0.0619),
        (34.0891, [-1., 1., -1., -1.], 0.0158),
        (39.0310, [-1., 1., 1., -1.], 0.0932),
        (25.0, [1., 1., -1., -1.], 0.0362),
        (25.0, [1., -1., 1., -1.], 0.0745),
        (37.2799, [-1., -1., 1., -1.], 0.0073),
        (25.0, [1., 1., 1., 1.], 0.0091),
        (39.0638, [-1., 1., 1., -1.], 0.0240),
        (25.0, [1., 1., 1., -1.], 0.0439),
        (33.5554, [-1., -1., -1., 1.], 0.0389),
    ])
}

pub fn house_flies_published() -> ApproximateDesign {
    ApproximateDesign::new(vec![vec![0.0], vec![103.53], vec![149.2116]], vec![0.2027, 0.3981, 0.3992]).unwrap()
}
