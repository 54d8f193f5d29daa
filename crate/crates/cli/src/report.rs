//! Machine-readable run report and its human-readable rendering.

use std::fmt::Write as _;

use forlion_core::rounding::Allocation;
use forlion_core::ApproximateDesign;
use serde::{Deserialize, Serialize};

use crate::config::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub points: Vec<Vec<f64>>,
    pub ni: Vec<u64>,
    #[serde(rename = "N")]
    pub n: u64,
    pub allocation: Allocation,
    pub det: f64,
    pub log_det: f64,
    /// Relative to the approximate design that was rounded.
    pub rel_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub task: Task,
    pub factor_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<ApproximateDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_det: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_diff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_close: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itmax: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactReport>,
    /// `(|F(design)| / |F(compare_design)|)^(1/p)` for task efficiency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<Vec<Vec<f64>>>,
    pub budget_exceeded: bool,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// JSON with the wall-time field zeroed, for reproducibility comparisons.
    pub fn to_json_without_time(&self) -> String {
        let mut r = self.clone();
        r.provenance.wall_time_s = 0.0;
        r.to_json()
    }
}

/// Seven significant digits, fixed notation when that stays short.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..15).contains(&mag) {
        let decimals = (6 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.6e}");
        let (mant, exp) = s.split_once('e').expect("exponent present");
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        let exp: i32 = exp.parse().expect("integer exponent");
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn table(names: &[String], rows: &[(Vec<f64>, String)], last: &str) -> String {
    let mut widths: Vec<usize> = names.iter().map(|n| n.len().max(8)).collect();
    for (x, _) in rows {
        for (w, v) in widths.iter_mut().zip(x) {
            *w = (*w).max(format!("{v:.4}").len());
        }
    }
    let mut header = format!("{:<6}", "Count");
    for (n, w) in names.iter().zip(&widths) {
        let _ = write!(header, " {n:>w$}");
    }
    let _ = write!(header, "  {last}");
    let rule = "=".repeat(header.len());
    let mut out = format!("Design Output\n{rule}\n{header}\n{}\n", "-".repeat(header.len()));
    for (i, (x, tail)) in rows.iter().enumerate() {
        let _ = write!(out, "{:<6}", i + 1);
        for (v, w) in x.iter().zip(&widths) {
            let _ = write!(out, " {v:>w$.4}");
        }
        let _ = writeln!(out, "  {tail}");
    }
    let _ = writeln!(out, "{rule}");
    out
}

/// The human-readable summary printed to standard output.
pub fn render(r: &RunReport) -> String {
    let mut out = String::new();
    if let Some(d) = &r.design {
        let rows: Vec<(Vec<f64>, String)> = d
            .points
            .iter()
            .zip(&d.weights)
            .map(|(x, w)| (x.clone(), format!("{w:.4}")))
            .collect();
        out.push_str(&table(&r.factor_names, &rows, "Allocation"));
        if let Some(m) = r.m {
            let _ = writeln!(out, "m: {m}");
        }
        if let Some(det) = r.det {
            let _ = writeln!(out, "det: {}", format_number(det));
        }
        if let Some(c) = r.convergence {
            let _ = writeln!(out, "convergence: {}", if c { "TRUE" } else { "FALSE" });
        }
        if let Some(md) = r.min_diff {
            let _ = writeln!(out, "min.diff: {md:.4}");
        }
        if let Some((a, b)) = &r.x_close {
            let _ = writeln!(out, "x.close: {a:?} {b:?}");
        }
        if let Some(it) = r.itmax {
            let _ = writeln!(out, "itmax: {it}");
        }
    }
    if let Some(e) = &r.exact {
        out.push('\n');
        let rows: Vec<(Vec<f64>, String)> = e.points.iter().zip(&e.ni).map(|(x, n)| (x.clone(), n.to_string())).collect();
        out.push_str(&table(&r.factor_names, &rows, "ni"));
        let _ = writeln!(out, "N: {}", e.n);
        let _ = writeln!(out, "det: {}", format_number(e.det));
        let _ = writeln!(out, "rel.efficiency: {}", format_number(e.rel_efficiency));
    }
    if let Some(eff) = r.rel_efficiency {
        let _ = writeln!(out, "rel.efficiency: {}", format_number(eff));
    }
    if let Some(info) = &r.info {
        let _ = writeln!(out, "Fisher information:");
        for row in info {
            let cells: Vec<String> = row.iter().map(|v| format!("{:>14}", format_number(*v))).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(format_number(54016299.4), "54016299");
        assert_eq!(format_number(1.256089e-5), "1.256089e-05");
        assert_eq!(format_number(0.9999989), "0.9999989");
        assert_eq!(format_number(1.000069), "1.000069");
        assert_eq!(format_number(1.0), "1");
    }
}
