//! Report rendering: JSON, aligned text tables, CSV and SVG charts.
//!
//! JSON numbers use the shortest decimal form that parses back to the same
//! `f64`, so every value round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::inference::AsymptoticReport;
use crate::simulation::{ConsistencyReport, McReport, SimulationScenario};
use crate::selection::SelectionResult;

/// A fit together with the labels and degrees that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub groups: Vec<String>,
    pub degrees: Vec<usize>,
    pub timepoints: Vec<f64>,
    pub fit: FitResult,
}

/// A generated dataset with the scenario that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub scenario: SimulationScenario,
    pub data: LongitudinalDataset,
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn degrees_label(d: &[usize]) -> String {
    let parts: Vec<String> = d.iter().map(usize::to_string).collect();
    format!("({})", parts.join(", "))
}

/// One row per grid cell, the best marked with `*`.
pub fn selection_table(result: &SelectionResult) -> String {
    let header = format!("({})", result.group_labels.join(", "));
    let rows: Vec<(String, String)> = result
        .grid
        .iter()
        .map(|c| {
            let star = if c.degrees == result.best { "*" } else { "" };
            (degrees_label(&c.degrees), format!("{:.4}{star}", c.aic))
        })
        .collect();
    let w = rows.iter().map(|r| r.0.len()).chain([header.len()]).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{header:<w$}  AIC");
    for (d, a) in &rows {
        let _ = writeln!(out, "{d:<w$}  {a}");
    }
    for c in &result.invalid {
        let _ = writeln!(out, "{:<w$}  invalid: {}", degrees_label(&c.degrees), c.error);
    }
    out
}

pub fn selection_csv(result: &SelectionResult) -> String {
    let mut out = String::new();
    for l in &result.group_labels {
        let _ = write!(out, "degree_{l},");
    }
    out.push_str("aic,n_params,rmss,best\n");
    for c in &result.grid {
        for d in &c.degrees {
            let _ = write!(out, "{d},");
        }
        let _ = writeln!(out, "{},{},{},{}", c.aic, c.n_params, c.rmss, c.degrees == result.best);
    }
    out
}

pub fn fit_table(fit: &FitResult, labels: &[String]) -> String {
    let mut out = String::new();
    for (i, theta) in fit.coefficients.iter().enumerate() {
        let name = labels.get(i).map_or_else(|| format!("block {}", i + 1), String::clone);
        let _ = writeln!(out, "{name}: Theta ({}x{})", theta.nrows(), theta.ncols());
        for r in theta.row_iter() {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:>12.6}")).collect();
            let _ = writeln!(out, "  {}", cells.join(" "));
        }
    }
    let _ = writeln!(out, "Sigma-hat (r = {})", fit.covariance.r());
    for r in fit.covariance.sigma_hat().row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>12.6}")).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
    let _ = writeln!(out, "RMSS      {:.6}", fit.rmss);
    let _ = writeln!(out, "n_params  {}", fit.n_params);
    let _ = writeln!(out, "AIC       {:.4}", fit.aic);
    out
}

/// Coefficients as `block,row,col,value` records.
pub fn fit_csv(fit: &FitResult) -> String {
    let mut out = String::from("block,row,col,value\n");
    for (i, theta) in fit.coefficients.iter().enumerate() {
        for r in 0..theta.nrows() {
            for c in 0..theta.ncols() {
                let _ = writeln!(out, "{},{},{},{}", i + 1, r + 1, c + 1, theta[(r, c)]);
            }
        }
    }
    out
}

pub fn mc_table(reports: &[McReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>6} {:>12} {:>12} {:>12} {:>10} {:>10} {:>6}",
        "rho", "n", "AIC(psi_u)", "AIC(psi_o)", "AIC(psi_a)", "u - a", "o - a", "fail"
    );
    for r in reports {
        let rho = r.rho.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>10.4} {:>10.4} {:>6}",
            rho,
            r.n,
            r.aic.underfit,
            r.aic.overfit,
            r.aic.additive,
            r.underfit_gap(),
            r.overfit_gap(),
            r.failures
        );
    }
    out
}

pub fn mc_csv(reports: &[McReport]) -> String {
    let mut out = String::from("rho,n,replications,failures,aic_u,aic_o,aic_a\n");
    for r in reports {
        let rho = r.rho.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            out,
            "{rho},{},{},{},{},{},{}",
            r.n, r.replications, r.failures, r.aic.underfit, r.aic.overfit, r.aic.additive
        );
    }
    out
}

/// Line chart of averaged AIC against `n`, one series per candidate model.
pub fn mc_svg(reports: &[McReport], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 130.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let xs: Vec<f64> = reports.iter().map(|r| r.n as f64).collect();
    let series: [(&str, &str, Vec<f64>); 3] = [
        ("\u{3c8}_u", "#d62728", reports.iter().map(|r| r.aic.underfit).collect()),
        ("\u{3c8}_o", "#1f77b4", reports.iter().map(|r| r.aic.overfit).collect()),
        ("\u{3c8}_a", "#2ca02c", reports.iter().map(|r| r.aic.additive).collect()),
    ];
    let (xmin, xmax) = bounds(xs.iter().copied());
    let (ymin, ymax) = bounds(series.iter().flat_map(|s| s.2.iter().copied()));
    let sx = |x: f64| L + (x - xmin) / (xmax - xmin) * (W - L - R);
    let sy = |y: f64| H - B - (y - ymin) / (ymax - ymin) * (H - T - B);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{L},{T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for &x in &xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{x}</text>"#,
            sx(x),
            H - B + 18.0
        );
    }
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{y:.1}</text>"#,
            L - 6.0,
            sy(y) + 4.0
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (L + W - R) / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">average AIC</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );
    for (idx, (label, colour, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-label="{label}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (px, py) = p.split_once(',').expect("point");
            let _ = writeln!(out, r#"<circle cx="{px}" cy="{py}" r="3" fill="{colour}"/>"#);
        }
        let ly = T + 20.0 + 20.0 * idx as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">AIC({label})</text>"#,
            W - R + 12.0,
            W - R + 32.0,
            W - R + 38.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn consistency_table(report: &ConsistencyReport) -> String {
    let mut out = String::new();
    let k = report.rows.first().map_or(0, |r| r.coefficient_error.len());
    let _ = write!(out, "{:>6} {:>12}", "n", "sigma_err");
    for i in 0..k {
        let _ = write!(out, " {:>12}", format!("theta{}_err", i + 1));
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{:>6} {:>12.6}", r.n, r.sigma_error);
        for e in &r.coefficient_error {
            let _ = write!(out, " {e:>12.6}");
        }
        out.push('\n');
    }
    out
}

pub fn consistency_csv(report: &ConsistencyReport) -> String {
    let k = report.rows.first().map_or(0, |r| r.coefficient_error.len());
    let mut out = String::from("n,replications,failures,sigma_error");
    for i in 0..k {
        let _ = write!(out, ",theta{}_error", i + 1);
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{},{},{},{}", r.n, r.replications, r.failures, r.sigma_error);
        for e in &r.coefficient_error {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
    }
    out
}

pub fn normality_text(report: &AsymptoticReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "block {} n = {} replications = {} failures = {}",
        report.block + 1,
        report.n,
        report.replications,
        report.failures
    );
    let _ = writeln!(out, "relative max-entry covariance error  {:.4}", report.relative_error);
    for (j, c) in &report.cross_block {
        let _ = writeln!(out, "cross-block {} max |z|                {:.3}", j + 1, c.max_abs_z);
    }
    let _ = writeln!(out, "coefficient/sigma cross max |z|      {:.3}", report.sigma_cross.max_abs_z);
    for (idx, m) in report.marginals.iter().enumerate() {
        let _ = writeln!(
            out,
            "marginal {idx}: mean {:+.4} var {:.4} skew {:+.4} exkurt {:+.4}",
            m.mean, m.variance, m.skewness, m.excess_kurtosis
        );
    }
    for (idx, m) in report.statistic.iter().enumerate() {
        let _ = writeln!(
            out,
            "statistic {idx}: mean {:+.4} var {:.4} skew {:+.4} exkurt {:+.4}",
            m.mean, m.variance, m.skewness, m.excess_kurtosis
        );
    }
    out
}
