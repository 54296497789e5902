//! Text, CSV and JSON renderings of pricing and calibration results.

use std::fmt::Write;

use serde::Serialize;

use lbcdo::calibration::CalibrationResult;
use lbcdo::engine::Diagnostics;

/// One scheme's column of the pricing table.
#[derive(Debug, Clone, Serialize)]
pub struct PriceColumn {
    pub method: String,
    pub tranche_bps: Vec<f64>,
    pub index_bps: f64,
    pub seconds: f64,
    /// Absent for direct Monte Carlo.
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceReport {
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
    pub paths: usize,
    pub seed: u64,
    pub tranches: Vec<String>,
    pub columns: Vec<PriceColumn>,
}

fn render_table(header: &[String], rows: &[(String, Vec<String>)]) -> String {
    let first = rows.iter().map(|r| r.0.len()).chain([header[0].len()]).max().unwrap_or(0);
    let mut widths: Vec<usize> = header[1..].iter().map(|h| h.len()).collect();
    for (_, cells) in rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.push('\n');
        s
    };
    let mut out = line(&header[0], &header[1..]);
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for (label, cells) in rows {
        out.push_str(&line(label, cells));
    }
    out
}

impl PriceReport {
    pub fn text(&self) -> String {
        let mut header = vec!["Tranche (in bps)".to_string()];
        header.extend(self.columns.iter().map(|c| c.method.clone()));
        let mut rows: Vec<(String, Vec<String>)> = self
            .tranches
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), self.columns.iter().map(|c| format!("{:.2}", c.tranche_bps[i])).collect()))
            .collect();
        rows.push(("Index (in bps)".into(), self.columns.iter().map(|c| format!("{:.2}", c.index_bps)).collect()));
        rows.push(("c.-time (in s)".into(), self.columns.iter().map(|c| format!("{:.2}", c.seconds)).collect()));
        format!(
            "sigma = {}, rho = {}, r = {}, M = {}, seed = {}\n\n{}",
            self.sigma,
            self.rho,
            self.r,
            self.paths,
            self.seed,
            render_table(&header, &rows)
        )
    }

    /// Same layout without timings, so reruns are byte-identical.
    pub fn csv(&self) -> String {
        let mut out = String::from("tranche");
        for c in &self.columns {
            let _ = write!(out, ",{}", c.method);
        }
        out.push('\n');
        for (i, t) in self.tranches.iter().enumerate() {
            out.push_str(t);
            for c in &self.columns {
                let _ = write!(out, ",{}", c.tranche_bps[i]);
            }
            out.push('\n');
        }
        out.push_str("index");
        for c in &self.columns {
            let _ = write!(out, ",{}", c.index_bps);
        }
        out.push('\n');
        out
    }
}

/// Wall time of each stage of a calibration run.
#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub calibration_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    #[serde(flatten)]
    pub result: CalibrationResult,
    pub timings: Timings,
}

impl CalibrationReport {
    pub fn text(&self) -> String {
        let r = &self.result;
        let mut header = vec![String::new()];
        header.extend(r.labels.iter().cloned());
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>();
        let rows = vec![
            ("Market (in bps)".to_string(), fmt(&r.market_bps)),
            ("Calibration (in bps)".to_string(), fmt(&r.fitted_bps)),
            ("Error (in %)".to_string(), fmt(&r.errors_pct)),
        ];
        let mut out = render_table(&header, &rows);
        let _ = writeln!(out, "\nsigma = {:.6}, rho = {:.6}, beta = {:.6}", r.sigma, r.rho, r.beta);
        let _ = writeln!(
            out,
            "{} evaluations, {} iterations, {:?}, converged: {} ({})",
            r.evaluations, r.iterations, r.optimizer, r.converged, r.message
        );
        let t = &self.timings;
        let _ = writeln!(out, "\nStage                 Time (in s)");
        let _ = writeln!(out, "Loading quotes        {:>11.2}", t.load_seconds);
        let _ = writeln!(out, "Calibration           {:>11.2}", t.calibration_seconds);
        let _ = writeln!(out, "Total                 {:>11.2}", t.total_seconds);
        out
    }

    /// Market/Calibration/Error rows plus the parameters, without timings.
    pub fn csv(&self) -> String {
        let r = &self.result;
        let mut out = String::from("row");
        for l in &r.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (name, v) in [("market_bps", &r.market_bps), ("fitted_bps", &r.fitted_bps), ("error_pct", &r.errors_pct)] {
            out.push_str(name);
            for x in v {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Warnings worth surfacing from a pricing run.
pub fn diagnostics_warnings(method: &str, d: &Diagnostics) -> Vec<String> {
    let mut w = Vec::new();
    if d.clamped_initial_mass > 0.0 {
        w.push(format!("{method}: {:.3e} of the x0 cloud lies outside the grid", d.clamped_initial_mass));
    }
    if d.min_density < -lbcdo::discretization::NEGATIVE_TOLERANCE {
        w.push(format!("{method}: density dipped to {:.3e} before truncation", d.min_density));
    }
    if d.monotone_repairs > 0 {
        w.push(format!(
            "{method}: {} surviving masses repaired to stay nonincreasing (largest {:.3e})",
            d.monotone_repairs, d.max_repair
        ));
    }
    if d.far_shifts > 0 {
        w.push(format!(
            "{method}: {} shifts beyond half the grid, mass lost {:.3e}",
            d.far_shifts, d.far_mass_lost
        ));
    }
    w
}
