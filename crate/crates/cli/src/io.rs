//! Quote, x0 and series files. All inputs are headed CSV.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use lbcdo::TrancheSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdsRow {
    pub name: String,
    pub spread_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheRow {
    pub attach: f64,
    pub detach: f64,
    pub spread_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X0Row {
    pub name: String,
    pub x0: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    // open separately so a missing file surfaces as an io error
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let row = row.map_err(|e| crate::usage(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(crate::usage(format!("{} has no rows", path.display())));
    }
    Ok(out)
}

pub fn read_cds(path: &Path) -> Result<Vec<CdsRow>> {
    read_rows(path)
}

pub fn read_tranches(path: &Path) -> Result<Vec<(TrancheSpec, f64)>> {
    read_rows::<TrancheRow>(path)?
        .into_iter()
        .map(|r| Ok((TrancheSpec::new(r.attach, r.detach)?, r.spread_bps)))
        .collect()
}

pub fn read_x0(path: &Path) -> Result<Vec<f64>> {
    Ok(read_rows::<X0Row>(path)?.into_iter().map(|r| r.x0).collect())
}

/// Writes serializable rows as headed CSV.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

/// Sorts names by descending spread (stable), the order used for `x0`.
pub fn sort_by_spread(mut rows: Vec<CdsRow>) -> Vec<CdsRow> {
    rows.sort_by(|a, b| b.spread_bps.total_cmp(&a.spread_bps));
    rows
}
