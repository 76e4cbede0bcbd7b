//! CSV result tables. Floats carry nine significant digits.

use std::path::Path;

use crate::error::Result;
use crate::estimation::{AreaPoint, BatchEstimate, CalibrationResult, SpatialMap};
use crate::scenarios::Table1Row;

/// Nine significant digits in scientific notation; empty for missing values.
pub fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub const CALIBRATION_COLUMNS: [&str; 9] = [
    "eta_s", "u_eta_s", "eta_i", "alpha_b", "u_alpha_b", "sigma_ab", "u_sigma_ab", "E", "discarded",
];

/// One-row summary; `E` is the measured `Var(N_s + N_i) / E[N_s + N_i]`.
pub fn write_calibration_summary(path: &Path, r: &CalibrationResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CALIBRATION_COLUMNS)?;
    w.write_record([
        fmt(r.eta_s),
        fmt(r.u_eta_s),
        fmt(r.eta_i),
        fmt(r.alpha_b),
        fmt(r.u_alpha_b),
        fmt(r.sigma_ab),
        fmt(r.u_sigma_ab),
        fmt(r.diagnostics.excess.sum_ratio),
        r.diagnostics.discarded().to_string(),
    ])?;
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

pub fn write_batches(path: &Path, batches: &[BatchEstimate]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["batch", "n", "m", "alpha_b", "u_alpha_b", "sigma_ab", "u_sigma_ab", "eta_s", "u_eta_s"])?;
    for (k, b) in batches.iter().enumerate() {
        w.write_record([
            k.to_string(),
            b.n.to_string(),
            b.m.to_string(),
            fmt(b.alpha_b),
            fmt(b.u_alpha_b),
            fmt(b.sigma_ab),
            fmt(b.u_sigma_ab),
            fmt(b.eta_s),
            fmt(b.u_eta_s),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// One row per area; raw and background-corrected curves side by side.
pub fn write_area_scan(path: &Path, points: &[AreaPoint]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["rows", "cols", "area", "cells", "sigma_alpha", "u_sigma_alpha", "sigma_alpha_b", "u_sigma_alpha_b"])?;
    for p in points {
        w.write_record([
            p.extent.0.to_string(),
            p.extent.1.to_string(),
            p.area.to_string(),
            fmt(p.cells),
            fmt(p.sigma_alpha),
            fmt(p.u_sigma_alpha),
            fmt_opt(p.sigma_alpha_b),
            fmt_opt(p.u_sigma_alpha_b),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Header-less matrix, `2 h + 1` rows by `2 w + 1` columns; the centre is `xi = 0`.
pub fn write_cs_map(path: &Path, map: &SpatialMap) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in map.values.chunks(map.cols()) {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

pub fn write_cs_summary(path: &Path, map: &SpatialMap) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["xi_row", "xi_col", "min", "plateau", "dip", "curvature_row", "curvature_col", "ties"])?;
    w.write_record([
        map.argmin.0.to_string(),
        map.argmin.1.to_string(),
        fmt(map.min),
        fmt_opt(map.plateau),
        fmt_opt(map.dip_depth()),
        fmt_opt(map.curvature.0),
        fmt_opt(map.curvature.1),
        map.ties.len().to_string(),
    ])?;
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

/// Labelled rows of the nine-column table.
pub fn write_table1(path: &Path, rows: &[(&str, Table1Row)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("row").chain(Table1Row::COLUMNS))?;
    for (label, row) in rows {
        w.write_record(std::iter::once(label.to_string()).chain(row.values().iter().map(|v| fmt(*v))))?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}
