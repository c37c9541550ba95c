//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting so
//! reruns produce byte-identical files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use babnd_core::bab::{TraceRow, TRACE_COLUMNS};

pub const RESULT_COLUMNS: [&str; 8] =
    ["method", "problem", "dim", "seed", "best", "gap", "samples", "wall_ms"];

/// One method run on one problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub problem: String,
    pub dim: usize,
    pub seed: u64,
    pub best: f64,
    /// Distance to the known optimum; NaN when none is known.
    pub gap: f64,
    pub samples: usize,
    pub wall_ms: f64,
}

impl ResultRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.problem.clone(),
            self.dim.to_string(),
            self.seed.to_string(),
            self.best.to_string(),
            self.gap.to_string(),
            self.samples.to_string(),
            format!("{:.3}", self.wall_ms),
        ]
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.uf.to_string(),
            r.min_lf.to_string(),
            r.pruned_vol.to_string(),
            r.selected_vol.to_string(),
            r.pool_size.to_string(),
            r.samples.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trace rows for a sampling planner: one per iteration with the best value
/// so far. Columns without a meaning for samplers are NaN or zero; only the
/// last row carries the elapsed time.
pub fn sampler_trace(history: &[f64], samples_per_iter: usize, wall_ms: f64) -> Vec<TraceRow> {
    history
        .iter()
        .enumerate()
        .map(|(i, &uf)| TraceRow {
            iter: i,
            uf,
            min_lf: f64::NAN,
            pruned_vol: 0.0,
            selected_vol: 0.0,
            pool_size: 0,
            samples: samples_per_iter * (i + 1),
            wall_ms: if i + 1 == history.len() { wall_ms } else { f64::NAN },
            pool_vol: 0.0,
        })
        .collect()
}

/// Generic CSV from a header and stringified rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}
