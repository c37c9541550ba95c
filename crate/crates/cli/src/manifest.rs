//! Run manifests: what was run, on which inputs, and where the results went.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Version of the CSV layouts written by this build.
pub const CSV_SCHEMA: &str = "babnd-csv/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub csv_schema: String,
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    /// SHA-256 of the resolved configuration.
    pub config_digest: String,
    pub model_digest: Option<String>,
    pub seed: u64,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of any serializable configuration via its JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(value)?.as_bytes()))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Columns excluded when comparing reruns.
pub fn is_timing_column(name: &str) -> bool {
    name == "wall_ms"
}

/// Compares two CSV files column by column, skipping timing columns.
/// Returns a description of the first difference.
pub fn diff_csv(a: &Path, b: &Path) -> Result<Option<String>> {
    let read = |p: &Path| -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
        let mut r = csv::Reader::from_path(p).with_context(|| format!("reading {}", p.display()))?;
        let headers = r.headers()?.clone();
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((headers, rows))
    };
    let (ha, ra) = read(a)?;
    let (hb, rb) = read(b)?;
    if ha != hb {
        return Ok(Some(format!("headers differ: {ha:?} vs {hb:?}")));
    }
    if ra.len() != rb.len() {
        return Ok(Some(format!("{} rows vs {} rows", ra.len(), rb.len())));
    }
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        for (c, name) in ha.iter().enumerate() {
            if !is_timing_column(name) && x.get(c) != y.get(c) {
                return Ok(Some(format!(
                    "row {i}, column {name}: {:?} vs {:?}",
                    x.get(c),
                    y.get(c)
                )));
            }
        }
    }
    Ok(None)
}

/// Compares two JSON files ignoring timing fields at any depth.
pub fn diff_json(a: &Path, b: &Path) -> Result<Option<String>> {
    let read = |p: &Path| -> Result<serde_json::Value> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(serde_json::from_str(&text)?)
    };
    let (mut x, mut y) = (read(a)?, read(b)?);
    strip_timing(&mut x);
    strip_timing(&mut y);
    Ok((x != y).then(|| format!("{} and {} differ", a.display(), b.display())))
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !is_timing_column(k));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
