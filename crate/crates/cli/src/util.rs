use std::fs;
use std::path::{Path, PathBuf};

use ppwald_core::simulate::{read_dataset_csv, Dataset};
use ppwald_core::{Error, Result};

/// FNV-1a hash of the raw config bytes, recorded in every output for
/// provenance.
pub fn config_hash(raw: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in raw.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Loads the events/trials CSV pair from a dataset directory. The horizon
/// comes from the directory's `metadata.json` when present, otherwise from
/// `fallback_horizon`.
pub fn load_dataset(data_dir: &Path, fallback_horizon: f64) -> Result<Dataset> {
    let events = fs::read_to_string(data_dir.join("events.csv"))
        .map_err(|e| Error::Parse(format!("{}: {e}", data_dir.join("events.csv").display())))?;
    let trials = fs::read_to_string(data_dir.join("trials.csv"))
        .map_err(|e| Error::Parse(format!("{}: {e}", data_dir.join("trials.csv").display())))?;
    let horizon = read_horizon(&data_dir.join("metadata.json")).unwrap_or(fallback_horizon);
    read_dataset_csv(&events, &trials, horizon)
}

fn read_horizon(path: &PathBuf) -> Option<f64> {
    let raw = fs::read_to_string(path).ok()?;
    let value: serde_json::Value = serde_json::from_str(&raw).ok()?;
    value.get("horizon")?.as_f64()
}

/// Type-7 (linear interpolation) sample quantile of already-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
