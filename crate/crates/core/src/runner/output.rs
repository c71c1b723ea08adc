//! Run artifacts. Every file is written next to its destination under a
//! temporary name and renamed into place once complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{EngineKind, ExperimentConfig, SCHEMA_VERSION};
use super::engine::{CurveRun, EngineStats, PointFailure};
use crate::analysis::curve::fmt_f64;
use crate::error::Result;

/// Environment variable giving the output directory when neither the
/// command line nor the config names one.
pub const OUT_DIR_ENV: &str = "NVDEER_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub engine: EngineKind,
    /// Configuration with all defaults filled in.
    pub config: ExperimentConfig,
    pub larmor_mhz: f64,
    pub sweep_values: Vec<f64>,
    /// Seed of realization r; its initial-sign stream (Bloch) is derived
    /// from it.
    pub child_seeds: Vec<u64>,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub engine_stats: EngineStats,
    pub failures: Vec<PointFailure>,
    pub files: Vec<String>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn curve_csv(run: &CurveRun) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    run.curve.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn raw_csv(run: &CurveRun) -> Vec<u8> {
    let mut s = String::from("realization,child_seed,sweep_value,signal\n");
    for (r, row) in run.raw.iter().enumerate() {
        for (p, v) in row.iter().enumerate() {
            let value = v.map(fmt_f64).unwrap_or_else(|| "nan".into());
            s.push_str(&format!("{r},{},{},{value}\n", run.child_seeds[r], fmt_f64(run.sweep_values[p])));
        }
    }
    s.into_bytes()
}

/// Resolve the output directory: explicit value, then config, then the
/// environment, then the working directory.
pub fn resolve_out_dir(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Write the curve CSV, optional raw CSV, archived config and manifest.
/// Returns the manifest path.
pub fn write_run(dir: &Path, config: &ExperimentConfig, run: &CurveRun, threads: usize, elapsed: Duration) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let label = &config.output.label;
    let mut files = Vec::new();

    let csv_name = format!("{label}.csv");
    write_atomic(&dir.join(&csv_name), &curve_csv(run)?)?;
    files.push(csv_name);

    if config.output.write_raw {
        let raw_name = format!("{label}.raw.csv");
        write_atomic(&dir.join(&raw_name), &raw_csv(run))?;
        files.push(raw_name);
    }

    let cfg_name = format!("{label}.config.toml");
    write_atomic(&dir.join(&cfg_name), config.to_toml_string()?.as_bytes())?;
    files.push(cfg_name);

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        engine: run.engine,
        config: config.clone(),
        larmor_mhz: config.larmor_mhz()?,
        sweep_values: run.sweep_values.clone(),
        child_seeds: run.child_seeds.clone(),
        threads,
        wall_clock_s: elapsed.as_secs_f64(),
        engine_stats: run.stats.clone(),
        failures: run.failures.clone(),
        files,
    };
    let manifest_path = dir.join(format!("{label}.manifest.json"));
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest_path)
}
