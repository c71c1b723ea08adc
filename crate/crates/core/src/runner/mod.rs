//! Configuration, Monte Carlo orchestration across engines and sweep
//! points, and persistence of curves and run manifests.

pub mod compare;
pub mod config;
pub mod engine;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use compare::{compare_engines, ComparisonReport};
pub use config::{EngineKind, ExperimentConfig, SCHEMA_VERSION};
pub use engine::{run_curve, run_curve_with, CurveRun};
pub use output::{resolve_out_dir, write_run, RunManifest, OUT_DIR_ENV};

use crate::error::Result;

/// Default worker count: the number of logical cores.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub run: CurveRun,
    pub manifest_path: PathBuf,
    pub out_dir: PathBuf,
}

/// Validate, run and persist one experiment.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>, threads: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dir = resolve_out_dir(out_dir, config);
    let mut resolved = config.clone();
    resolved.output.directory = Some(dir.clone());
    let start = Instant::now();
    let run = run_curve(&resolved, threads)?;
    let manifest_path = write_run(&dir, &resolved, &run, threads, start.elapsed())?;
    Ok(ExperimentOutcome { run, manifest_path, out_dir: dir })
}
