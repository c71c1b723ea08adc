//! Cross-checking engines on identical seeds and sweeps.

use serde::{Deserialize, Serialize};

use super::config::{EngineKind, ExperimentConfig};
use super::engine::{run_curve_with, CurveRun, PointFailure};
use crate::error::{DeerError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineCurve {
    pub engine: EngineKind,
    /// Aligned with the report's sweep values; NaN where the point failed.
    pub signal_mean: Vec<f64>,
    pub signal_sem: Vec<f64>,
    pub failures: Vec<PointFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: EngineKind,
    pub second: EngineKind,
    /// second − first per sweep point.
    pub difference: Vec<f64>,
    /// |difference| / combined SEM (∞ where the SEMs vanish and the
    /// difference does not).
    pub z_score: Vec<f64>,
    pub max_abs_deviation: f64,
    pub max_z_score: f64,
    pub within_3_sem: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub sweep_values: Vec<f64>,
    pub max_targets: Option<usize>,
    pub curves: Vec<EngineCurve>,
    pub comparisons: Vec<PairComparison>,
}

impl ComparisonReport {
    pub fn is_partial(&self) -> bool {
        self.curves.iter().any(|c| !c.failures.is_empty())
    }

    pub fn pair(&self, a: EngineKind, b: EngineKind) -> Option<&PairComparison> {
        self.comparisons.iter().find(|c| (c.first, c.second) == (a, b) || (c.first, c.second) == (b, a))
    }
}

fn aligned(run: &CurveRun) -> EngineCurve {
    let mut mean = vec![f64::NAN; run.sweep_values.len()];
    let mut sem = vec![f64::NAN; run.sweep_values.len()];
    for p in run.curve.points() {
        if let Some(i) = run.sweep_values.iter().position(|&v| v == p.x) {
            mean[i] = p.signal_mean;
            sem[i] = p.signal_sem;
        }
    }
    EngineCurve { engine: run.engine, signal_mean: mean, signal_sem: sem, failures: run.failures.clone() }
}

fn compare_pair(a: &EngineCurve, b: &EngineCurve) -> PairComparison {
    let difference: Vec<f64> = a.signal_mean.iter().zip(&b.signal_mean).map(|(x, y)| y - x).collect();
    let z_score: Vec<f64> = difference
        .iter()
        .zip(a.signal_sem.iter().zip(&b.signal_sem))
        .map(|(d, (sa, sb))| {
            let s = (sa * sa + sb * sb).sqrt();
            if d.is_nan() {
                f64::NAN
            } else if s > 0.0 {
                d.abs() / s
            } else if *d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_abs_deviation = difference.iter().filter(|d| !d.is_nan()).fold(0.0f64, |m, d| m.max(d.abs()));
    let max_z_score = z_score.iter().filter(|z| !z.is_nan()).fold(0.0f64, |m, &z| m.max(z));
    PairComparison { first: a.engine, second: b.engine, difference, z_score, max_abs_deviation, max_z_score, within_3_sem: max_z_score <= 3.0 }
}

/// Run each engine on the same seeds and sweep. If the quantum engine is
/// among them, its target cap applies to every engine so all see the same
/// spins.
pub fn compare_engines(config: &ExperimentConfig, engines: &[EngineKind], threads: usize) -> Result<ComparisonReport> {
    if engines.len() < 2 {
        return Err(DeerError::Parameter("compare needs at least two engines".into()));
    }
    let mut unique = engines.to_vec();
    unique.dedup();
    if unique.len() != engines.len() {
        return Err(DeerError::Parameter("engines must be listed once each".into()));
    }
    let mut sampling = config.sampling(config.engine.kind);
    if engines.contains(&EngineKind::Quantum) {
        sampling.max_targets = config.sampling(EngineKind::Quantum).max_targets;
    }
    let mut runs = Vec::new();
    for &engine in engines {
        let mut c = config.clone();
        c.engine.kind = engine;
        runs.push(run_curve_with(&c, engine, &sampling, threads)?);
    }
    let curves: Vec<EngineCurve> = runs.iter().map(aligned).collect();
    let mut comparisons = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            comparisons.push(compare_pair(&curves[i], &curves[j]));
        }
    }
    Ok(ComparisonReport { sweep_values: runs[0].sweep_values.clone(), max_targets: sampling.max_targets, curves, comparisons })
}
