//! Monte Carlo orchestration: realizations fan out over a worker pool,
//! results come back in index order and are reduced sequentially, so the
//! output does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EngineKind, ExperimentConfig};
use crate::analysis::curve::{AxisKind, CurvePoint, DeerCurve};
use crate::analytic::ensemble_signal;
use crate::bloch::{bloch_realization, reduce_realizations, BlochRealization};
use crate::error::{DeerError, Result};
use crate::geometry::{sample_configuration, SamplingParams};
use crate::quantum::QuantumEngine;
use crate::rng::child_seed;
use crate::sequence::{build_deer_timeline, DeerTimeline, DriveParams, SweepKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RealizationValue {
    Signal(f64),
    Bloch(BlochRealization),
}

impl RealizationValue {
    pub fn signal(&self) -> f64 {
        match self {
            RealizationValue::Signal(s) => *s,
            RealizationValue::Bloch(b) => b.cos_phi,
        }
    }
}

struct Realization {
    sampled_count: usize,
    kept_count: usize,
    clamped: bool,
    /// One entry per sweep point.
    values: Vec<std::result::Result<RealizationValue, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub sweep_value: f64,
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub mean_sampled_targets: f64,
    pub mean_kept_targets: f64,
    pub max_kept_targets: usize,
    pub clamped_realizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRun {
    pub engine: EngineKind,
    pub sweep_values: Vec<f64>,
    /// Successful points only.
    pub curve: DeerCurve,
    pub failures: Vec<PointFailure>,
    /// raw[r][p]: realization r at sweep point p (None where it failed).
    pub raw: Vec<Vec<Option<f64>>>,
    pub child_seeds: Vec<u64>,
    pub stats: EngineStats,
}

impl CurveRun {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

pub fn axis_kind(kind: SweepKind) -> AxisKind {
    match kind {
        SweepKind::TsSweep => AxisKind::TsNs,
        SweepKind::FrequencySweep => AxisKind::FrequencyMhz,
    }
}

fn evaluate_realization(
    config: &ExperimentConfig,
    engine: EngineKind,
    sampling: &SamplingParams,
    timelines: &[DeerTimeline],
    drives: &[DriveParams],
    seed: u64,
) -> Realization {
    let failed_all = |msg: String| Realization {
        sampled_count: 0,
        kept_count: 0,
        clamped: false,
        values: vec![Err(msg); drives.len()],
    };
    let spins = match sample_configuration(sampling, &config.nv(), seed) {
        Ok(c) => c,
        Err(e) => return failed_all(e.to_string()),
    };
    let (sampled_count, kept_count, clamped) = (spins.sampled_count, spins.len(), spins.clamped);
    let values = match engine {
        EngineKind::Analytic => timelines
            .iter()
            .zip(drives)
            .map(|(t, d)| Ok(RealizationValue::Signal(ensemble_signal(&spins, t, d))))
            .collect(),
        EngineKind::Bloch => {
            let relax = config.relaxation();
            let opts = config.bloch_options();
            timelines
                .iter()
                .zip(drives)
                .map(|(t, d)| bloch_realization(&spins, t, d, &relax, &opts).map(RealizationValue::Bloch).map_err(|e| e.to_string()))
                .collect()
        }
        EngineKind::Quantum => match QuantumEngine::new(spins, config.quantum_options()) {
            Ok(mut q) => timelines
                .iter()
                .zip(drives)
                .map(|(t, d)| q.signal(t, d).map(|o| RealizationValue::Signal(o.signal)).map_err(|e| e.to_string()))
                .collect(),
            Err(e) => vec![Err(e.to_string()); drives.len()],
        },
    };
    Realization { sampled_count, kept_count, clamped, values }
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run `engine` over the configured sweep with explicit sampling
/// parameters, on a pool of `threads` workers.
pub fn run_curve_with(config: &ExperimentConfig, engine: EngineKind, sampling: &SamplingParams, threads: usize) -> Result<CurveRun> {
    config.validate()?;
    let (values, drives) = config.sweep_drives()?;
    let timelines: Vec<DeerTimeline> = drives
        .iter()
        .map(|d| build_deer_timeline(config.sequence.tau_ns, d, config.sequence.readout_phase_deg))
        .collect::<Result<_>>()?;
    let n = config.engine.n_realizations;
    let seeds: Vec<u64> = (0..n).map(|r| child_seed(config.engine.seed, r as u64)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| DeerError::Parameter(format!("cannot start worker pool: {e}")))?;
    let realizations: Vec<Realization> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| evaluate_realization(config, engine, sampling, &timelines, &drives, s))
            .collect()
    });

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (p, &x) in values.iter().enumerate() {
        let mut ok: Vec<RealizationValue> = Vec::with_capacity(n);
        let mut failure = None;
        for (r, real) in realizations.iter().enumerate() {
            match &real.values[p] {
                Ok(v) => ok.push(*v),
                Err(msg) => {
                    failure.get_or_insert(PointFailure { sweep_value: x, realization: r, message: msg.clone() });
                }
            }
        }
        if let Some(f) = failure {
            failures.push(f);
            continue;
        }
        let (mean, sem) = if engine == EngineKind::Bloch {
            let b: Vec<BlochRealization> = ok
                .iter()
                .map(|v| match v {
                    RealizationValue::Bloch(b) => *b,
                    RealizationValue::Signal(s) => BlochRealization { cos_phi: *s, phase_mean: 0.0, phase_variance: 0.0 },
                })
                .collect();
            let s = reduce_realizations(&b, config.engine.bloch_averaging)?;
            (s.mean, s.sem)
        } else {
            mean_sem(&ok.iter().map(|v| v.signal()).collect::<Vec<_>>())
        };
        points.push(CurvePoint { x, signal_mean: mean, signal_sem: sem, n });
    }
    let raw = realizations
        .iter()
        .map(|r| r.values.iter().map(|v| v.as_ref().ok().map(|v| v.signal())).collect())
        .collect();
    let stats = EngineStats {
        mean_sampled_targets: realizations.iter().map(|r| r.sampled_count as f64).sum::<f64>() / n as f64,
        mean_kept_targets: realizations.iter().map(|r| r.kept_count as f64).sum::<f64>() / n as f64,
        max_kept_targets: realizations.iter().map(|r| r.kept_count).max().unwrap_or(0),
        clamped_realizations: realizations.iter().filter(|r| r.clamped).count(),
    };
    Ok(CurveRun {
        engine,
        sweep_values: values,
        curve: DeerCurve::new(axis_kind(config.sequence.sweep.kind), points)?,
        failures,
        raw,
        child_seeds: seeds,
        stats,
    })
}

/// Run the configured engine.
pub fn run_curve(config: &ExperimentConfig, threads: usize) -> Result<CurveRun> {
    let engine = config.engine.kind;
    run_curve_with(config, engine, &config.sampling(engine), threads)
}
