//! Experiment configuration.
//!
//! TOML, one table per concern. Every physical quantity carries its unit in
//! the key name. Example:
//!
//! ```toml
//! schema_version = 1
//!
//! [physics]
//! field_gauss = 233.0
//! nv_depth_nm = 12.0
//! nv_axis_polar_deg = 54.735610317245346
//! nv_axis_azimuth_deg = 0.0
//!
//! [targets]
//! density_per_nm2 = 0.15
//! rmax_factor = 10.0
//! min_separation_nm = 0.5
//! detuning_fwhm_mhz = 20.0
//! detuning_shape = "lorentzian"
//! max_targets = 8
//! # t1_us = 10.0
//! # t2_us = 0.05
//! equilibrium_mz = 0.0
//!
//! [sequence]
//! tau_ns = 900.0
//! rabi_mhz = 5.0
//! ts_ns = 100.0
//! drive_offset_ns = 0.0
//! frequency_offset_mhz = 0.0
//! pulse = "finite"
//! readout_phase_deg = 0.0
//!
//! [sequence.sweep]
//! kind = "ts"
//! start = 20.0
//! stop = 880.0
//! step = 20.0
//!
//! [engine]
//! kind = "quantum"
//! n_realizations = 20
//! seed = 1
//!
//! [output]
//! directory = "out"
//! label = "run"
//! ```
//!
//! Sweep values are Tₛ in ns for `kind = "ts"` and absolute drive
//! frequencies in MHz for `kind = "frequency"`; give either `values` or
//! `start`/`stop`/`step` (stop inclusive). For Tₛ sweeps the drive sits at
//! `frequency_offset_mhz` from the Larmor frequency; for frequency sweeps
//! the drive lasts `ts_ns`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bloch::{BlochIntegrator, BlochOptions, PhaseAveraging, RelaxationParams};
use crate::constants::{larmor_frequency, MAGIC_ANGLE_DEG};
use crate::error::{DeerError, Result};
use crate::geometry::{DetuningShape, NvSite, SamplingParams};
use crate::quantum::{InitialState, Interaction, QuantumOptions, DEFAULT_CAPACITY_QUBITS, DEFAULT_EXACT_DIAG_MAX_QUBITS};
use crate::sequence::{build_deer_timeline, sweep_axis, DriveParams, DrivePulse, SweepKind};

pub const SCHEMA_VERSION: u32 = 1;
/// Target cap applied to the quantum engine when none is configured.
pub const DEFAULT_QUANTUM_MAX_TARGETS: usize = 8;
/// Largest sweep accepted in range form.
pub const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Quantum,
    Bloch,
    Analytic,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Quantum => "quantum",
            EngineKind::Bloch => "bloch",
            EngineKind::Analytic => "analytic",
        })
    }
}

impl std::str::FromStr for EngineKind {
    type Err = DeerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quantum" => Ok(EngineKind::Quantum),
            "bloch" => Ok(EngineKind::Bloch),
            "analytic" => Ok(EngineKind::Analytic),
            other => Err(DeerError::Parse(format!("unknown engine '{other}' (quantum, bloch, analytic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub field_gauss: f64,
    pub nv_depth_nm: f64,
    #[serde(default = "magic_angle")]
    pub nv_axis_polar_deg: f64,
    #[serde(default)]
    pub nv_axis_azimuth_deg: f64,
}

fn magic_angle() -> f64 {
    MAGIC_ANGLE_DEG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub density_per_nm2: f64,
    #[serde(default = "default_rmax")]
    pub rmax_factor: f64,
    #[serde(default = "default_min_sep")]
    pub min_separation_nm: f64,
    #[serde(default = "default_fwhm")]
    pub detuning_fwhm_mhz: f64,
    #[serde(default = "default_shape")]
    pub detuning_shape: DetuningShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_targets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2_us: Option<f64>,
    #[serde(default)]
    pub equilibrium_mz: f64,
}

fn default_rmax() -> f64 {
    SamplingParams::default().rmax_factor
}
fn default_min_sep() -> f64 {
    SamplingParams::default().min_separation_nm
}
fn default_fwhm() -> f64 {
    SamplingParams::default().detuning_fwhm_mhz
}
fn default_shape() -> DetuningShape {
    DetuningShape::Lorentzian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl SweepConfig {
    /// Explicit values, or the inclusive range start, start+step, … ≤ stop.
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => Ok(v.clone()),
            (None, Some(a), Some(b), Some(h)) => {
                if !(h > 0.0) || !a.is_finite() || !b.is_finite() || b < a {
                    return Err(DeerError::Parameter(format!("sweep range needs step > 0 and stop >= start, got {a}..{b} by {h}")));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize + 1;
                if n > MAX_SWEEP_POINTS {
                    return Err(DeerError::Parameter(format!("sweep range has {n} points (limit {MAX_SWEEP_POINTS})")));
                }
                Ok((0..n).map(|i| a + i as f64 * h).collect())
            }
            _ => Err(DeerError::Parameter("sweep needs either `values` or all of `start`, `stop`, `step`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub tau_ns: f64,
    #[serde(default = "default_rabi")]
    pub rabi_mhz: f64,
    #[serde(default = "default_ts")]
    pub ts_ns: f64,
    #[serde(default)]
    pub drive_offset_ns: f64,
    #[serde(default)]
    pub frequency_offset_mhz: f64,
    #[serde(default)]
    pub pulse: DrivePulse,
    #[serde(default)]
    pub readout_phase_deg: f64,
    pub sweep: SweepConfig,
}

fn default_rabi() -> f64 {
    DriveParams::default().rabi_mhz
}
fn default_ts() -> f64 {
    DriveParams::default().duration_ns
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub n_realizations: usize,
    pub seed: u64,
    #[serde(default)]
    pub interaction: Interaction,
    /// β = ħω/k_BT for a thermal target state; absent means maximally mixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_beta: Option<f64>,
    #[serde(default = "default_capacity")]
    pub capacity_qubits: usize,
    #[serde(default = "default_exact_diag")]
    pub exact_diag_max_qubits: usize,
    #[serde(default)]
    pub bloch_averaging: PhaseAveraging,
    #[serde(default)]
    pub bloch_integrator: BlochIntegrator,
    #[serde(default)]
    pub initial_polarization: f64,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY_QUBITS
}
fn default_exact_diag() -> usize {
    DEFAULT_EXACT_DIAG_MAX_QUBITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_label")]
    pub label: String,
    /// Also write every realization's signal.
    #[serde(default)]
    pub write_raw: bool,
}

fn default_label() -> String {
    "run".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, label: default_label(), write_raw: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub physics: PhysicsConfig,
    pub targets: TargetsConfig,
    pub sequence: SequenceConfig,
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| DeerError::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The configuration with every default written out.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| DeerError::Parse(e.to_string()))
    }

    pub fn nv(&self) -> NvSite {
        NvSite {
            depth_nm: self.physics.nv_depth_nm,
            axis_polar_deg: self.physics.nv_axis_polar_deg,
            axis_azimuth_deg: self.physics.nv_axis_azimuth_deg,
        }
    }

    /// Sampling parameters for `engine`. The quantum engine gets a target
    /// cap (configured or default); the others run unclamped unless a cap
    /// is configured explicitly.
    pub fn sampling(&self, engine: EngineKind) -> SamplingParams {
        let t = &self.targets;
        let max_targets = match engine {
            EngineKind::Quantum => Some(t.max_targets.unwrap_or(DEFAULT_QUANTUM_MAX_TARGETS)),
            _ => t.max_targets,
        };
        SamplingParams {
            density_per_nm2: t.density_per_nm2,
            rmax_factor: t.rmax_factor,
            min_separation_nm: t.min_separation_nm,
            detuning_fwhm_mhz: t.detuning_fwhm_mhz,
            detuning_shape: t.detuning_shape,
            max_targets,
        }
    }

    pub fn relaxation(&self) -> RelaxationParams {
        RelaxationParams { t1_us: self.targets.t1_us, t2_us: self.targets.t2_us, equilibrium_mz: self.targets.equilibrium_mz }
    }

    pub fn quantum_options(&self) -> QuantumOptions {
        QuantumOptions {
            interaction: self.engine.interaction,
            initial_state: match self.engine.thermal_beta {
                Some(beta) => InitialState::Thermal { beta },
                None => InitialState::MaximallyMixed,
            },
            capacity_qubits: self.engine.capacity_qubits,
            exact_diag_max_qubits: self.engine.exact_diag_max_qubits,
        }
    }

    pub fn bloch_options(&self) -> BlochOptions {
        BlochOptions {
            integrator: self.engine.bloch_integrator,
            averaging: self.engine.bloch_averaging,
            initial_polarization: self.engine.initial_polarization,
        }
    }

    pub fn base_drive(&self) -> DriveParams {
        let s = &self.sequence;
        DriveParams {
            rabi_mhz: s.rabi_mhz,
            frequency_offset_mhz: s.frequency_offset_mhz,
            duration_ns: s.ts_ns,
            offset_after_nv_pulse_ns: s.drive_offset_ns,
            pulse: s.pulse,
        }
    }

    pub fn larmor_mhz(&self) -> Result<f64> {
        larmor_frequency(self.physics.field_gauss)
    }

    /// Drive parameters for every sweep value.
    pub fn sweep_drives(&self) -> Result<(Vec<f64>, Vec<DriveParams>)> {
        let values = self.sequence.sweep.resolve()?;
        let drives = sweep_axis(self.sequence.sweep.kind, &values, &self.base_drive(), self.sequence.tau_ns, self.larmor_mhz()?)?;
        Ok((values, drives))
    }

    /// Check every precondition; all violations are reported together.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                bad.push(e.to_string());
            }
        };
        if self.schema_version != SCHEMA_VERSION {
            push(Err(DeerError::Parameter(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ))));
        }
        push(self.larmor_mhz().map(|_| ()));
        push(self.nv().validate());
        for engine in [EngineKind::Quantum, self.engine.kind] {
            push(self.sampling(engine).validate());
        }
        push(self.relaxation().validate());
        push(self.base_drive().validate());
        if !(self.sequence.tau_ns > 0.0) || !self.sequence.tau_ns.is_finite() {
            push(Err(DeerError::Parameter(format!("tau must be > 0 ns, got {}", self.sequence.tau_ns))));
        }
        if self.sequence.readout_phase_deg != 0.0 && self.sequence.readout_phase_deg != 180.0 {
            push(Err(DeerError::Parameter(format!(
                "readout phase must be 0 or 180 degrees, got {}",
                self.sequence.readout_phase_deg
            ))));
        }
        if self.larmor_mhz().is_ok() && self.sequence.tau_ns > 0.0 {
            match self.sweep_drives() {
                Ok((_, drives)) => {
                    if let Some(d) = drives.first() {
                        push(build_deer_timeline(self.sequence.tau_ns, d, self.sequence.readout_phase_deg).map(|_| ()));
                    }
                }
                Err(e) => push(Err(e)),
            }
        }
        if self.engine.n_realizations == 0 {
            push(Err(DeerError::Parameter("n_realizations must be >= 1".into())));
        }
        if let Some(beta) = self.engine.thermal_beta {
            if !beta.is_finite() {
                push(Err(DeerError::Parameter(format!("thermal_beta must be finite, got {beta}"))));
            }
        }
        if !(self.engine.initial_polarization.abs() <= 1.0) {
            push(Err(DeerError::Parameter(format!(
                "initial_polarization must lie in [-1, 1], got {}",
                self.engine.initial_polarization
            ))));
        }
        if self.engine.kind == EngineKind::Quantum {
            let cap = self.sampling(EngineKind::Quantum).max_targets.unwrap_or(0);
            if cap > self.engine.capacity_qubits {
                push(Err(DeerError::Capacity(format!(
                    "max_targets = {cap} exceeds the quantum engine capacity of {} qubits",
                    self.engine.capacity_qubits
                ))));
            }
        }
        if self.output.label.is_empty() || self.output.label.contains(['/', '\\']) {
            push(Err(DeerError::Parameter(format!("output label '{}' must be a plain file stem", self.output.label))));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DeerError::Validation(bad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
schema_version = 1
[physics]
field_gauss = 233.0
nv_depth_nm = 12.0
[targets]
density_per_nm2 = 0.1
[sequence]
tau_ns = 900.0
[sequence.sweep]
kind = "ts"
start = 20.0
stop = 100.0
step = 20.0
[engine]
kind = "analytic"
n_realizations = 3
seed = 7
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.sequence.sweep.resolve().unwrap(), vec![20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(c.physics.nv_axis_polar_deg, MAGIC_ANGLE_DEG);
        assert_eq!(c.sampling(EngineKind::Quantum).max_targets, Some(DEFAULT_QUANTUM_MAX_TARGETS));
        assert_eq!(c.sampling(EngineKind::Analytic).max_targets, None);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn every_violation_is_listed() {
        let s = MINIMAL
            .replace("nv_depth_nm = 12.0", "nv_depth_nm = -1.0")
            .replace("n_realizations = 3", "n_realizations = 0")
            .replace("stop = 100.0", "stop = 1000.0");
        let c = ExperimentConfig::from_toml_str(&s).unwrap();
        match c.validate() {
            Err(DeerError::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let s = MINIMAL.replace("seed = 7", "seed = 7\ncolour = 1");
        assert!(matches!(ExperimentConfig::from_toml_str(&s), Err(DeerError::Parse(_))));
    }
}
