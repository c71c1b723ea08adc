use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::units::ns_to_us;
use crate::constants::CONSTANTS;
use crate::error::{DeerError, Result};

/// Densities above this (nm⁻²) are classed as dye-like.
pub const DARK_SPIN_THRESHOLD_PER_NM2: f64 = 0.05;

/// Mean implantation depth used when none is given, nm.
pub const DEFAULT_MEAN_DEPTH_NM: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Ok,
    /// The minimum sat above 1 and was clamped.
    NoiseFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub sigma_hat_per_nm2: f64,
    /// 1σ from the SEM of the minimum, when one was supplied.
    pub sigma_hat_uncertainty: Option<f64>,
    pub min_signal: f64,
    /// After clamping to ≤ 1.
    pub min_signal_used: f64,
    pub mean_depth_nm: f64,
    pub tau_ns: f64,
    pub above_dark_threshold: bool,
    pub status: EstimateStatus,
}

/// σ per unit −ln S: 16 d⁴ / (3π P² τ²), P the angular dipolar prefactor.
pub fn density_per_log_unit(mean_depth_nm: f64, tau_ns: f64) -> f64 {
    let p = CONSTANTS.dipolar_prefactor_angular;
    let tau = ns_to_us(tau_ns);
    16.0 * mean_depth_nm.powi(4) / (3.0 * PI * p * p * tau * tau)
}

pub fn estimate_density(min_signal: f64, mean_depth_nm: f64, tau_ns: f64) -> Result<DensityEstimate> {
    estimate_density_with_sem(min_signal, None, mean_depth_nm, tau_ns)
}

/// σ̂ = −ln(S_min)·16 d̄⁴/(3π P² τ²), with first-order error propagation
/// of `min_signal_sem` when given.
pub fn estimate_density_with_sem(
    min_signal: f64,
    min_signal_sem: Option<f64>,
    mean_depth_nm: f64,
    tau_ns: f64,
) -> Result<DensityEstimate> {
    if !(min_signal > 0.0) {
        return Err(DeerError::Domain(format!("minimum signal must be > 0 for the log, got {min_signal}")));
    }
    if !(mean_depth_nm > 0.0) || !(tau_ns > 0.0) || !mean_depth_nm.is_finite() || !tau_ns.is_finite() {
        return Err(DeerError::Domain(format!("need depth > 0 and tau > 0, got {mean_depth_nm} nm, {tau_ns} ns")));
    }
    if let Some(s) = min_signal_sem {
        if !(s >= 0.0) {
            return Err(DeerError::Domain(format!("sem must be >= 0, got {s}")));
        }
    }
    let (used, status) = if min_signal > 1.0 { (1.0, EstimateStatus::NoiseFloor) } else { (min_signal, EstimateStatus::Ok) };
    let k = density_per_log_unit(mean_depth_nm, tau_ns);
    // -ln(1) is +0.0 only if written this way.
    let sigma = if used == 1.0 { 0.0 } else { -used.ln() * k };
    Ok(DensityEstimate {
        sigma_hat_per_nm2: sigma,
        sigma_hat_uncertainty: min_signal_sem.map(|s| s * k / used),
        min_signal,
        min_signal_used: used,
        mean_depth_nm,
        tau_ns,
        above_dark_threshold: sigma > DARK_SPIN_THRESHOLD_PER_NM2,
        status,
    })
}

pub fn classify_density(sigma_hat_per_nm2: f64) -> bool {
    sigma_hat_per_nm2 > DARK_SPIN_THRESHOLD_PER_NM2
}
