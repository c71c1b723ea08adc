//! Closed-form and semi-analytic DEER models for non-interacting targets.
//!
//! A lone target only sees the NV through the branch-dependent field ±a/2,
//! so its propagators are SU(2) rotations that compose in closed form. The
//! Poisson-averaged ensemble signal is exp[−σ ∫(1 − s₁(r)) d²r] over the
//! surface plane; the signal floor and its inverse (the density estimator)
//! use the same Gaussian-phase exponent.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::units::{mhz_to_rad_per_us, ns_to_us};
use crate::constants::{CONSTANTS, MAGIC_ANGLE_DEG};
use crate::error::{DeerError, Result};
use crate::geometry::{nv_target_coupling, NvSite, SpinConfiguration};
use crate::quadrature::integrate;
use crate::sequence::{build_deer_timeline, DeerTimeline, DriveParams, DrivePulse, RadicalAction};

/// Element of SU(2) stored as [[a, −b*], [b, a*]].
#[derive(Debug, Clone, Copy, PartialEq)]
struct Su2 {
    a: Complex64,
    b: Complex64,
}

impl Su2 {
    const IDENTITY: Su2 = Su2 { a: Complex64::new(1.0, 0.0), b: Complex64::new(0.0, 0.0) };

    /// exp(−i t ω·σ/2).
    fn rotation(wx: f64, wz: f64, t: f64) -> Su2 {
        let w = (wx * wx + wz * wz).sqrt();
        if w == 0.0 || t == 0.0 {
            return Su2::IDENTITY;
        }
        let (s, c) = (0.5 * w * t).sin_cos();
        let (nx, nz) = (wx / w, wz / w);
        Su2 { a: Complex64::new(c, -s * nz), b: Complex64::new(0.0, -s * nx) }
    }

    /// π rotation about x.
    const FLIP_X: Su2 = Su2 { a: Complex64::new(0.0, 0.0), b: Complex64::new(0.0, -1.0) };

    /// self · rhs
    fn then_after(self, rhs: Su2) -> Su2 {
        Su2 { a: self.a * rhs.a - self.b.conj() * rhs.b, b: self.b * rhs.a + self.a.conj() * rhs.b }
    }
}

/// Parameters of one target under the standard DEER timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSpinParams {
    /// NV coupling a, MHz.
    pub coupling_mhz: f64,
    /// Target resonance minus drive frequency, MHz.
    pub detuning_mhz: f64,
    pub rabi_mhz: f64,
    /// Echo-half length τ, ns.
    pub tau_ns: f64,
    pub ts_ns: f64,
    pub offset_ns: f64,
    /// Replace the finite drive by ideal π flips.
    pub instantaneous: bool,
}

impl SingleSpinParams {
    fn drive(&self) -> DriveParams {
        DriveParams {
            rabi_mhz: self.rabi_mhz,
            frequency_offset_mhz: 0.0,
            duration_ns: self.ts_ns,
            offset_after_nv_pulse_ns: self.offset_ns,
            pulse: if self.instantaneous { DrivePulse::InstantaneousPi } else { DrivePulse::Finite },
        }
    }
}

/// Echo factor of one target on an arbitrary timeline.
///
/// `detuning_mhz` is the target's resonance minus the drive frequency.
pub fn single_spin_on_timeline(coupling_mhz: f64, detuning_mhz: f64, rabi_mhz: f64, timeline: &DeerTimeline) -> f64 {
    let a = mhz_to_rad_per_us(coupling_mhz);
    let delta = mhz_to_rad_per_us(detuning_mhz);
    let omega = mhz_to_rad_per_us(rabi_mhz);
    let mut ua = Su2::IDENTITY;
    let mut ub = Su2::IDENTITY;
    for (i, interval) in timeline.intervals().iter().enumerate() {
        // Path A starts in m_s = 0 (+a/2) and swaps branch at every π pulse.
        let sign_a = if i % 2 == 0 { 0.5 } else { -0.5 };
        for seg in interval {
            let t = ns_to_us(seg.duration_ns);
            let (step_a, step_b) = match seg.radical {
                RadicalAction::InstantPi => (Su2::FLIP_X, Su2::FLIP_X),
                RadicalAction::Off => {
                    (Su2::rotation(0.0, delta + sign_a * a, t), Su2::rotation(0.0, delta - sign_a * a, t))
                }
                RadicalAction::Drive => {
                    (Su2::rotation(omega, delta + sign_a * a, t), Su2::rotation(omega, delta - sign_a * a, t))
                }
            };
            ua = step_a.then_after(ua);
            ub = step_b.then_after(ub);
        }
    }
    (ub.a.conj() * ua.a + ub.b.conj() * ua.b).re
}

/// Finite-Tₛ DEER factor of a single target.
pub fn single_spin_deer(p: &SingleSpinParams) -> Result<f64> {
    let timeline = build_deer_timeline(p.tau_ns, &p.drive(), 0.0)?;
    Ok(single_spin_on_timeline(p.coupling_mhz, p.detuning_mhz, p.rabi_mhz, &timeline))
}

pub fn ensemble_product(factors: &[f64]) -> f64 {
    factors.iter().product()
}

/// Product of single-target factors for every spin in `config`.
pub fn ensemble_signal(config: &SpinConfiguration, timeline: &DeerTimeline, drive: &DriveParams) -> f64 {
    let factors: Vec<f64> = config
        .targets
        .iter()
        .zip(&config.nv_couplings_mhz)
        .map(|(t, &a)| single_spin_on_timeline(a, t.detuning_mhz - drive.frequency_offset_mhz, drive.rabi_mhz, timeline))
        .collect();
    ensemble_product(&factors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorParams {
    pub density_per_nm2: f64,
    pub depth_nm: f64,
    /// Echo-half length τ, ns.
    pub tau_ns: f64,
}

impl FloorParams {
    fn validate(&self) -> Result<()> {
        if !(self.density_per_nm2 >= 0.0) || !(self.depth_nm > 0.0) || !(self.tau_ns > 0.0) {
            return Err(DeerError::Domain(format!(
                "need density >= 0, depth > 0, tau > 0; got {}, {}, {}",
                self.density_per_nm2, self.depth_nm, self.tau_ns
            )));
        }
        Ok(())
    }
}

/// Field orientation relative to the surface, degrees from the normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvAxis {
    pub polar_deg: f64,
    pub azimuth_deg: f64,
}

impl NvAxis {
    pub const NORMAL: NvAxis = NvAxis { polar_deg: 0.0, azimuth_deg: 0.0 };
    pub const TILTED_111: NvAxis = NvAxis { polar_deg: MAGIC_ANGLE_DEG, azimuth_deg: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Absolute tolerance on ∫(1 − s₁) d²r, nm².
    pub abs_tol: f64,
    /// Radial cutoff as a multiple of the depth.
    pub rmax_factor: f64,
    pub max_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-6, rmax_factor: 10.0, max_depth: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonAverage {
    pub signal: f64,
    /// σ ∫(1 − s₁) d²r inside the cutoff.
    pub exponent: f64,
    /// Quadrature error estimate on the exponent.
    pub exponent_error: f64,
    /// Upper bound on the exponent contributed beyond the cutoff,
    /// from 1 − s₁ ≤ (a τ)²/2 and |a| ≤ 2P/r³.
    pub tail_bound: f64,
}

/// Integrate `f(x, y)` over the disk of radius `radius` in polar coordinates.
/// When `symmetric` the azimuthal integral is replaced by 2π·f(ρ, 0).
fn disk_integral<F: Fn(f64, f64) -> f64>(f: F, radius: f64, symmetric: bool, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let inner_tol = spec.abs_tol / (radius * radius).max(1.0);
    let mut failure: Option<DeerError> = None;
    let mut inner_error = 0.0;
    let outer = integrate(
        |rho| {
            if symmetric {
                return 2.0 * PI * rho * f(rho, 0.0);
            }
            match integrate(|phi| f(rho * phi.cos(), rho * phi.sin()), 0.0, 2.0 * PI, inner_tol, spec.max_depth) {
                Ok(e) => {
                    inner_error = f64::max(inner_error, e.abs_error);
                    rho * e.value
                }
                Err(err) => {
                    failure.get_or_insert(err);
                    0.0
                }
            }
        },
        0.0,
        radius,
        0.5 * spec.abs_tol,
        spec.max_depth,
    )?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok((outer.value, outer.abs_error + inner_error * radius * radius / 2.0))
}

/// Poisson-averaged DEER signal of an unbounded surface layer of density σ
/// (targets on resonance with the nominal frequency, so the drive offset is
/// the only detuning).
pub fn poisson_average_signal(params: &FloorParams, drive: &DriveParams, nv_axis: NvAxis, spec: &QuadratureSpec) -> Result<PoissonAverage> {
    params.validate()?;
    if params.density_per_nm2 == 0.0 {
        return Ok(PoissonAverage { signal: 1.0, exponent: 0.0, exponent_error: 0.0, tail_bound: 0.0 });
    }
    let nv = NvSite::new(params.depth_nm, nv_axis.polar_deg, nv_axis.azimuth_deg)?;
    let timeline = build_deer_timeline(params.tau_ns, drive, 0.0)?;
    let detuning = -drive.frequency_offset_mhz;
    let radius = spec.rmax_factor * params.depth_nm;
    let (integral, err) = disk_integral(
        |x, y| {
            let a = nv_target_coupling([x, y, 0.0], &nv).expect("surface point never coincides with the NV");
            1.0 - single_spin_on_timeline(a, detuning, drive.rabi_mhz, &timeline)
        },
        radius,
        nv_axis.polar_deg == 0.0,
        spec,
    )?;
    let sigma = params.density_per_nm2;
    let exponent = sigma * integral;
    let p = CONSTANTS.dipolar_prefactor_angular;
    let tau = ns_to_us(params.tau_ns);
    let tail_bound = sigma * PI * p * p * tau * tau / radius.powi(4);
    Ok(PoissonAverage { signal: (-exponent).exp(), exponent, exponent_error: sigma * err, tail_bound })
}

/// The exponent k in the floor exp(−k):
/// (μ₀/4π)²·3πγ⁴ħ²σ τ² / (16 d⁴).
pub fn eq1_exponent(params: &FloorParams) -> Result<f64> {
    params.validate()?;
    let p = CONSTANTS.dipolar_prefactor_angular;
    let tau = ns_to_us(params.tau_ns);
    Ok(3.0 * PI / 16.0 * p * p * params.density_per_nm2 * tau * tau / params.depth_nm.powi(4))
}

/// Minimum over Tₛ of the DEER signal in the Gaussian-phase limit.
pub fn eq1_floor(params: &FloorParams) -> Result<f64> {
    Ok((-eq1_exponent(params)?).exp())
}

/// ½ σ τ² ∫ a(r)² d²r over the plane (angular a), the second-moment
/// exponent of a layer flipped by ideal π pulses at the start of each half.
pub fn second_moment_exponent(params: &FloorParams, nv_axis: NvAxis, spec: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    let nv = NvSite::new(params.depth_nm, nv_axis.polar_deg, nv_axis.azimuth_deg)?;
    let radius = spec.rmax_factor * params.depth_nm;
    let (integral, _) = disk_integral(
        |x, y| {
            let a = mhz_to_rad_per_us(nv_target_coupling([x, y, 0.0], &nv).expect("off-NV point"));
            a * a
        },
        radius,
        nv_axis.polar_deg == 0.0,
        spec,
    )?;
    let tau = ns_to_us(params.tau_ns);
    Ok(0.5 * params.density_per_nm2 * tau * tau * integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldOrientation {
    SurfaceNormal,
    Tilted111,
}

impl FieldOrientation {
    pub fn axis(self) -> NvAxis {
        match self {
            FieldOrientation::SurfaceNormal => NvAxis::NORMAL,
            FieldOrientation::Tilted111 => NvAxis::TILTED_111,
        }
    }
}

/// Which candidate orientation reproduces the floor exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationCheck {
    pub eq1_exponent: f64,
    /// second-moment exponent / floor exponent, field along the normal
    pub normal_ratio: f64,
    /// same, field tilted by the magic angle
    pub tilted_ratio: f64,
    pub tolerance: f64,
    pub matched: Option<FieldOrientation>,
}

pub fn identify_eq1_orientation(params: &FloorParams) -> Result<OrientationCheck> {
    let spec = QuadratureSpec { abs_tol: 1e-10, rmax_factor: 60.0, max_depth: 40 };
    let k = eq1_exponent(params)?;
    if k == 0.0 {
        return Err(DeerError::Domain("orientation check needs a non-zero density".into()));
    }
    let normal_ratio = second_moment_exponent(params, NvAxis::NORMAL, &spec)? / k;
    let tilted_ratio = second_moment_exponent(params, NvAxis::TILTED_111, &spec)? / k;
    let tolerance = 1e-3;
    let hits: Vec<FieldOrientation> = [
        (normal_ratio, FieldOrientation::SurfaceNormal),
        (tilted_ratio, FieldOrientation::Tilted111),
    ]
    .iter()
    .filter(|(r, _)| (r - 1.0).abs() < tolerance)
    .map(|&(_, o)| o)
    .collect();
    let matched = if hits.len() == 1 { Some(hits[0]) } else { None };
    Ok(OrientationCheck { eq1_exponent: k, normal_ratio, tilted_ratio, tolerance, matched })
}
