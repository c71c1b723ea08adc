//! Classical-magnetization model of the target layer.
//!
//! Each target is a unit Bloch vector obeying, in the frame rotating at the
//! drive frequency,
//!
//!   dm/dt = m × ω − (m_x, m_y, 0)/T₂ − (0, 0, m_z − m_eq)/T₁,  ω = (Ω, 0, δ).
//!
//! The NV picks up φ = Σ_k a_k ∫ η(t) m_z,k(t)/2 dt with η = +1 before the
//! echo π pulse and −1 after. The factor ½ maps m_z = ±1 onto s_z = ±½, so
//! a static spin flipped by ideal pulses reproduces the quantum cos(aτ).
//!
//! Piecewise-constant segments are linear (affine when m_eq ≠ 0), so the
//! exact integrator exponentiates the 5×5 generator acting on
//! (m_x, m_y, m_z, ∫m_z dt, 1). Drive-off segments use the closed form.

use nalgebra::{Matrix5, Vector5};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::units::{mhz_to_rad_per_us, ns_to_us};
use crate::error::{DeerError, Result};
use crate::geometry::{sample_configuration, NvSite, SamplingParams, SpinConfiguration};
use crate::rng::{child_seed, rng_from_seed};
use crate::sequence::{DeerTimeline, DriveParams, RadicalAction, Segment};

/// RK4 gives up when a segment would need more steps than this.
pub const RK4_MAX_STEPS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub m: [f64; 3],
    pub time_ns: f64,
}

impl BlochState {
    pub fn along_z(mz: f64) -> Self {
        Self { m: [0.0, 0.0, mz], time_ns: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.m.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Relaxation times in µs; `None` means no relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    pub t1_us: Option<f64>,
    pub t2_us: Option<f64>,
    pub equilibrium_mz: f64,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        Self { t1_us: None, t2_us: None, equilibrium_mz: 0.0 }
    }
}

impl RelaxationParams {
    pub fn new(t1_us: Option<f64>, t2_us: Option<f64>) -> Result<Self> {
        let r = Self { t1_us, t2_us, equilibrium_mz: 0.0 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1_us), ("t2", self.t2_us)] {
            if let Some(t) = t {
                if !(t > 0.0) {
                    return Err(DeerError::Parameter(format!("{name} must be > 0 us or absent, got {t}")));
                }
            }
        }
        if let (Some(t1), Some(t2)) = (self.t1_us, self.t2_us) {
            if t2 > 2.0 * t1 {
                return Err(DeerError::Parameter(format!("t2 = {t2} us exceeds 2*t1 = {} us", 2.0 * t1)));
            }
        }
        if !(self.equilibrium_mz.abs() <= 1.0) {
            return Err(DeerError::Parameter(format!("equilibrium m_z must lie in [-1, 1], got {}", self.equilibrium_mz)));
        }
        Ok(())
    }

    fn rate1(&self) -> f64 {
        self.t1_us.map_or(0.0, |t| 1.0 / t)
    }

    fn rate2(&self) -> f64 {
        self.t2_us.map_or(0.0, |t| 1.0 / t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlochIntegrator {
    /// Closed form when Ω = 0, generator exponential otherwise.
    #[default]
    Exact,
    /// Fixed-step RK4 whenever both Ω and δ are non-zero.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseAveraging {
    /// Mean of cos φ.
    #[default]
    Cosine,
    /// cos⟨φ⟩·exp(−Var φ/2).
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochOptions {
    pub integrator: BlochIntegrator,
    pub averaging: PhaseAveraging,
    /// Mean initial m_z; each spin starts at +z with probability (1 + p)/2.
    pub initial_polarization: f64,
}

impl Default for BlochOptions {
    fn default() -> Self {
        Self { integrator: BlochIntegrator::Exact, averaging: PhaseAveraging::Cosine, initial_polarization: 0.0 }
    }
}

/// State after a segment together with ∫ m_z dt over it (µs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochStep {
    pub state: BlochState,
    pub mz_integral_us: f64,
}

fn generator(omega: f64, delta: f64, relax: &RelaxationParams) -> Matrix5<f64> {
    let (g1, g2) = (relax.rate1(), relax.rate2());
    #[rustfmt::skip]
    let a = Matrix5::new(
        -g2,    delta,  0.0,  0.0, 0.0,
        -delta, -g2,    omega, 0.0, 0.0,
        0.0,    -omega, -g1,  0.0, relax.equilibrium_mz * g1,
        0.0,    0.0,    1.0,  0.0, 0.0,
        0.0,    0.0,    0.0,  0.0, 0.0,
    );
    a
}

/// Ω = 0: transverse precession with decay, longitudinal recovery.
fn free_closed_form(m: [f64; 3], delta: f64, t: f64, relax: &RelaxationParams) -> ([f64; 3], f64) {
    let (g1, g2) = (relax.rate1(), relax.rate2());
    let decay2 = (-g2 * t).exp();
    let (s, c) = (delta * t).sin_cos();
    let mx = decay2 * (m[0] * c + m[1] * s);
    let my = decay2 * (-m[0] * s + m[1] * c);
    let meq = relax.equilibrium_mz;
    let (mz, integral) = if g1 == 0.0 {
        (m[2], m[2] * t)
    } else {
        let e1 = (-g1 * t).exp();
        (meq + (m[2] - meq) * e1, meq * t + (m[2] - meq) * (-(-g1 * t).exp_m1()) / g1)
    };
    ([mx, my, mz], integral)
}

fn rk4(m: [f64; 3], omega: f64, delta: f64, t: f64, relax: &RelaxationParams) -> Result<([f64; 3], f64)> {
    let a = generator(omega, delta, relax);
    let w = (omega * omega + delta * delta).sqrt();
    let mut h_max = f64::INFINITY;
    if w > 0.0 {
        h_max = h_max.min(1.0 / (100.0 * w));
    }
    for t_rel in [relax.t1_us, relax.t2_us].into_iter().flatten() {
        h_max = h_max.min(t_rel / 20.0);
    }
    let steps = if h_max.is_finite() { (t / h_max).ceil().max(1.0) } else { 1.0 };
    if !(steps <= RK4_MAX_STEPS as f64) {
        return Err(DeerError::Integration(format!(
            "step-size underflow: segment of {t} us needs {steps:.3e} RK4 steps (limit {RK4_MAX_STEPS})"
        )));
    }
    let n = steps as u64;
    let h = t / n as f64;
    let mut x = Vector5::new(m[0], m[1], m[2], 0.0, 1.0);
    for _ in 0..n {
        let k1 = a * x;
        let k2 = a * (x + k1 * (0.5 * h));
        let k3 = a * (x + k2 * (0.5 * h));
        let k4 = a * (x + k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(([x[0], x[1], x[2]], x[3]))
}

fn exact_propagator(omega: f64, delta: f64, t: f64, relax: &RelaxationParams) -> Matrix5<f64> {
    (generator(omega, delta, relax) * t).exp()
}

fn apply(p: &Matrix5<f64>, m: [f64; 3]) -> ([f64; 3], f64) {
    let x = p * Vector5::new(m[0], m[1], m[2], 0.0, 1.0);
    ([x[0], x[1], x[2]], x[3])
}

fn instant_pi(m: [f64; 3]) -> [f64; 3] {
    [m[0], -m[1], -m[2]]
}

/// Evolve one target through one timeline segment.
///
/// `detuning_mhz` is the target's resonance offset; the drive's frequency
/// offset is subtracted here. NV pulse segments leave the target untouched.
pub fn bloch_evolve(
    state: BlochState,
    segment: &Segment,
    detuning_mhz: f64,
    drive: &DriveParams,
    relax: &RelaxationParams,
    integrator: BlochIntegrator,
) -> Result<BlochStep> {
    if !(segment.duration_ns >= 0.0) {
        return Err(DeerError::Parameter(format!("segment duration must be >= 0, got {}", segment.duration_ns)));
    }
    let t = ns_to_us(segment.duration_ns);
    let delta = mhz_to_rad_per_us(detuning_mhz - drive.frequency_offset_mhz);
    let omega = match segment.radical {
        RadicalAction::Drive => mhz_to_rad_per_us(drive.rabi_mhz),
        _ => 0.0,
    };
    let (m, integral) = if segment.radical == RadicalAction::InstantPi {
        (instant_pi(state.m), 0.0)
    } else if omega == 0.0 {
        free_closed_form(state.m, delta, t, relax)
    } else {
        match integrator {
            BlochIntegrator::Rk4 if delta != 0.0 => rk4(state.m, omega, delta, t, relax)?,
            _ => apply(&exact_propagator(omega, delta, t, relax), state.m),
        }
    };
    Ok(BlochStep { state: BlochState { m, time_ns: state.time_ns + segment.duration_ns }, mz_integral_us: integral })
}

/// ½ Σ_intervals η ∫ m_z dt for one target, in µs.
fn echo_weighted_integral(
    mz0: f64,
    detuning_mhz: f64,
    timeline: &DeerTimeline,
    drive: &DriveParams,
    relax: &RelaxationParams,
    integrator: BlochIntegrator,
) -> Result<f64> {
    let mut state = BlochState::along_z(mz0);
    let mut total = 0.0;
    let mut cached: Option<(u64, Matrix5<f64>)> = None;
    for (i, interval) in timeline.intervals().iter().enumerate() {
        let eta = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut part = 0.0;
        for seg in interval {
            let step = if seg.radical == RadicalAction::Drive
                && drive.rabi_mhz != 0.0
                && (integrator == BlochIntegrator::Exact || detuning_mhz == drive.frequency_offset_mhz)
            {
                // Both drive windows share one propagator.
                let key = seg.duration_ns.to_bits();
                let p = match &cached {
                    Some((k, p)) if *k == key => *p,
                    _ => {
                        let p = exact_propagator(
                            mhz_to_rad_per_us(drive.rabi_mhz),
                            mhz_to_rad_per_us(detuning_mhz - drive.frequency_offset_mhz),
                            ns_to_us(seg.duration_ns),
                            relax,
                        );
                        cached = Some((key, p));
                        p
                    }
                };
                let (m, integral) = apply(&p, state.m);
                BlochStep { state: BlochState { m, time_ns: state.time_ns + seg.duration_ns }, mz_integral_us: integral }
            } else {
                bloch_evolve(state, seg, detuning_mhz, drive, relax, integrator)?
            };
            state = step.state;
            part += step.mz_integral_us;
        }
        total += eta * part;
    }
    Ok(0.5 * total)
}

/// NV phase (rad) for explicit initial m_z values, one per target.
pub fn nv_phase(
    config: &SpinConfiguration,
    timeline: &DeerTimeline,
    drive: &DriveParams,
    relax: &RelaxationParams,
    initial_mz: &[f64],
    integrator: BlochIntegrator,
) -> Result<f64> {
    if initial_mz.len() != config.len() {
        return Err(DeerError::Parameter(format!(
            "{} initial m_z values for {} targets",
            initial_mz.len(),
            config.len()
        )));
    }
    let mut phi = 0.0;
    for ((t, &a), &mz0) in config.targets.iter().zip(&config.nv_couplings_mhz).zip(initial_mz) {
        let w = echo_weighted_integral(mz0, t.detuning_mhz, timeline, drive, relax, integrator)?;
        phi += mhz_to_rad_per_us(a) * w;
    }
    Ok(phi)
}

/// Phase statistics of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochRealization {
    /// cos φ for the drawn initial signs.
    pub cos_phi: f64,
    /// Mean of φ over the initial-sign distribution.
    pub phase_mean: f64,
    /// Variance of φ over the initial-sign distribution.
    pub phase_variance: f64,
}

/// Evaluate one configuration; initial signs come from a stream derived
/// from the configuration seed.
pub fn bloch_realization(
    config: &SpinConfiguration,
    timeline: &DeerTimeline,
    drive: &DriveParams,
    relax: &RelaxationParams,
    options: &BlochOptions,
) -> Result<BlochRealization> {
    relax.validate()?;
    let p = options.initial_polarization;
    if !(p.abs() <= 1.0) {
        return Err(DeerError::Parameter(format!("initial polarization must lie in [-1, 1], got {p}")));
    }
    let mut rng = rng_from_seed(child_seed(config.seed, 1));
    let p_up = 0.5 * (1.0 + p);
    let linear = relax.equilibrium_mz == 0.0;
    let (mut phi, mut mean, mut var) = (0.0, 0.0, 0.0);
    for (t, &a) in config.targets.iter().zip(&config.nv_couplings_mhz) {
        let a = mhz_to_rad_per_us(a);
        let up = a * echo_weighted_integral(1.0, t.detuning_mhz, timeline, drive, relax, options.integrator)?;
        let down = if linear {
            -up
        } else {
            a * echo_weighted_integral(-1.0, t.detuning_mhz, timeline, drive, relax, options.integrator)?
        };
        phi += if rng.gen_bool(p_up) { up } else { down };
        let m = p_up * up + (1.0 - p_up) * down;
        mean += m;
        var += p_up * (up - m).powi(2) + (1.0 - p_up) * (down - m).powi(2);
    }
    Ok(BlochRealization { cos_phi: phi.cos(), phase_mean: mean, phase_variance: var })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochSignal {
    pub mean: f64,
    pub sem: f64,
    pub n_realizations: usize,
}

fn mean_and_sem(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Combine per-realization results in index order.
pub fn reduce_realizations(results: &[BlochRealization], averaging: PhaseAveraging) -> Result<BlochSignal> {
    if results.is_empty() {
        return Err(DeerError::Parameter("need at least one realization".into()));
    }
    let n = results.len();
    match averaging {
        PhaseAveraging::Cosine => {
            let values: Vec<f64> = results.iter().map(|r| r.cos_phi).collect();
            let (mean, sem) = mean_and_sem(&values);
            Ok(BlochSignal { mean, sem, n_realizations: n })
        }
        PhaseAveraging::Gaussian => {
            let means: Vec<f64> = results.iter().map(|r| r.phase_mean).collect();
            let (mu, _) = mean_and_sem(&means);
            // Total variance = within-configuration + between-configuration.
            let q: Vec<f64> = results.iter().map(|r| r.phase_variance + (r.phase_mean - mu).powi(2)).collect();
            let (v, v_sem) = mean_and_sem(&q);
            let mean = mu.cos() * (-0.5 * v).exp();
            Ok(BlochSignal { mean, sem: 0.5 * mean.abs() * v_sem, n_realizations: n })
        }
    }
}

/// Monte Carlo DEER signal of the classical layer.
#[allow(clippy::too_many_arguments)]
pub fn deer_signal_bloch(
    params: &SamplingParams,
    nv: &NvSite,
    timeline: &DeerTimeline,
    drive: &DriveParams,
    relax: &RelaxationParams,
    n_realizations: usize,
    seed: u64,
    options: &BlochOptions,
) -> Result<BlochSignal> {
    if n_realizations == 0 {
        return Err(DeerError::Parameter("n_realizations must be >= 1".into()));
    }
    let results: Vec<BlochRealization> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let config = sample_configuration(params, nv, child_seed(seed, r as u64))?;
            bloch_realization(&config, timeline, drive, relax, options)
        })
        .collect::<Result<_>>()?;
    reduce_realizations(&results, options.averaging)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::NvAction;

    fn drive_seg(ns: f64) -> Segment {
        Segment { duration_ns: ns, nv_action: NvAction::None, radical: RadicalAction::Drive }
    }

    #[test]
    fn resonant_half_rabi_period_inverts() {
        let drive = DriveParams { rabi_mhz: 5.0, ..Default::default() };
        let s = bloch_evolve(BlochState::along_z(1.0), &drive_seg(100.0), 0.0, &drive, &Default::default(), BlochIntegrator::Exact)
            .unwrap();
        assert!((s.state.m[2] + 1.0).abs() < 1e-12);
        assert!((s.state.norm() - 1.0).abs() < 1e-12);
        // ∫cos(Ωt)dt over half a period vanishes.
        assert!(s.mz_integral_us.abs() < 1e-12);
    }

    #[test]
    fn pure_transverse_decay() {
        let relax = RelaxationParams::new(None, Some(0.3)).unwrap();
        let seg = Segment { duration_ns: 300.0, nv_action: NvAction::None, radical: RadicalAction::Off };
        let start = BlochState { m: [0.6, 0.8, 0.0], time_ns: 0.0 };
        let s = bloch_evolve(start, &seg, 0.0, &DriveParams::default(), &relax, BlochIntegrator::Exact).unwrap();
        let transverse = (s.state.m[0].powi(2) + s.state.m[1].powi(2)).sqrt();
        assert!((transverse - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn relaxation_validation() {
        assert!(RelaxationParams::new(Some(1.0), Some(2.5)).is_err());
        assert!(RelaxationParams::new(Some(-1.0), None).is_err());
        assert!(RelaxationParams::new(Some(1.0), Some(2.0)).is_ok());
    }

    #[test]
    fn rk4_underflow_is_reported() {
        let relax = RelaxationParams::new(Some(1e-9), Some(1e-9)).unwrap();
        let drive = DriveParams { rabi_mhz: 5.0, ..Default::default() };
        let r = bloch_evolve(BlochState::along_z(1.0), &drive_seg(500.0), 3.0, &drive, &relax, BlochIntegrator::Rk4);
        assert!(matches!(r, Err(DeerError::Integration(_))));
    }

    #[test]
    fn gaussian_reduction_of_symmetric_phases() {
        let r = [
            BlochRealization { cos_phi: 0.0, phase_mean: 0.0, phase_variance: 0.2 },
            BlochRealization { cos_phi: 0.0, phase_mean: 0.0, phase_variance: 0.4 },
        ];
        let s = reduce_realizations(&r, PhaseAveraging::Gaussian).unwrap();
        assert!((s.mean - (-0.15f64).exp()).abs() < 1e-15);
    }
}
