//! Exact NV-conditional propagation of a small, mutually coupled target
//! ensemble through the DEER timeline.
//!
//! # Conventions
//!
//! All Hamiltonians are in rad/µs and act on the 2^N target space; basis
//! state bit k = 0 means target k is up (s_z = +½). Targets are viewed in
//! the frame rotating at the drive frequency, the NV in the frame of its
//! driven {m_s = 0, m_s = −1} transition. For NV branch ± the Hamiltonian is
//!
//! ```text
//! h_± = Σ_k Δ_k s_z^k ± ½ Σ_k a_k s_z^k + H_dd [+ Ω Σ_k s_x^k while driving]
//! ```
//!
//! with Δ_k = 2π(δ_k − f_offset), a_k = 2π·a_k[MHz] and Ω = 2π·Ω[MHz]. The
//! `+` branch is m_s = 0, the `−` branch m_s = −1, so h_+ − h_− = Σ a_k s_z^k.
//! The like-spin term keeps the full secular form
//! `H_dd = Σ_{j<k} b_jk (3 s_z^j s_z^k − s^j·s^k)/2`, which is
//! `b_jk [s_z s_z − ¼(s₊s₋ + s₋s₊)]`; the Ising option drops the flip-flop part.
//!
//! The NV π pulse swaps branches. With path A starting in m_s = 0 and path B
//! in m_s = −1 the phase-alternated readout difference is
//! `Re Tr[ρ U_B† U_A]`, which is 1 for an undisturbed echo.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::units::{mhz_to_rad_per_us, ns_to_us};
use crate::error::{DeerError, Result};
use crate::geometry::SpinConfiguration;
use crate::linalg::{hermiticity_defect, identity, matmul, propagator_pade, unitarity_defect, CMatrix, HermitianEigen};
use crate::sequence::{DeerTimeline, DriveParams, RadicalAction, Segment};

/// Default largest ensemble the engine accepts.
pub const DEFAULT_CAPACITY_QUBITS: usize = 12;
/// Up to this size propagators come from a cached eigendecomposition.
pub const DEFAULT_EXACT_DIAG_MAX_QUBITS: usize = 8;
pub const INTEGRITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    /// Secular dipolar coupling including flip-flops.
    #[default]
    FullSecular,
    /// Only the s_z s_z part.
    Ising,
    /// Targets do not interact.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    #[default]
    MaximallyMixed,
    /// ρ ∝ exp(−β Σ s_z), β = ħω_L / k_B T.
    Thermal { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumOptions {
    pub interaction: Interaction,
    pub initial_state: InitialState,
    pub capacity_qubits: usize,
    pub exact_diag_max_qubits: usize,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        Self {
            interaction: Interaction::FullSecular,
            initial_state: InitialState::MaximallyMixed,
            capacity_qubits: DEFAULT_CAPACITY_QUBITS,
            exact_diag_max_qubits: DEFAULT_EXACT_DIAG_MAX_QUBITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Free,
    DriveOn,
}

#[derive(Debug, Clone)]
pub struct ConditionalHamiltonianPair {
    /// NV in m_s = 0.
    pub h_plus: CMatrix,
    /// NV in m_s = −1.
    pub h_minus: CMatrix,
    pub segment_kind: SegmentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeerObservable {
    /// Normalized phase-alternated readout, 1 for an undisturbed echo.
    pub signal: f64,
    /// Tr[ρ U_B† U_A]; `signal` is its real part.
    pub coherence: Complex64,
}

fn check_capacity(config: &SpinConfiguration, options: &QuantumOptions) -> Result<usize> {
    let n = config.len();
    if n > options.capacity_qubits {
        return Err(DeerError::Capacity(format!(
            "{n} targets need a 2^{n}-dimensional space; the configured limit is {} targets",
            options.capacity_qubits
        )));
    }
    Ok(n)
}

#[inline]
fn sz(state: usize, k: usize) -> f64 {
    if state >> k & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Branch-independent part of the Hamiltonian plus the NV-conditional
/// diagonal Σ a_k s_z^k (returned separately).
fn bath_hamiltonian(
    config: &SpinConfiguration,
    drive: &DriveParams,
    kind: SegmentKind,
    interaction: Interaction,
) -> Result<(CMatrix, Vec<f64>)> {
    let n = config.len();
    let dim = 1usize << n;
    let mut h = CMatrix::zeros(dim, dim);
    let detunings: Vec<f64> =
        config.targets.iter().map(|t| mhz_to_rad_per_us(t.detuning_mhz - drive.frequency_offset_mhz)).collect();
    let couplings: Vec<f64> = config.nv_couplings_mhz.iter().map(|&a| mhz_to_rad_per_us(a)).collect();
    let mut pairs = Vec::new();
    if interaction != Interaction::None {
        for j in 0..n {
            for k in (j + 1)..n {
                let b = mhz_to_rad_per_us(config.pair_coupling(j, k)?);
                if b != 0.0 {
                    pairs.push((j, k, b));
                }
            }
        }
    }
    let mut conditional = vec![0.0; dim];
    for s in 0..dim {
        let mut diag = 0.0;
        let mut cond = 0.0;
        for k in 0..n {
            diag += detunings[k] * sz(s, k);
            cond += couplings[k] * sz(s, k);
        }
        for &(j, k, b) in &pairs {
            diag += b * sz(s, j) * sz(s, k);
            if interaction == Interaction::FullSecular && (s >> j & 1) != (s >> k & 1) {
                let t = s ^ (1 << j | 1 << k);
                h[(t, s)] += Complex64::new(-0.25 * b, 0.0);
            }
        }
        h[(s, s)] = Complex64::new(diag, 0.0);
        conditional[s] = cond;
    }
    if kind == SegmentKind::DriveOn {
        let half_omega = 0.5 * mhz_to_rad_per_us(drive.rabi_mhz);
        if half_omega != 0.0 {
            for s in 0..dim {
                for k in 0..n {
                    h[(s ^ (1 << k), s)] += Complex64::new(half_omega, 0.0);
                }
            }
        }
    }
    Ok((h, conditional))
}

/// The two NV-branch Hamiltonians for one kind of segment.
pub fn build_segment_hamiltonians(
    config: &SpinConfiguration,
    drive: &DriveParams,
    segment_kind: SegmentKind,
    options: &QuantumOptions,
) -> Result<ConditionalHamiltonianPair> {
    check_capacity(config, options)?;
    let (bath, conditional) = bath_hamiltonian(config, drive, segment_kind, options.interaction)?;
    let mut h_plus = bath.clone();
    let mut h_minus = bath;
    for (s, c) in conditional.iter().enumerate() {
        h_plus[(s, s)] += Complex64::new(0.5 * c, 0.0);
        h_minus[(s, s)] -= Complex64::new(0.5 * c, 0.0);
    }
    for h in [&h_plus, &h_minus] {
        let defect = hermiticity_defect(h);
        if defect > 1e-12 * (1.0 + h.norm()) {
            return Err(DeerError::NumericalIntegrity(format!("Hamiltonian not Hermitian (defect {defect:.3e})")));
        }
    }
    Ok(ConditionalHamiltonianPair { h_plus, h_minus, segment_kind })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct HamiltonianKey {
    kind: SegmentKind,
    branch: u8,
    rabi_bits: u64,
    offset_bits: u64,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct IntervalKey {
    branch: u8,
    rabi_bits: u64,
    offset_bits: u64,
    segments: Vec<(u64, RadicalAction)>,
}

/// Propagation engine for one configuration. Eigendecompositions and
/// interval propagators are cached across timelines, so sweeping Tₛ or the
/// readout phase reuses the expensive work.
pub struct QuantumEngine {
    config: SpinConfiguration,
    options: QuantumOptions,
    dim: usize,
    density_diagonal: Vec<f64>,
    hamiltonians: HashMap<(SegmentKind, u64, u64), ConditionalHamiltonianPair>,
    eigen: HashMap<HamiltonianKey, HermitianEigen>,
    intervals: HashMap<IntervalKey, CMatrix>,
}

impl QuantumEngine {
    pub fn new(config: SpinConfiguration, options: QuantumOptions) -> Result<Self> {
        let n = check_capacity(&config, &options)?;
        let dim = 1usize << n;
        let density_diagonal = match options.initial_state {
            InitialState::MaximallyMixed => vec![1.0 / dim as f64; dim],
            InitialState::Thermal { beta } => {
                if !beta.is_finite() {
                    return Err(DeerError::Parameter(format!("thermal beta must be finite, got {beta}")));
                }
                let w: Vec<f64> =
                    (0..dim).map(|s| (-beta * (0..n).map(|k| sz(s, k)).sum::<f64>()).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            }
        };
        Ok(Self {
            config,
            options,
            dim,
            density_diagonal,
            hamiltonians: HashMap::new(),
            eigen: HashMap::new(),
            intervals: HashMap::new(),
        })
    }

    pub fn config(&self) -> &SpinConfiguration {
        &self.config
    }

    fn uses_eigen(&self) -> bool {
        self.config.len() <= self.options.exact_diag_max_qubits
    }

    fn hamiltonian(&mut self, kind: SegmentKind, drive: &DriveParams, branch: u8) -> Result<&CMatrix> {
        let rabi_bits = if kind == SegmentKind::DriveOn { drive.rabi_mhz.to_bits() } else { 0 };
        let key = (kind, rabi_bits, drive.frequency_offset_mhz.to_bits());
        if !self.hamiltonians.contains_key(&key) {
            let pair = build_segment_hamiltonians(&self.config, drive, kind, &self.options)?;
            self.hamiltonians.insert(key, pair);
        }
        let pair = &self.hamiltonians[&key];
        Ok(if branch == 0 { &pair.h_plus } else { &pair.h_minus })
    }

    fn segment_propagator(&mut self, seg: &Segment, drive: &DriveParams, branch: u8) -> Result<CMatrix> {
        let kind = match seg.radical {
            RadicalAction::InstantPi => return Ok(flip_all(self.config.len())),
            RadicalAction::Off => SegmentKind::Free,
            RadicalAction::Drive => SegmentKind::DriveOn,
        };
        let t = ns_to_us(seg.duration_ns);
        if self.uses_eigen() {
            let key = HamiltonianKey {
                kind,
                branch,
                rabi_bits: if kind == SegmentKind::DriveOn { drive.rabi_mhz.to_bits() } else { 0 },
                offset_bits: drive.frequency_offset_mhz.to_bits(),
            };
            if !self.eigen.contains_key(&key) {
                let h = self.hamiltonian(kind, drive, branch)?.clone();
                let eig = HermitianEigen::new(&h, INTEGRITY_TOLERANCE)?;
                self.eigen.insert(key, eig);
            }
            Ok(self.eigen[&key].propagator(t))
        } else {
            let h = self.hamiltonian(kind, drive, branch)?.clone();
            let u = propagator_pade(&h, t)?;
            let defect = unitarity_defect(&u);
            if !(defect < INTEGRITY_TOLERANCE) {
                return Err(DeerError::NumericalIntegrity(format!(
                    "segment propagator deviates from unitary by {defect:.3e}"
                )));
            }
            Ok(u)
        }
    }

    fn interval_propagator(&mut self, segments: &[Segment], drive: &DriveParams, branch: u8) -> Result<CMatrix> {
        let key = IntervalKey {
            branch,
            rabi_bits: drive.rabi_mhz.to_bits(),
            offset_bits: drive.frequency_offset_mhz.to_bits(),
            segments: segments.iter().map(|s| (s.duration_ns.to_bits(), s.radical)).collect(),
        };
        if let Some(u) = self.intervals.get(&key) {
            return Ok(u.clone());
        }
        let mut u: Option<CMatrix> = None;
        for seg in segments {
            let step = self.segment_propagator(seg, drive, branch)?;
            u = Some(match u {
                None => step,
                Some(prev) => matmul(&step, &prev),
            });
        }
        let u = u.unwrap_or_else(|| identity(self.dim));
        self.intervals.insert(key, u.clone());
        Ok(u)
    }

    /// Path propagators (U_A, U_B).
    pub fn path_propagators(&mut self, timeline: &DeerTimeline, drive: &DriveParams) -> Result<(CMatrix, CMatrix)> {
        let intervals = timeline.intervals();
        let mut ua = identity(self.dim);
        let mut ub = identity(self.dim);
        for (i, iv) in intervals.iter().enumerate() {
            let branch_a = (i % 2) as u8;
            let pa = self.interval_propagator(iv, drive, branch_a)?;
            let pb = self.interval_propagator(iv, drive, 1 - branch_a)?;
            ua = if i == 0 { pa } else { matmul(&pa, &ua) };
            ub = if i == 0 { pb } else { matmul(&pb, &ub) };
        }
        Ok((ua, ub))
    }

    pub fn signal(&mut self, timeline: &DeerTimeline, drive: &DriveParams) -> Result<DeerObservable> {
        if self.config.is_empty() {
            return Ok(DeerObservable { signal: 1.0, coherence: Complex64::new(1.0, 0.0) });
        }
        let (ua, ub) = self.path_propagators(timeline, drive)?;
        let mut coherence = Complex64::new(0.0, 0.0);
        for j in 0..self.dim {
            let rho = self.density_diagonal[j];
            let col_a = ua.column(j);
            let col_b = ub.column(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..self.dim {
                acc += col_b[i].conj() * col_a[i];
            }
            coherence += acc * rho;
        }
        let signal = coherence.re;
        if !(signal.abs() <= 1.0 + 1e-9) {
            return Err(DeerError::NumericalIntegrity(format!("echo overlap {signal} outside [-1, 1]")));
        }
        Ok(DeerObservable { signal, coherence })
    }

    /// Write both path propagators as plain text: a header line per path
    /// followed by one row per line of `re im` pairs.
    pub fn write_propagators<W: Write>(&mut self, timeline: &DeerTimeline, drive: &DriveParams, mut w: W) -> Result<()> {
        let (ua, ub) = self.path_propagators(timeline, drive)?;
        for (name, u) in [("A", &ua), ("B", &ub)] {
            writeln!(w, "# path {name} dim {}", u.nrows())?;
            for i in 0..u.nrows() {
                let row: Vec<String> =
                    (0..u.ncols()).map(|j| format!("{:.17e} {:.17e}", u[(i, j)].re, u[(i, j)].im)).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

/// exp(−iπ Σ s_x) = (−i)^N X⊗…⊗X.
fn flip_all(n: usize) -> CMatrix {
    let dim = 1usize << n;
    let mask = dim - 1;
    let phase = match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    };
    let mut m = CMatrix::zeros(dim, dim);
    for s in 0..dim {
        m[(s ^ mask, s)] = phase;
    }
    m
}

/// Echo signal of `config` under `timeline`.
pub fn deer_signal_quantum(
    config: &SpinConfiguration,
    timeline: &DeerTimeline,
    drive: &DriveParams,
    initial_state: InitialState,
    options: &QuantumOptions,
) -> Result<DeerObservable> {
    let mut engine = QuantumEngine::new(config.clone(), QuantumOptions { initial_state, ..*options })?;
    engine.signal(timeline, drive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{NvSite, TargetSpin};
    use crate::sequence::build_deer_timeline;

    fn config_from(couplings: &[f64], detunings: &[f64], pair: Option<Vec<Vec<f64>>>) -> SpinConfiguration {
        let n = couplings.len();
        let targets: Vec<TargetSpin> = (0..n)
            .map(|k| TargetSpin { position_nm: [k as f64 + 1.0, 0.0, 0.0], detuning_mhz: detunings[k] })
            .collect();
        let mut c = SpinConfiguration::from_targets(NvSite::with_depth(10.0), targets, 0).unwrap();
        c.nv_couplings_mhz = couplings.to_vec();
        c.pair_couplings_mhz = pair.unwrap_or_else(|| vec![vec![0.0; n]; n]);
        c
    }

    #[test]
    fn empty_ensemble_gives_unit_signal() {
        let c = config_from(&[], &[], None);
        let pair = build_segment_hamiltonians(&c, &DriveParams::default(), SegmentKind::Free, &Default::default()).unwrap();
        assert_eq!(pair.h_plus.nrows(), 1);
        let t = build_deer_timeline(900.0, &DriveParams::default(), 0.0).unwrap();
        let s = deer_signal_quantum(&c, &t, &DriveParams::default(), InitialState::MaximallyMixed, &Default::default()).unwrap();
        assert_eq!(s.signal, 1.0);
    }

    #[test]
    fn single_spin_conditional_splitting() {
        let c = config_from(&[0.37], &[2.0], None);
        let pair = build_segment_hamiltonians(&c, &DriveParams::default(), SegmentKind::Free, &Default::default()).unwrap();
        let diff = &pair.h_plus - &pair.h_minus;
        let gap = (diff[(0, 0)] - diff[(1, 1)]).re;
        assert!((gap - mhz_to_rad_per_us(0.37)).abs() < 1e-12);
        assert!(diff[(0, 1)].norm() == 0.0);
    }

    #[test]
    fn non_interacting_pair_factorizes() {
        let drive = DriveParams { rabi_mhz: 3.0, frequency_offset_mhz: 1.5, ..Default::default() };
        let c = config_from(&[0.2, -0.45], &[0.7, -2.0], None);
        let opts = QuantumOptions::default();
        let two = build_segment_hamiltonians(&c, &drive, SegmentKind::DriveOn, &opts).unwrap();
        let one_a = build_segment_hamiltonians(&config_from(&[0.2], &[0.7], None), &drive, SegmentKind::DriveOn, &opts).unwrap();
        let one_b = build_segment_hamiltonians(&config_from(&[-0.45], &[-2.0], None), &drive, SegmentKind::DriveOn, &opts).unwrap();
        // Bit 0 is spin 0 (fast index), so H = I⊗H_0 + H_1⊗I with kron(left, right).
        let id = identity(2);
        let expect_plus = id.kronecker(&one_a.h_plus) + one_b.h_plus.kronecker(&id);
        let expect_minus = id.kronecker(&one_a.h_minus) + one_b.h_minus.kronecker(&id);
        assert!((&two.h_plus - expect_plus).norm() < 1e-12);
        assert!((&two.h_minus - expect_minus).norm() < 1e-12);
    }

    #[test]
    fn flip_flop_term_is_present_only_for_secular() {
        let pair = vec![vec![0.0, 0.8], vec![0.8, 0.0]];
        let c = config_from(&[0.0, 0.0], &[0.0, 0.0], Some(pair));
        let drive = DriveParams::default();
        let sec = build_segment_hamiltonians(&c, &drive, SegmentKind::Free, &Default::default()).unwrap();
        let ising = build_segment_hamiltonians(
            &c,
            &drive,
            SegmentKind::Free,
            &QuantumOptions { interaction: Interaction::Ising, ..Default::default() },
        )
        .unwrap();
        let b = mhz_to_rad_per_us(0.8);
        // |↑↓⟩ = 0b10 and |↓↑⟩ = 0b01
        assert!((sec.h_plus[(1, 2)].re + 0.25 * b).abs() < 1e-12);
        assert_eq!(ising.h_plus[(1, 2)].re, 0.0);
        assert!((sec.h_plus[(0, 0)].re - 0.25 * b).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_enforced() {
        let c = config_from(&[0.1; 4], &[0.0; 4], None);
        let opts = QuantumOptions { capacity_qubits: 3, ..Default::default() };
        assert!(matches!(QuantumEngine::new(c, opts), Err(DeerError::Capacity(_))));
    }

    #[test]
    fn propagator_dump_has_expected_shape() {
        let c = config_from(&[0.3], &[0.0], None);
        let drive = DriveParams::default();
        let t = build_deer_timeline(300.0, &drive, 0.0).unwrap();
        let mut e = QuantumEngine::new(c, Default::default()).unwrap();
        let mut buf = Vec::new();
        e.write_propagators(&t, &drive, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("# path A dim 2"));
        assert_eq!(lines[1].split_whitespace().count(), 4);
    }

    #[test]
    fn pade_path_matches_eigen_path() {
        let pair = vec![vec![0.0, 0.3, -0.1], vec![0.3, 0.0, 0.2], vec![-0.1, 0.2, 0.0]];
        let c = config_from(&[0.5, -0.2, 0.1], &[1.0, -3.0, 0.5], Some(pair));
        let drive = DriveParams { rabi_mhz: 4.0, duration_ns: 130.0, offset_after_nv_pulse_ns: 20.0, ..Default::default() };
        let t = build_deer_timeline(600.0, &drive, 0.0).unwrap();
        let a = deer_signal_quantum(&c, &t, &drive, InitialState::MaximallyMixed, &Default::default()).unwrap();
        let opts = QuantumOptions { exact_diag_max_qubits: 0, ..Default::default() };
        let b = deer_signal_quantum(&c, &t, &drive, InitialState::MaximallyMixed, &opts).unwrap();
        assert!((a.signal - b.signal).abs() < 1e-10);
    }
}
