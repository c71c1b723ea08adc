//! Surface spin configurations above a shallow NV and their secular dipolar
//! couplings.
//!
//! Coordinates are in nm. The diamond surface is the plane z = 0 and the NV
//! sits at (0, 0, −depth). The quantization axis (NV axis, parallel to the
//! bias field) is given by a polar angle measured from the surface normal and
//! an in-plane azimuth.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::{CONSTANTS, MAGIC_ANGLE_DEG};
use crate::error::{DeerError, Result};
use crate::rng::{rng_from_seed, SimRng};

pub type Vec3 = [f64; 3];

/// Detuning tails are cut at this multiple of the FWHM.
pub const DETUNING_TRUNCATION_FWHM: f64 = 5.0;
/// Above this many targets the dense pair-coupling matrix is not stored.
pub const DENSE_PAIR_LIMIT: usize = 512;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvSite {
    pub depth_nm: f64,
    /// Polar angle of the NV axis from the surface normal, degrees.
    pub axis_polar_deg: f64,
    /// In-plane azimuth of the NV axis, degrees.
    pub axis_azimuth_deg: f64,
}

impl NvSite {
    pub fn new(depth_nm: f64, axis_polar_deg: f64, axis_azimuth_deg: f64) -> Result<Self> {
        let nv = Self { depth_nm, axis_polar_deg, axis_azimuth_deg };
        nv.validate()?;
        Ok(nv)
    }

    /// NV along [111] under a (100) surface, field along the NV axis.
    pub fn with_depth(depth_nm: f64) -> Self {
        Self { depth_nm, axis_polar_deg: MAGIC_ANGLE_DEG, axis_azimuth_deg: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_nm > 0.0) || !self.depth_nm.is_finite() {
            return Err(DeerError::Parameter(format!("NV depth must be > 0 nm, got {}", self.depth_nm)));
        }
        if !(0.0..=90.0).contains(&self.axis_polar_deg) {
            return Err(DeerError::Parameter(format!(
                "NV axis polar angle must lie in [0, 90] degrees, got {}",
                self.axis_polar_deg
            )));
        }
        if !self.axis_azimuth_deg.is_finite() {
            return Err(DeerError::Parameter("NV axis azimuth must be finite".into()));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        [0.0, 0.0, -self.depth_nm]
    }

    /// Unit vector along the quantization axis.
    pub fn axis(&self) -> Vec3 {
        let (st, ct) = self.axis_polar_deg.to_radians().sin_cos();
        let (sp, cp) = self.axis_azimuth_deg.to_radians().sin_cos();
        [st * cp, st * sp, ct]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpin {
    pub position_nm: Vec3,
    /// Static resonance offset of this spin, MHz.
    pub detuning_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetuningShape {
    #[default]
    Lorentzian,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub density_per_nm2: f64,
    /// Disk radius as a multiple of the NV depth.
    pub rmax_factor: f64,
    pub min_separation_nm: f64,
    pub detuning_fwhm_mhz: f64,
    pub detuning_shape: DetuningShape,
    /// Keep at most this many targets (the strongest |a_k|); `None` keeps all.
    pub max_targets: Option<usize>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            density_per_nm2: 0.1,
            rmax_factor: 10.0,
            min_separation_nm: 0.5,
            detuning_fwhm_mhz: 20.0,
            detuning_shape: DetuningShape::Lorentzian,
            max_targets: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.density_per_nm2 >= 0.0) || !self.density_per_nm2.is_finite() {
            bad.push(format!("density must be >= 0 per nm^2, got {}", self.density_per_nm2));
        }
        if !(self.rmax_factor > 0.0) || !self.rmax_factor.is_finite() {
            bad.push(format!("rmax_factor must be > 0, got {}", self.rmax_factor));
        }
        if !(self.min_separation_nm >= 0.0) || !self.min_separation_nm.is_finite() {
            bad.push(format!("min_separation must be >= 0 nm, got {}", self.min_separation_nm));
        }
        if !(self.detuning_fwhm_mhz >= 0.0) || !self.detuning_fwhm_mhz.is_finite() {
            bad.push(format!("detuning FWHM must be >= 0 MHz, got {}", self.detuning_fwhm_mhz));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DeerError::Parameter(bad.join("; ")))
        }
    }

    pub fn disk_radius_nm(&self, nv: &NvSite) -> f64 {
        self.rmax_factor * nv.depth_nm
    }

    pub fn mean_count(&self, nv: &NvSite) -> f64 {
        let r = self.disk_radius_nm(nv);
        self.density_per_nm2 * PI * r * r
    }
}

/// One sampled realization of the surface layer.
///
/// JSON layout (field names are stable):
///
/// ```text
/// {
///   "nv": {"depth_nm", "axis_polar_deg", "axis_azimuth_deg"},
///   "targets": [{"position_nm": [x, y, z], "detuning_mhz"}],
///   "nv_couplings_mhz": [a_0, ...],
///   "pair_couplings_mhz": [[b_00, b_01, ...], ...],
///   "seed": u64,
///   "sampled_count": usize,
///   "clamped": bool
/// }
/// ```
///
/// `pair_couplings_mhz` is empty when more than [`DENSE_PAIR_LIMIT`] targets
/// are kept; use [`SpinConfiguration::pair_coupling`] in that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub nv: NvSite,
    pub targets: Vec<TargetSpin>,
    pub nv_couplings_mhz: Vec<f64>,
    pub pair_couplings_mhz: Vec<Vec<f64>>,
    pub seed: u64,
    /// Poisson draw before clamping to `max_targets`.
    pub sampled_count: usize,
    pub clamped: bool,
}

impl SpinConfiguration {
    /// Build a configuration from explicit targets, filling in all couplings.
    pub fn from_targets(nv: NvSite, targets: Vec<TargetSpin>, seed: u64) -> Result<Self> {
        nv.validate()?;
        for t in &targets {
            if t.position_nm[2] != 0.0 {
                return Err(DeerError::Parameter(format!(
                    "target spins must lie on the surface z = 0, got z = {}",
                    t.position_nm[2]
                )));
            }
        }
        let nv_couplings_mhz = targets
            .iter()
            .map(|t| nv_target_coupling(t.position_nm, &nv))
            .collect::<Result<Vec<_>>>()?;
        let pair_couplings_mhz = if targets.len() <= DENSE_PAIR_LIMIT {
            dense_pair_couplings(&targets, nv.axis())?
        } else {
            Vec::new()
        };
        let n = targets.len();
        Ok(Self { nv, targets, nv_couplings_mhz, pair_couplings_mhz, seed, sampled_count: n, clamped: false })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target–target coupling b_jk in MHz, from the dense matrix when stored.
    pub fn pair_coupling(&self, j: usize, k: usize) -> Result<f64> {
        if j == k {
            return Ok(0.0);
        }
        if let Some(row) = self.pair_couplings_mhz.get(j) {
            return Ok(row[k]);
        }
        target_target_coupling(self.targets[j].position_nm, self.targets[k].position_nm, self.nv.axis())
    }

    /// Same spins with every target–target coupling set to zero.
    pub fn without_pair_couplings(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.pair_couplings_mhz {
            row.iter_mut().for_each(|b| *b = 0.0);
        }
        if out.pair_couplings_mhz.is_empty() && !out.targets.is_empty() && out.len() <= DENSE_PAIR_LIMIT {
            out.pair_couplings_mhz = vec![vec![0.0; out.len()]; out.len()];
        }
        out
    }

    /// Reorder targets by `perm` (new index i holds old target perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.targets = perm.iter().map(|&i| self.targets[i]).collect();
        out.nv_couplings_mhz = perm.iter().map(|&i| self.nv_couplings_mhz[i]).collect();
        if !self.pair_couplings_mhz.is_empty() {
            out.pair_couplings_mhz = perm
                .iter()
                .map(|&j| perm.iter().map(|&k| self.pair_couplings_mhz[j][k]).collect())
                .collect();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn dense_pair_couplings(targets: &[TargetSpin], axis: Vec3) -> Result<Vec<Vec<f64>>> {
    let n = targets.len();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in (j + 1)..n {
            let b = target_target_coupling(targets[j].position_nm, targets[k].position_nm, axis)?;
            m[j][k] = b;
            m[k][j] = b;
        }
    }
    Ok(m)
}

/// Secular dipolar kernel P·(1 − 3cos²θ)/r³ in MHz for separation `r_vec`.
fn secular_kernel(r_vec: Vec3, axis: Vec3) -> Option<f64> {
    let r = norm(r_vec);
    if !(r > 0.0) {
        return None;
    }
    let cos_theta = dot(r_vec, axis) / r;
    Some(CONSTANTS.dipolar_prefactor_mhz * (1.0 - 3.0 * cos_theta * cos_theta) / (r * r * r))
}

/// Secular NV–target coupling a_k in MHz (signed).
pub fn nv_target_coupling(target_position_nm: Vec3, nv: &NvSite) -> Result<f64> {
    let sep = sub(target_position_nm, nv.position());
    secular_kernel(sep, nv.axis()).ok_or_else(|| {
        DeerError::Singularity(format!("target at {target_position_nm:?} coincides with the NV"))
    })
}

/// Secular target–target coupling b_jk in MHz (signed, symmetric).
pub fn target_target_coupling(pos_j: Vec3, pos_k: Vec3, field_axis: Vec3) -> Result<f64> {
    let n = norm(field_axis);
    if !(n > 0.0) {
        return Err(DeerError::Parameter("field axis must be a non-zero vector".into()));
    }
    let axis = [field_axis[0] / n, field_axis[1] / n, field_axis[2] / n];
    secular_kernel(sub(pos_j, pos_k), axis)
        .ok_or_else(|| DeerError::Singularity(format!("targets coincide at {pos_j:?}")))
}

fn draw_count(params: &SamplingParams, nv: &NvSite, rng: &mut SimRng) -> usize {
    let mean = params.mean_count(nv);
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite Poisson mean");
    p.sample(rng) as usize
}

/// Number of targets a configuration with this seed would hold before
/// clamping. Consumes the same first draw as [`sample_configuration`].
pub fn sample_target_count(params: &SamplingParams, nv: &NvSite, seed: u64) -> Result<usize> {
    params.validate()?;
    nv.validate()?;
    let mut rng = rng_from_seed(seed);
    Ok(draw_count(params, nv, &mut rng))
}

fn draw_detuning(params: &SamplingParams, rng: &mut SimRng) -> f64 {
    let fwhm = params.detuning_fwhm_mhz;
    if fwhm == 0.0 {
        return 0.0;
    }
    let cut = DETUNING_TRUNCATION_FWHM * fwhm;
    loop {
        let x = match params.detuning_shape {
            DetuningShape::Lorentzian => Cauchy::new(0.0, fwhm / 2.0).unwrap().sample(rng),
            DetuningShape::Gaussian => {
                let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                Normal::new(0.0, sigma).unwrap().sample(rng)
            }
        };
        if x.abs() <= cut {
            return x;
        }
    }
}

struct SpatialGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<[f64; 2]>>,
}

impl SpatialGrid {
    fn new(cell: f64) -> Self {
        Self { cell, cells: HashMap::new() }
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    fn is_clear(&self, p: [f64; 2], min_sep: f64) -> bool {
        let (cx, cy) = self.key(p);
        let min2 = min_sep * min_sep;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(pts) = self.cells.get(&(cx + dx, cy + dy)) {
                    for q in pts {
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 < min2 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: [f64; 2]) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(p);
    }
}

/// Sample a Poisson surface layer on the disk above the NV.
///
/// Draw order from the seeded stream: target count, then positions (with
/// hard-core rejection), then detunings. When more than `max_targets` spins
/// are drawn, only the strongest |a_k| are kept, in their original order.
pub fn sample_configuration(params: &SamplingParams, nv: &NvSite, seed: u64) -> Result<SpinConfiguration> {
    params.validate()?;
    nv.validate()?;
    let mut rng = rng_from_seed(seed);
    let count = draw_count(params, nv, &mut rng);
    let radius = params.disk_radius_nm(nv);
    let min_sep = params.min_separation_nm;

    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(count);
    let mut grid = (min_sep > 0.0).then(|| SpatialGrid::new(min_sep));
    for placed in 0..count {
        let mut attempts = 0;
        let p = loop {
            let r = radius * rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let p = [r * phi.cos(), r * phi.sin()];
            match &grid {
                Some(g) if !g.is_clear(p, min_sep) => {}
                _ => break p,
            }
            attempts += 1;
            if attempts >= MAX_PLACEMENT_ATTEMPTS {
                return Err(DeerError::Sampling(format!(
                    "could not place target {} of {count} after {MAX_PLACEMENT_ATTEMPTS} attempts \
                     (density {} per nm^2, min_separation {} nm, disk radius {radius} nm)",
                    placed + 1,
                    params.density_per_nm2,
                    min_sep
                )));
            }
        };
        if let Some(g) = &mut grid {
            g.insert(p);
        }
        positions.push(p);
    }

    let mut targets: Vec<TargetSpin> = positions
        .iter()
        .map(|p| TargetSpin { position_nm: [p[0], p[1], 0.0], detuning_mhz: 0.0 })
        .collect();
    for t in &mut targets {
        t.detuning_mhz = draw_detuning(params, &mut rng);
    }

    let mut clamped = false;
    if let Some(max) = params.max_targets {
        if targets.len() > max {
            let strengths: Vec<f64> = targets
                .iter()
                .map(|t| nv_target_coupling(t.position_nm, nv).map(f64::abs))
                .collect::<Result<_>>()?;
            let mut order: Vec<usize> = (0..targets.len()).collect();
            order.sort_by(|&i, &j| strengths[j].total_cmp(&strengths[i]).then(i.cmp(&j)));
            let mut keep: Vec<usize> = order[..max].to_vec();
            keep.sort_unstable();
            targets = keep.iter().map(|&i| targets[i]).collect();
            clamped = true;
        }
    }

    let mut config = SpinConfiguration::from_targets(*nv, targets, seed)?;
    config.sampled_count = count;
    config.clamped = clamped;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::CONSTANTS;

    fn p_mhz() -> f64 {
        CONSTANTS.dipolar_prefactor_mhz
    }

    #[test]
    fn zero_density_gives_empty_configuration() {
        let params = SamplingParams { density_per_nm2: 0.0, ..Default::default() };
        let c = sample_configuration(&params, &NvSite::with_depth(12.0), 1).unwrap();
        assert!(c.is_empty());
        assert!(c.nv_couplings_mhz.is_empty());
        assert!(c.pair_couplings_mhz.is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = SamplingParams { density_per_nm2: 0.05, rmax_factor: 3.0, ..Default::default() };
        let nv = NvSite::with_depth(8.0);
        let a = sample_configuration(&params, &nv, 99).unwrap();
        let b = sample_configuration(&params, &nv, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = sample_configuration(&params, &nv, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_distance_perpendicular_coupling() {
        // Target 1 nm away with separation perpendicular to the axis.
        let nv = NvSite::new(1.0, 0.0, 0.0).unwrap();
        let a90 = nv_target_coupling([1.0, 0.0, -1.0], &nv).unwrap();
        assert!((a90 - p_mhz()).abs() < 1e-12);
        assert!((a90 - 52.0).abs() < 0.1);
        let a0 = nv_target_coupling([0.0, 0.0, 0.0], &nv).unwrap();
        assert!((a0 + 2.0 * a90).abs() < 1e-12 * a90);
    }

    #[test]
    fn magic_angle_coupling_vanishes() {
        let nv = NvSite::new(3.0, MAGIC_ANGLE_DEG, 0.0).unwrap();
        // Directly above the NV the separation is along z, so θ equals the axis tilt.
        let a = nv_target_coupling([0.0, 0.0, 0.0], &nv).unwrap();
        assert!(a.abs() < 1e-9, "{a}");
    }

    #[test]
    fn coincident_points_are_singular() {
        let nv = NvSite::with_depth(5.0);
        assert!(matches!(nv_target_coupling([0.0, 0.0, -5.0], &nv), Err(DeerError::Singularity(_))));
        assert!(matches!(
            target_target_coupling([1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            Err(DeerError::Singularity(_))
        ));
    }

    #[test]
    fn pair_coupling_along_axis_and_scaling() {
        let axis = [0.0, 0.0, 1.0];
        let b = target_target_coupling([0.0, 0.0, 0.0], [0.0, 0.0, 2.0], axis).unwrap();
        assert!((b - (-2.0 * p_mhz() / 8.0)).abs() < 1e-12);
        let u = [0.3, -1.1, 0.0];
        let v = [2.0, 0.4, 0.0];
        let tilted = NvSite::with_depth(10.0).axis();
        let b1 = target_target_coupling(u, v, tilted).unwrap();
        assert_eq!(b1, target_target_coupling(v, u, tilted).unwrap());
        let b2 = target_target_coupling([0.6, -2.2, 0.0], [4.0, 0.8, 0.0], tilted).unwrap();
        assert!((b1 / b2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn spin_directly_above_normal_nv() {
        let nv = NvSite::new(7.0, 0.0, 0.0).unwrap();
        let a = nv_target_coupling([0.0, 0.0, 0.0], &nv).unwrap();
        assert!((a + 2.0 * p_mhz() / 343.0).abs() < 1e-12);
    }

    #[test]
    fn clamping_keeps_strongest() {
        let params = SamplingParams { density_per_nm2: 0.05, rmax_factor: 4.0, max_targets: Some(5), ..Default::default() };
        let nv = NvSite::with_depth(6.0);
        let full = sample_configuration(&SamplingParams { max_targets: None, ..params }, &nv, 3).unwrap();
        let clamped = sample_configuration(&params, &nv, 3).unwrap();
        assert!(full.len() > 5);
        assert!(clamped.clamped);
        assert_eq!(clamped.len(), 5);
        assert_eq!(clamped.sampled_count, full.len());
        let mut strengths: Vec<f64> = full.nv_couplings_mhz.iter().map(|a| a.abs()).collect();
        strengths.sort_by(|a, b| b.total_cmp(a));
        let weakest_kept = clamped.nv_couplings_mhz.iter().map(|a| a.abs()).fold(f64::INFINITY, f64::min);
        assert_eq!(weakest_kept, strengths[4]);
    }

    #[test]
    fn impossible_packing_is_reported() {
        let params = SamplingParams { density_per_nm2: 5.0, rmax_factor: 1.0, min_separation_nm: 2.0, ..Default::default() };
        let err = sample_configuration(&params, &NvSite::with_depth(3.0), 1).unwrap_err();
        assert!(matches!(err, DeerError::Sampling(ref m) if m.contains("min_separation")));
    }

    #[test]
    fn json_round_trip() {
        let params = SamplingParams { density_per_nm2: 0.02, rmax_factor: 3.0, ..Default::default() };
        let c = sample_configuration(&params, &NvSite::with_depth(10.0), 5).unwrap();
        let back = SpinConfiguration::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
