//! Physical constants and the unit conventions shared by every engine.
//!
//! Source values are the CODATA 2018 recommended constants. Internally the
//! crate works in angular frequency in rad/µs, time in µs, distance in nm and
//! magnetic field in gauss. Public entry points take linear frequencies in
//! MHz and durations in ns; conversions live in [`units`].
//!
//! The reporter spins are treated as free electrons (no g-anisotropy), so a
//! single electron gyromagnetic ratio serves both the NV–target and the
//! target–target couplings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DeerError, Result};

/// CODATA 2018 electron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_E_SI: f64 = 1.760_859_630_23e11;
/// CODATA 2018 reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// CODATA 2018 vacuum permeability divided by 4π, T²·m³·J⁻¹.
pub const MU0_OVER_4PI_SI: f64 = 1.000_000_000_55e-7;

pub mod units {
    use std::f64::consts::PI;

    pub const GAUSS_PER_TESLA: f64 = 1.0e4;
    pub const NM_PER_M: f64 = 1.0e9;
    pub const NS_PER_US: f64 = 1.0e3;

    pub fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
        2.0 * PI * f_mhz
    }

    pub fn rad_per_us_to_mhz(w: f64) -> f64 {
        w / (2.0 * PI)
    }

    pub fn gauss_to_tesla(b_gauss: f64) -> f64 {
        b_gauss / GAUSS_PER_TESLA
    }

    pub fn tesla_to_gauss(b_tesla: f64) -> f64 {
        b_tesla * GAUSS_PER_TESLA
    }

    pub fn nm_to_m(x_nm: f64) -> f64 {
        x_nm / NM_PER_M
    }

    pub fn m_to_nm(x_m: f64) -> f64 {
        x_m * NM_PER_M
    }

    pub fn ns_to_us(t_ns: f64) -> f64 {
        t_ns / NS_PER_US
    }

    pub fn us_to_ns(t_us: f64) -> f64 {
        t_us * NS_PER_US
    }
}

/// Immutable bundle of the constants the simulators need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    /// Electron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
    pub gamma_e: f64,
    /// Electron gyromagnetic ratio as a linear frequency per gauss, MHz/G.
    pub gamma_e_mhz_per_gauss: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// μ₀/4π, T²·m³·J⁻¹.
    pub mu0_over_4pi: f64,
    /// (μ₀/4π)·γ²·ħ in rad/µs·nm³.
    pub dipolar_prefactor_angular: f64,
    /// (μ₀/4π)·γ²·ħ/2π in MHz·nm³.
    pub dipolar_prefactor_mhz: f64,
}

impl PhysicsConstants {
    pub const fn codata2018() -> Self {
        Self::from_source(GAMMA_E_SI, HBAR_SI, MU0_OVER_4PI_SI)
    }

    /// Derive the working constants from SI source values.
    pub const fn from_source(gamma_e: f64, hbar: f64, mu0_over_4pi: f64) -> Self {
        // rad·s⁻¹·m³ → rad·µs⁻¹·nm³ is a factor 1e27 · 1e-6.
        let angular = mu0_over_4pi * gamma_e * gamma_e * hbar * 1.0e21;
        Self {
            gamma_e,
            // rad/(s·T) → MHz/G: ÷2π, ×1e-4 T/G, ×1e-6 MHz/Hz
            gamma_e_mhz_per_gauss: gamma_e / (2.0 * PI) * 1.0e-10,
            hbar,
            mu0_over_4pi,
            dipolar_prefactor_angular: angular,
            dipolar_prefactor_mhz: angular / (2.0 * PI),
        }
    }
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

/// The constants every module uses.
pub const CONSTANTS: PhysicsConstants = PhysicsConstants::codata2018();

/// Magic angle arccos(1/√3) in degrees, where the secular dipolar kernel vanishes.
pub const MAGIC_ANGLE_DEG: f64 = 54.735_610_317_245_35;

/// Free-electron Larmor frequency in MHz at `field_gauss`.
pub fn larmor_frequency(field_gauss: f64) -> Result<f64> {
    if !(field_gauss >= 0.0) || !field_gauss.is_finite() {
        return Err(DeerError::Domain(format!(
            "magnetic field must be finite and non-negative, got {field_gauss} G"
        )));
    }
    Ok(CONSTANTS.gamma_e_mhz_per_gauss * field_gauss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn larmor_at_233_gauss() {
        let f = larmor_frequency(233.0).unwrap();
        assert!((f - 652.98).abs() < 0.01, "{f}");
        assert_eq!(f.round(), 653.0);
        assert_eq!(larmor_frequency(0.0).unwrap(), 0.0);
        assert_eq!(larmor_frequency(466.0).unwrap(), 2.0 * f);
    }

    #[test]
    fn negative_field_is_rejected() {
        assert!(matches!(larmor_frequency(-1.0), Err(DeerError::Domain(_))));
        assert!(larmor_frequency(f64::NAN).is_err());
    }

    #[test]
    fn dipolar_prefactor_matches_unit_tracked_recomputation() {
        // Hz·m³ first, then step to MHz·nm³ explicitly.
        let hz_m3 = MU0_OVER_4PI_SI * GAMMA_E_SI.powi(2) * HBAR_SI / (2.0 * PI);
        let mhz_m3 = hz_m3 / 1.0e6;
        let mhz_nm3 = mhz_m3 * 1.0e27;
        let c = PhysicsConstants::codata2018();
        assert!((c.dipolar_prefactor_mhz - mhz_nm3).abs() / mhz_nm3 < 1e-9);
        assert!((c.dipolar_prefactor_mhz - 52.04).abs() < 0.01);
        assert!(
            (c.dipolar_prefactor_angular - 2.0 * PI * c.dipolar_prefactor_mhz).abs()
                < 1e-12 * c.dipolar_prefactor_angular
        );
    }

    #[test]
    fn constants_are_reproducible() {
        let a = PhysicsConstants::codata2018();
        let b = PhysicsConstants::default();
        assert_eq!(a.dipolar_prefactor_mhz.to_bits(), b.dipolar_prefactor_mhz.to_bits());
        assert_eq!(a, b);
        let f = a.gamma_e_mhz_per_gauss * 233.0;
        assert!((651.0..=654.0).contains(&f));
    }

    #[test]
    fn unit_round_trips() {
        use units::*;
        for &x in &[1e-3, 0.7, 12.0, 652.98, 3.3e4] {
            assert!((rad_per_us_to_mhz(mhz_to_rad_per_us(x)) - x).abs() <= 1e-12 * x);
            assert!((tesla_to_gauss(gauss_to_tesla(x)) - x).abs() <= 1e-12 * x);
            assert!((m_to_nm(nm_to_m(x)) - x).abs() <= 1e-12 * x);
            assert!((us_to_ns(ns_to_us(x)) - x).abs() <= 1e-12 * x);
        }
    }
}
