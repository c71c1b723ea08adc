use serde::{Deserialize, Serialize};

use super::curve::{CurvePoint, DeerCurve};
use super::density::{estimate_density_with_sem, DensityEstimate};
use super::smoothing::{extract_min, CurveMinimum};
use crate::error::{DeerError, Result};

/// Relative tolerance for two abscissae to count as the same grid point.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Average neighbors (0,1), (2,3), …; an unpaired last point is dropped.
/// Means are weighted by realization counts and SEMs combine in quadrature.
pub fn pair_average(curve: &DeerCurve) -> Result<DeerCurve> {
    let points: Vec<CurvePoint> = curve
        .points()
        .chunks_exact(2)
        .map(|c| {
            let (a, b) = (c[0], c[1]);
            let n = a.n + b.n;
            let wa = a.n as f64 / n as f64;
            let wb = b.n as f64 / n as f64;
            CurvePoint {
                x: 0.5 * (a.x + b.x),
                signal_mean: wa * a.signal_mean + wb * b.signal_mean,
                signal_sem: ((wa * a.signal_sem).powi(2) + (wb * b.signal_sem).powi(2)).sqrt(),
                n,
            }
        })
        .collect();
    DeerCurve::new(curve.axis_kind, points)
}

fn check_aligned(a: &DeerCurve, b: &DeerCurve) -> Result<()> {
    if a.axis_kind != b.axis_kind {
        return Err(DeerError::Alignment("curves have different axis kinds".into()));
    }
    if a.len() != b.len() {
        return Err(DeerError::Alignment(format!("curves have {} and {} points", a.len(), b.len())));
    }
    for (p, q) in a.points().iter().zip(b.points()) {
        let scale = p.x.abs().max(q.x.abs()).max(1.0);
        if (p.x - q.x).abs() > GRID_TOLERANCE * scale {
            return Err(DeerError::Alignment(format!("grid points {} and {} differ", p.x, q.x)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub pair_average: bool,
    /// Running-mean width for the minimum.
    pub window: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { pair_average: true, window: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub first_min: CurveMinimum,
    pub second_min: CurveMinimum,
    pub first: DensityEstimate,
    pub second: DensityEstimate,
    /// σ̂(second) − σ̂(first)
    pub difference_per_nm2: f64,
    pub difference_uncertainty: f64,
}

/// Density estimates for two acquisition periods and their difference.
pub fn split_compare(
    curve_a: &DeerCurve,
    curve_b: &DeerCurve,
    mean_depth_nm: f64,
    tau_ns: f64,
    options: &SplitOptions,
) -> Result<SplitComparison> {
    check_aligned(curve_a, curve_b)?;
    let (a, b) = if options.pair_average {
        (pair_average(curve_a)?, pair_average(curve_b)?)
    } else {
        (curve_a.clone(), curve_b.clone())
    };
    let first_min = extract_min(&a, options.window)?;
    let second_min = extract_min(&b, options.window)?;
    let first = estimate_density_with_sem(first_min.min_signal, Some(first_min.min_signal_sem), mean_depth_nm, tau_ns)?;
    let second = estimate_density_with_sem(second_min.min_signal, Some(second_min.min_signal_sem), mean_depth_nm, tau_ns)?;
    let ua = first.sigma_hat_uncertainty.unwrap_or(0.0);
    let ub = second.sigma_hat_uncertainty.unwrap_or(0.0);
    Ok(SplitComparison {
        first_min,
        second_min,
        first,
        second,
        difference_per_nm2: second.sigma_hat_per_nm2 - first.sigma_hat_per_nm2,
        difference_uncertainty: (ua * ua + ub * ub).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::curve::AxisKind;

    #[test]
    fn pair_average_drops_odd_tail() {
        let c = DeerCurve::from_xy(AxisKind::TsNs, &[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 0.0, 0.5, 0.7, 9.0]).unwrap();
        let p = pair_average(&c).unwrap();
        assert_eq!(p.xs(), vec![1.5, 3.5]);
        assert!((p.signals()[1] - 0.6).abs() < 1e-15);
        assert_eq!(p.points()[0].n, 2);
    }

    #[test]
    fn misaligned_grids() {
        let a = DeerCurve::from_xy(AxisKind::TsNs, &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let b = DeerCurve::from_xy(AxisKind::TsNs, &[1.0, 2.5], &[1.0, 1.0]).unwrap();
        let c = DeerCurve::from_xy(AxisKind::TsNs, &[1.0], &[1.0]).unwrap();
        let o = SplitOptions { pair_average: false, window: 1 };
        assert!(matches!(split_compare(&a, &b, 12.0, 900.0, &o), Err(DeerError::Alignment(_))));
        assert!(matches!(split_compare(&a, &c, 12.0, 900.0, &o), Err(DeerError::Alignment(_))));
    }
}
