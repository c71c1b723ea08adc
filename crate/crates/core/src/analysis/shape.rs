//! Qualitative shape of Tₛ sweeps: oscillatory versus overdamped.
//!
//! The tail of the curve (x ≥ x_from) is detrended with a least-squares
//! line. A point counts as above (below) the trend once it exceeds
//! +band (−band), where band is a fraction of the full curve's
//! peak-to-peak range; points inside the band keep the previous state.
//! Sign changes are transitions between the above and below states.

use serde::{Deserialize, Serialize};

use crate::error::{DeerError, Result};

/// Default hysteresis band as a fraction of the peak-to-peak range.
pub const DEFAULT_BAND_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveClass {
    /// At least two sign changes.
    Oscillatory,
    /// At most one sign change.
    Overdamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub sign_changes: usize,
    pub band: f64,
    pub class: CurveClass,
}

pub fn detrend(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx } else { 0.0 };
    x.iter().zip(y).map(|(a, b)| b - my - slope * (a - mx)).collect()
}

pub fn count_sign_changes(values: &[f64], band: f64) -> usize {
    let mut state = 0i8;
    let mut changes = 0;
    for &v in values {
        let s = if v > band {
            1
        } else if v < -band {
            -1
        } else {
            0
        };
        if s != 0 {
            if state != 0 && s != state {
                changes += 1;
            }
            state = s;
        }
    }
    changes
}

/// Classify the part of a sweep at x ≥ `x_from`.
pub fn classify_shape(x: &[f64], y: &[f64], x_from: f64, band_fraction: f64) -> Result<ShapeReport> {
    if x.len() != y.len() {
        return Err(DeerError::Parameter(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if !(band_fraction >= 0.0) {
        return Err(DeerError::Parameter(format!("band fraction must be >= 0, got {band_fraction}")));
    }
    let (tx, ty): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter(|(&a, _)| a >= x_from).map(|(&a, &b)| (a, b)).unzip();
    if tx.len() < 3 {
        return Err(DeerError::Parameter(format!("need >= 3 points at x >= {x_from}, got {}", tx.len())));
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let band = band_fraction * (hi - lo);
    let sign_changes = count_sign_changes(&detrend(&tx, &ty), band);
    let class = if sign_changes >= 2 { CurveClass::Oscillatory } else { CurveClass::Overdamped };
    Ok(ShapeReport { sign_changes, band, class })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_is_oscillatory_and_ramp_is_not() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let osc: Vec<f64> = x.iter().map(|t| 0.5 + 0.3 * (t / 8.0).cos() + 0.001 * t).collect();
        let r = classify_shape(&x, &osc, 0.0, DEFAULT_BAND_FRACTION).unwrap();
        assert_eq!(r.class, CurveClass::Oscillatory);
        let damped: Vec<f64> = x.iter().map(|t| 1.0 - 0.4 * (-t / 5.0).exp()).collect();
        let r = classify_shape(&x, &damped, 15.0, DEFAULT_BAND_FRACTION).unwrap();
        assert_eq!(r.class, CurveClass::Overdamped);
    }

    #[test]
    fn band_suppresses_jitter() {
        let v = [0.01, -0.01, 0.01, -0.01, 0.5, -0.5];
        assert_eq!(count_sign_changes(&v, 0.1), 1);
        assert_eq!(count_sign_changes(&v, 0.0), 5);
    }
}
