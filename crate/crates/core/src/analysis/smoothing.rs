use serde::{Deserialize, Serialize};

use super::curve::DeerCurve;
use crate::error::{DeerError, Result};

/// Centered running mean of odd width; near the ends the window shrinks
/// symmetrically so every output stays centered on its input point.
pub fn running_mean(values: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window, values.len())?;
    let half = window / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let slice = &values[i - h..=i + h];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

fn check_window(window: usize, len: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 || window > len {
        return Err(DeerError::Parameter(format!("window must be odd and in [1, {len}], got {window}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMinimum {
    pub min_signal: f64,
    pub x_at_min: f64,
    /// SEM of the smoothed value, from the averaged point SEMs.
    pub min_signal_sem: f64,
    pub index: usize,
}

/// Minimum of the smoothed curve. Ties go to the smallest x.
pub fn extract_min(curve: &DeerCurve, window: usize) -> Result<CurveMinimum> {
    let y = curve.signals();
    let smooth = running_mean(&y, window)?;
    let sems = curve.sems();
    let mut best = 0;
    for (i, &v) in smooth.iter().enumerate() {
        if v < smooth[best] {
            best = i;
        }
    }
    let n = y.len();
    let h = (window / 2).min(best).min(n - 1 - best);
    let sem = sems[best - h..=best + h].iter().map(|s| s * s).sum::<f64>().sqrt() / (2 * h + 1) as f64;
    Ok(CurveMinimum { min_signal: smooth[best], x_at_min: curve.points()[best].x, min_signal_sem: sem, index: best })
}
