//! Inverted Lorentzian line, FWHM form:
//! f(x) = baseline − amplitude / (1 + (2(x − center)/fwhm)²).

use super::curve::{AxisKind, DeerCurve};
use super::fit::{least_squares, sorted_pairs, CurveModel, FitResult, MAX_ITERATIONS};
use crate::error::{DeerError, Result};

pub const LORENTZIAN_NAMES: [&str; 4] = ["center", "fwhm", "amplitude", "baseline"];
pub const MIN_POINTS: usize = 5;

/// Value and gradient with respect to (center, fwhm, amplitude, baseline).
pub fn lorentzian_value_and_gradient(p: &[f64; 4], x: f64) -> (f64, [f64; 4]) {
    let [c, w, a, b] = *p;
    let u = 2.0 * (x - c) / w;
    let l = 1.0 / (1.0 + u * u);
    let l2 = l * l;
    let value = b - a * l;
    let grad = [-4.0 * a * u * l2 / w, -2.0 * a * u * u * l2 / w, -l, 1.0];
    (value, grad)
}

struct Model;

impl CurveModel for Model {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        let (v, g) = lorentzian_value_and_gradient(&[p[0], p[1], p[2], p[3]], x);
        grad.copy_from_slice(&g);
        v
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Starting point: center at the lowest sample, baseline the median of the
/// outer quartiles (first and last quarter of the sorted points), FWHM half
/// the span, amplitude baseline minus the lowest sample.
pub fn lorentzian_initial_guess(x: &[f64], y: &[f64]) -> [f64; 4] {
    let n = x.len();
    let mut imin = 0;
    for i in 1..n {
        if y[i] < y[imin] {
            imin = i;
        }
    }
    let q = (n / 4).max(1);
    let outer: Vec<f64> = y[..q].iter().chain(&y[n - q..]).copied().collect();
    let baseline = median(outer);
    [x[imin], 0.5 * (x[n - 1] - x[0]), baseline - y[imin], baseline]
}

pub fn fit_lorentzian_xy(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(DeerError::Parameter(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < MIN_POINTS {
        return Err(DeerError::Parameter(format!("Lorentzian fit needs >= {MIN_POINTS} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(DeerError::Parameter("non-finite sample".into()));
    }
    let (x, y) = sorted_pairs(x, y);
    let init = lorentzian_initial_guess(&x, &y);
    let raw = least_squares(&Model, &x, &y, &init);
    let mut values = raw.params.clone();
    values[1] = values[1].abs();
    let uncertainties: Vec<f64> = (0..4).map(|i| raw.covariance[(i, i)].max(0.0).sqrt()).collect();
    let mut warnings = Vec::new();
    if !raw.converged {
        warnings.push(format!("no convergence within {MAX_ITERATIONS} iterations per parameter: {}", raw.termination));
    }
    Ok(FitResult {
        model: "lorentzian".into(),
        names: LORENTZIAN_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
        uncertainties,
        residual_norm: raw.residual_norm,
        converged: raw.converged,
        iterations: raw.evaluations,
        termination: raw.termination,
        warnings,
    })
}

/// Fit a frequency sweep.
pub fn fit_lorentzian(curve: &DeerCurve) -> Result<FitResult> {
    if curve.axis_kind != AxisKind::FrequencyMhz {
        return Err(DeerError::Parameter("Lorentzian fit needs a frequency axis".into()));
    }
    fit_lorentzian_xy(&curve.xs(), &curve.signals())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_guess_rules() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y = [1.0, 0.9, 0.8, 0.2, 0.5, 0.9, 1.1, 1.0];
        let g = lorentzian_initial_guess(&x, &y);
        assert_eq!(g[0], 3.0);
        assert_eq!(g[1], 3.5);
        assert_eq!(g[3], 1.0);
        assert!((g[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_lorentzian_xy(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).is_err());
    }

    #[test]
    fn wrong_axis() {
        let c = DeerCurve::from_xy(AxisKind::TsNs, &[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0; 5]).unwrap();
        assert!(fit_lorentzian(&c).is_err());
    }
}
