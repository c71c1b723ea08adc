//! A₁e^(−t/T_a) + A₂e^(−t/T_b) + offset with T_a ≤ T_b.
//!
//! Internally the fit runs on q = (A₁, ln T_a, A₂, ln(T_b − T_a), offset),
//! which keeps both times positive and ordered. Times may be in any unit;
//! the fitted constants come back in the same unit.

use nalgebra::DMatrix;

use super::fit::{least_squares, sorted_pairs, CurveModel, FitResult, RawFit, MAX_ITERATIONS};
use crate::error::{DeerError, Result};

pub const BIEXP_NAMES: [&str; 5] = ["a1", "t_a", "a2", "t_b", "offset"];
pub const MIN_POINTS: usize = 7;

/// Value and gradient with respect to the internal parameters q.
pub fn biexp_value_and_gradient(q: &[f64; 5], t: f64) -> (f64, [f64; 5]) {
    let [a1, la, a2, ld, c] = *q;
    let ta = la.exp();
    let tb = ta + ld.exp();
    let e1 = (-t / ta).exp();
    let e2 = (-t / tb).exp();
    // d e^{-t/T}/dT = t/T² e^{-t/T}
    let d1 = a1 * t / (ta * ta) * e1;
    let d2 = a2 * t / (tb * tb) * e2;
    let value = a1 * e1 + a2 * e2 + c;
    (value, [e1, d1 * ta + d2 * ta, e2, d2 * (tb - ta), 1.0])
}

/// (A₁, T_a, A₂, T_b, offset) → q. Requires 0 < T_a < T_b.
pub fn biexp_internal(p: &[f64; 5]) -> Result<[f64; 5]> {
    let [a1, ta, a2, tb, c] = *p;
    if !(ta > 0.0 && tb > ta) {
        return Err(DeerError::Parameter(format!("need 0 < t_a < t_b, got {ta}, {tb}")));
    }
    Ok([a1, ta.ln(), a2, (tb - ta).ln(), c])
}

pub fn biexp_external(q: &[f64; 5]) -> [f64; 5] {
    let ta = q[1].exp();
    [q[0], ta, q[2], ta + q[3].exp(), q[4]]
}

struct Model;

impl CurveModel for Model {
    fn n_params(&self) -> usize {
        5
    }

    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        let (v, g) = biexp_value_and_gradient(&[p[0], p[1], p[2], p[3], p[4]], x);
        grad.copy_from_slice(&g);
        v
    }
}

fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Two-segment log-linear start.
///
/// The curve is oriented to decay and shifted just below its lowest
/// sample. A line through ln(y) over the last half of the points gives
/// (A₂, T_b); the same over the first third, after removing that slow
/// component, gives (A₁, T_a). Missing or inconsistent segments fall back
/// to T_a = T_b/10 with the remaining initial amplitude.
pub fn biexp_initial_guess(t: &[f64], y: &[f64]) -> [f64; 5] {
    let n = t.len();
    let s = if y[0] >= y[n - 1] { 1.0 } else { -1.0 };
    let z: Vec<f64> = y.iter().map(|v| s * v).collect();
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (zmax - zmin).max(f64::MIN_POSITIVE);
    let c0 = zmin - 0.01 * range;
    let w: Vec<f64> = z.iter().map(|v| v - c0).collect();
    let span = t[n - 1] - t[0];

    let late = n / 2;
    let ln_late: Vec<f64> = w[late..].iter().map(|v| v.ln()).collect();
    let (mut a2, mut tb) = match line_fit(&t[late..], &ln_late) {
        Some((b0, slope)) if slope < 0.0 => (b0.exp(), -1.0 / slope),
        _ => (w[late..].iter().sum::<f64>() / (n - late) as f64, span),
    };
    if !(tb.is_finite() && tb > 0.0) {
        tb = span;
    }
    let early = (n / 3).max(2);
    let (et, ey): (Vec<f64>, Vec<f64>) = t[..early]
        .iter()
        .zip(&w[..early])
        .filter_map(|(&ti, &wi)| {
            let e = wi - a2 * (-ti / tb).exp();
            (e > 0.0).then(|| (ti, e.ln()))
        })
        .unzip();
    let (a1, ta) = match line_fit(&et, &ey) {
        Some((b0, slope)) if slope < 0.0 && -1.0 / slope < tb => (b0.exp(), -1.0 / slope),
        _ => {
            let ta = tb / 10.0;
            let rest = w[0] - a2 * (-t[0] / tb).exp();
            (rest.max(0.1 * w[0]) * (t[0] / ta).exp().min(1e6), ta)
        }
    };
    if !(a2.is_finite()) {
        a2 = 0.5 * w[0];
    }
    [s * a1, ta, s * a2, tb.max(1.01 * ta), s * c0]
}

fn external_covariance(q: &[f64], cov: &DMatrix<f64>) -> Vec<f64> {
    let ta = q[1].exp();
    let d = q[3].exp();
    // Rows: ∂(a1, t_a, a2, t_b, offset)/∂q
    let mut jt = DMatrix::<f64>::zeros(5, 5);
    jt[(0, 0)] = 1.0;
    jt[(1, 1)] = ta;
    jt[(2, 2)] = 1.0;
    jt[(3, 1)] = ta;
    jt[(3, 3)] = d;
    jt[(4, 4)] = 1.0;
    let c = &jt * cov * jt.transpose();
    (0..5).map(|i| c[(i, i)].max(0.0).sqrt()).collect()
}

pub fn fit_biexponential(times: &[f64], values: &[f64]) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(DeerError::Parameter(format!("{} times but {} values", times.len(), values.len())));
    }
    if times.len() < MIN_POINTS {
        return Err(DeerError::Parameter(format!("bi-exponential fit needs >= {MIN_POINTS} points, got {}", times.len())));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(DeerError::Parameter("non-finite sample".into()));
    }
    let (times, values) = sorted_pairs(times, values);
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DeerError::Parameter("times must be distinct".into()));
    }
    let (times, values) = (times.as_slice(), values.as_slice());
    let guess = biexp_initial_guess(times, values);
    let mut starts = vec![biexp_internal(&guess)?];
    // Second start: same slow component, fast time a decade shorter,
    // amplitude split evenly.
    let alt = [0.5 * (guess[0] + guess[2]), guess[3] / 10.0, 0.5 * (guess[0] + guess[2]), guess[3], guess[4]];
    starts.push(biexp_internal(&alt)?);
    let mut best: Option<RawFit> = None;
    let mut total_evals = 0;
    for s in &starts {
        let raw = least_squares(&Model, times, values, s);
        total_evals += raw.evaluations;
        let better = match &best {
            None => true,
            Some(b) => (raw.converged && !b.converged) || (raw.converged == b.converged && raw.residual_norm < b.residual_norm),
        };
        if better {
            best = Some(raw);
        }
    }
    let raw = best.expect("at least one start");
    let q: [f64; 5] = [raw.params[0], raw.params[1], raw.params[2], raw.params[3], raw.params[4]];
    let mut warnings = Vec::new();
    if !raw.converged {
        warnings.push(format!("no convergence within {MAX_ITERATIONS} iterations per parameter: {}", raw.termination));
    }
    Ok(FitResult {
        model: "biexponential".into(),
        names: BIEXP_NAMES.iter().map(|s| s.to_string()).collect(),
        values: biexp_external(&q).to_vec(),
        uncertainties: external_covariance(&q, &raw.covariance),
        residual_norm: raw.residual_norm,
        converged: raw.converged,
        iterations: total_evals,
        termination: raw.termination,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_maps_invert() {
        let p = [0.3, 0.4, 0.7, 3.0, 0.1];
        let back = biexp_external(&biexp_internal(&p).unwrap());
        for (a, b) in p.iter().zip(back) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(biexp_internal(&[1.0, 2.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_short_or_duplicated() {
        assert!(fit_biexponential(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.2]).is_err());
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 4.0, 6.0];
        assert!(fit_biexponential(&t, &[1.0; 7]).is_err());
    }
}
