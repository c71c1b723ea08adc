//! Adaptive Gauss–Kronrod (7/15) integration on finite intervals.
//!
//! Subdivision is a fixed bisection tree and partial results are summed in
//! tree order, so a given integrand always produces the same bits.

use crate::error::{DeerError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn recurse<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    max_depth: usize,
    whole: (f64, f64),
    evals: &mut usize,
) -> std::result::Result<(f64, f64), f64> {
    let (value, err) = whole;
    if err <= tol || err <= 64.0 * f64::EPSILON * value.abs() {
        return Ok((value, err));
    }
    if depth >= max_depth {
        return Err(err);
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    *evals += 30;
    let l = recurse(f, a, m, 0.5 * tol, depth + 1, max_depth, left, evals)?;
    let r = recurse(f, m, b, 0.5 * tol, depth + 1, max_depth, right, evals)?;
    Ok((l.0 + r.0, l.1 + r.1))
}

/// ∫ₐᵇ f with absolute tolerance `tol`, bisecting at most `max_depth` levels.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_depth: usize) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    let mut evals = 15;
    let whole = gk15(&mut f, a, b);
    match recurse(&mut f, a, b, tol, 0, max_depth, whole, &mut evals) {
        Ok((value, abs_error)) => Ok(Estimate { value, abs_error, evaluations: evals }),
        Err(achieved) => Err(DeerError::Accuracy(format!(
            "quadrature on [{a}, {b}] reached error {achieved:.3e} > tolerance {tol:.3e} at depth {max_depth}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_transcendentals() {
        let e = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, 1e-12, 20).unwrap();
        assert!((e.value - (81.0 / 4.0 - 9.0)).abs() < 1e-12);
        let e = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 20).unwrap();
        assert!((e.value - 2.0).abs() < 1e-12);
        let e = integrate(|x: f64| 1.0 / (1.0 + x * x), -50.0, 50.0, 1e-10, 30).unwrap();
        assert!((e.value - 2.0 * 50f64.atan()).abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-9, 1.0, 1e-14, 3);
        assert!(matches!(r, Err(DeerError::Accuracy(_))));
    }
}
