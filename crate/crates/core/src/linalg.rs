//! Dense complex linear algebra for the quantum engine: fast products,
//! Hermitian propagators by eigendecomposition and a scaling-and-squaring
//! Padé exponential.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{DeerError, Result};

pub type CMatrix = DMatrix<Complex64>;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `a · b` through the zgemm microkernel (column-major storage).
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, layout-compatible with [f64; 2];
    // all three buffers are contiguous column-major with the strides given.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Frobenius norm of U†U − I.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let g = matmul(&u.adjoint(), u);
    let mut acc = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let d = if i == j { g[(i, j)] - ONE } else { g[(i, j)] };
            acc += d.norm_sqr();
        }
    }
    acc.sqrt()
}

/// Frobenius norm of H − H†.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    (h - h.adjoint()).norm()
}

/// Eigendecomposition H = V diag(E) V† of a Hermitian matrix, reused for
/// propagators of any duration.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    pub vectors_adjoint: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix, tolerance: f64) -> Result<Self> {
        let dim = h.nrows();
        if dim == 0 {
            return Ok(Self { values: Vec::new(), vectors: CMatrix::zeros(0, 0), vectors_adjoint: CMatrix::zeros(0, 0) });
        }
        // Drive and secular couplings give real Hamiltonians; the real solver
        // is several times faster.
        let (values, vectors): (Vec<f64>, CMatrix) = if h.iter().all(|z| z.im == 0.0) {
            let eig = h.map(|z| z.re).symmetric_eigen();
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| Complex64::new(x, 0.0)))
        } else {
            let eig = h.clone().symmetric_eigen();
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        };
        let defect = unitarity_defect(&vectors);
        if !(defect < tolerance) {
            return Err(DeerError::NumericalIntegrity(format!(
                "eigenvector basis deviates from unitary by {defect:.3e} (dimension {dim})"
            )));
        }
        Ok(Self { values, vectors_adjoint: vectors.adjoint(), vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// exp(−i H t).
    pub fn propagator(&self, t: f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -e * t);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        matmul(&scaled, &self.vectors_adjoint)
    }
}

fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    let theta13 = 5.371_920_351_148_152;
    let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
    let scale = Complex64::new(0.5f64.powi(s), 0.0);
    let a = a * scale;
    let id = CMatrix::identity(n, n);
    let a2 = matmul(&a, &a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);
    let b = |i: usize| Complex64::new(PADE13[i], 0.0);
    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_tail = &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1);
    let u = matmul(&a, &(matmul(&a6, &u_inner) + u_tail));
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = matmul(&a6, &v_inner) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let lu = q.lu();
    let mut r = lu
        .solve(&p)
        .ok_or_else(|| DeerError::NumericalIntegrity("Padé denominator is singular".into()))?;
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    Ok(r)
}

/// exp(−i H t) through [`expm`].
pub fn propagator_pade(h: &CMatrix, t: f64) -> Result<CMatrix> {
    expm(&(h * Complex64::new(0.0, -t)))
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermitian(dim: usize, seed: u64) -> CMatrix {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(dim, dim, |_, _| Complex64::new(next(), next()));
        (&m + m.adjoint()) * Complex64::new(3.0, 0.0)
    }

    #[test]
    fn zgemm_matches_naive_product() {
        let a = hermitian(9, 1);
        let b = CMatrix::from_fn(9, 4, |i, j| Complex64::new(i as f64, -(j as f64)));
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-12);
    }

    #[test]
    fn eigen_and_pade_propagators_agree() {
        for dim in [1, 2, 5, 16] {
            let h = hermitian(dim, dim as u64);
            let eig = HermitianEigen::new(&h, 1e-9).unwrap();
            for &t in &[0.0, 0.013, 0.7, 3.1] {
                let u1 = eig.propagator(t);
                let u2 = propagator_pade(&h, t).unwrap();
                assert!((&u1 - &u2).norm() < 1e-10, "dim {dim} t {t}: {}", (&u1 - &u2).norm());
                assert!(unitarity_defect(&u1) < 1e-10);
            }
        }
    }

    #[test]
    fn expm_of_diagonal() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.5, 1.0),
            Complex64::new(-7.0, 0.0),
        ]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - Complex64::new(0.5, 1.0).exp()).norm() < 1e-13);
        assert!((e[(1, 1)] - Complex64::new(-7.0, 0.0).exp()).norm() < 1e-15);
        assert!(e[(0, 1)].norm() < 1e-15);
    }
}
