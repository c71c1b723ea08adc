//! Least-squares plumbing shared by the curve fitters.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Stop once the relative parameter step falls below this.
pub const PARAMETER_TOLERANCE: f64 = 1e-8;
/// Evaluation budget per free parameter (plus one).
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// 1σ, from the covariance s²·(JᵀJ)⁺.
    pub uncertainties: Vec<f64>,
    /// ‖y − f(x)‖₂
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: String,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.uncertainties[i])
    }
}

/// A model with an analytic gradient in its internal parameters.
pub(crate) trait CurveModel {
    fn n_params(&self) -> usize;
    /// Value at x; writes ∂f/∂p into `grad`.
    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64;
}

struct Problem<'a, M: CurveModel> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
}

impl<M: CurveModel> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut g = vec![0.0; self.model.n_params()];
        let r = DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| self.model.eval(self.p.as_slice(), x, &mut g) - y),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.model.n_params();
        let mut j = DMatrix::zeros(self.x.len(), n);
        let mut g = vec![0.0; n];
        for (i, &x) in self.x.iter().enumerate() {
            self.model.eval(self.p.as_slice(), x, &mut g);
            for k in 0..n {
                j[(i, k)] = g[k];
            }
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

pub(crate) struct RawFit {
    pub params: Vec<f64>,
    /// Covariance of the internal parameters.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub termination: String,
}

pub(crate) fn least_squares<M: CurveModel>(model: &M, x: &[f64], y: &[f64], init: &[f64]) -> RawFit {
    let problem = Problem { model, x, y, p: DVector::from_column_slice(init) };
    let solver = LevenbergMarquardt::new()
        .with_xtol(PARAMETER_TOLERANCE)
        .with_ftol(f64::EPSILON * 30.0)
        .with_gtol(f64::EPSILON * 30.0)
        .with_patience(MAX_ITERATIONS);
    let (problem, report) = solver.minimize(problem);
    let converged = matches!(
        report.termination,
        TerminationReason::ResidualsZero
            | TerminationReason::Orthogonal
            | TerminationReason::Converged { .. }
            | TerminationReason::NoImprovementPossible(_)
    );
    let r = problem.residuals();
    let residual_norm = r.as_ref().map_or(f64::NAN, |r| r.norm());
    let m = x.len();
    let n = init.len();
    let covariance = match problem.jacobian() {
        Some(j) => {
            let s2 = if m > n { residual_norm * residual_norm / (m - n) as f64 } else { 0.0 };
            let jtj = j.transpose() * j;
            match jtj.clone().pseudo_inverse(1e-14 * jtj.amax().max(f64::MIN_POSITIVE)) {
                Ok(inv) => inv * s2,
                Err(_) => DMatrix::from_element(n, n, f64::NAN),
            }
        }
        None => DMatrix::from_element(n, n, f64::NAN),
    };
    RawFit {
        params: problem.p.as_slice().to_vec(),
        covariance,
        residual_norm,
        converged,
        evaluations: report.number_of_evaluations,
        termination: format!("{:?}", report.termination),
    }
}

/// Sort paired samples by x.
pub(crate) fn sorted_pairs(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    (idx.iter().map(|&i| x[i]).collect(), idx.iter().map(|&i| y[i]).collect())
}
