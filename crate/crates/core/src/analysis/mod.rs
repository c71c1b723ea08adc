//! Data reduction: density estimate from the signal floor, smoothed
//! minimum extraction, Lorentzian and bi-exponential fits, period
//! comparison and curve-shape classification.

pub mod biexp;
pub mod curve;
pub mod density;
pub mod fit;
pub mod lorentzian;
pub mod shape;
pub mod smoothing;
pub mod split;

pub use biexp::{biexp_value_and_gradient, fit_biexponential};
pub use curve::{AxisKind, CurvePoint, DeerCurve};
pub use density::{estimate_density, estimate_density_with_sem, DensityEstimate, EstimateStatus, DARK_SPIN_THRESHOLD_PER_NM2};
pub use fit::FitResult;
pub use lorentzian::{fit_lorentzian, fit_lorentzian_xy, lorentzian_value_and_gradient};
pub use shape::{classify_shape, CurveClass, ShapeReport};
pub use smoothing::{extract_min, running_mean, CurveMinimum};
pub use split::{pair_average, split_compare, SplitComparison, SplitOptions};
