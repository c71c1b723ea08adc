//! Forward simulation and analysis of DEER sensing of surface radical
//! spins with a single shallow NV center.
//!
//! Three models of the target layer share one timeline description:
//! an exact interacting quantum ensemble ([`quantum`]), independent spins in
//! closed form with a Poisson-averaged limit ([`analytic`]) and classical
//! Bloch magnetization with relaxation ([`bloch`]). [`analysis`] turns
//! curves into densities and fit parameters; [`runner`] drives whole
//! experiments from a configuration file.
//!
//! Units at API boundaries: MHz for frequencies and couplings, ns for
//! times (µs for relaxation times), nm for lengths, G for fields.

pub mod analysis;
pub mod analytic;
pub mod bloch;
pub mod constants;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod quantum;
pub mod rng;
pub mod runner;
pub mod sequence;

pub use constants::{larmor_frequency, CONSTANTS, MAGIC_ANGLE_DEG};
pub use error::{DeerError, Result};
pub use geometry::{sample_configuration, NvSite, SamplingParams, SpinConfiguration, TargetSpin};
pub use sequence::{build_deer_timeline, DeerTimeline, DriveParams, DrivePulse, SweepKind};
