//! C interface to the nvdeer simulator.
//!
//! Every function returns an [`NvdeerStatus`] and writes results through
//! out-pointers. After a non-OK status, [`nvdeer_last_error_message`] gives a
//! description valid until the next call on the same thread. Objects come
//! back as opaque handles owned by the caller and released with the matching
//! `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nvdeer::analysis::curve::{AxisKind, CurvePoint, DeerCurve};
use nvdeer::analysis::{estimate_density, extract_min, fit_lorentzian};
use nvdeer::analytic::{eq1_floor, single_spin_deer, FloorParams, SingleSpinParams};
use nvdeer::runner::{run_curve, ExperimentConfig};
use nvdeer::DeerError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvdeerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Parameter = 4,
    Constraint = 5,
    Validation = 6,
    Parse = 7,
    Capacity = 8,
    Numerical = 9,
    Io = 10,
    OutOfRange = 11,
    /// The run finished but some sweep points failed; the curve holds the rest.
    PartialFailure = 12,
    Panic = 13,
    Other = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvdeerAxis {
    TsNs = 0,
    FrequencyMhz = 1,
}

impl From<NvdeerAxis> for AxisKind {
    fn from(a: NvdeerAxis) -> Self {
        match a {
            NvdeerAxis::TsNs => AxisKind::TsNs,
            NvdeerAxis::FrequencyMhz => AxisKind::FrequencyMhz,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdeerCurvePoint {
    pub x: f64,
    pub signal_mean: f64,
    pub signal_sem: f64,
    pub n_realizations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdeerSingleSpinParams {
    pub coupling_mhz: f64,
    pub detuning_mhz: f64,
    pub rabi_mhz: f64,
    pub tau_ns: f64,
    pub ts_ns: f64,
    pub offset_ns: f64,
    pub instantaneous: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdeerLorentzianFit {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
    pub amplitude_err: f64,
    pub baseline_err: f64,
    pub residual_norm: f64,
    pub iterations: u64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdeerCurveMinimum {
    pub min_signal: f64,
    pub x_at_min: f64,
    pub min_signal_sem: f64,
    pub index: u64,
}

/// Parsed experiment configuration.
pub struct NvdeerExperiment {
    config: ExperimentConfig,
}

/// A simulated or user-supplied sweep.
pub struct NvdeerCurve {
    curve: DeerCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &DeerError) -> NvdeerStatus {
    match e {
        DeerError::Domain(_) | DeerError::Singularity(_) => NvdeerStatus::Domain,
        DeerError::Parameter(_) => NvdeerStatus::Parameter,
        DeerError::Constraint(_) | DeerError::Alignment(_) => NvdeerStatus::Constraint,
        DeerError::Validation(_) => NvdeerStatus::Validation,
        DeerError::Parse(_) | DeerError::Json(_) => NvdeerStatus::Parse,
        DeerError::Capacity(_) => NvdeerStatus::Capacity,
        DeerError::NumericalIntegrity(_) | DeerError::Accuracy(_) | DeerError::Integration(_) => {
            NvdeerStatus::Numerical
        }
        DeerError::Io(_) => NvdeerStatus::Io,
        DeerError::Sampling(_) => NvdeerStatus::Other,
    }
}

struct Fail(NvdeerStatus, String);

impl From<DeerError> for Fail {
    fn from(e: DeerError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NvdeerStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, record any failure and turn panics into a status.
fn guard<F: FnOnce() -> Result<NvdeerStatus, Fail>>(f: F) -> NvdeerStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NvdeerStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

/// Message for the last failed call on this thread, or null if it
/// succeeded. Owned by the library.
#[no_mangle]
pub extern "C" fn nvdeer_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nvdeer_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Target Larmor frequency in MHz at `field_gauss`.
///
/// # Safety
/// `out_mhz` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_larmor_frequency(field_gauss: f64, out_mhz: *mut f64) -> NvdeerStatus {
    guard(|| {
        let f = nvdeer::larmor_frequency(field_gauss)?;
        unsafe { write(out_mhz, f, "out_mhz")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Closed-form echo floor for a uniform layer.
///
/// # Safety
/// `out_signal` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_eq1_floor(
    density_per_nm2: f64,
    depth_nm: f64,
    tau_ns: f64,
    out_signal: *mut f64,
) -> NvdeerStatus {
    guard(|| {
        let s = eq1_floor(&FloorParams { density_per_nm2, depth_nm, tau_ns })?;
        unsafe { write(out_signal, s, "out_signal")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Areal density in nm⁻² from a minimum echo signal.
///
/// # Safety
/// `out_density` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_estimate_density(
    min_signal: f64,
    depth_nm: f64,
    tau_ns: f64,
    out_density: *mut f64,
) -> NvdeerStatus {
    guard(|| {
        let e = estimate_density(min_signal, depth_nm, tau_ns)?;
        unsafe { write(out_density, e.sigma_hat_per_nm2, "out_density")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Echo factor of a single target.
///
/// # Safety
/// `params` must be null or point to a valid struct; `out_signal` must be
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_single_spin_deer(
    params: *const NvdeerSingleSpinParams,
    out_signal: *mut f64,
) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let p = unsafe { params.as_ref() }.ok_or_else(|| null("params"))?;
        let s = single_spin_deer(&SingleSpinParams {
            coupling_mhz: p.coupling_mhz,
            detuning_mhz: p.detuning_mhz,
            rabi_mhz: p.rabi_mhz,
            tau_ns: p.tau_ns,
            ts_ns: p.ts_ns,
            offset_ns: p.offset_ns,
            instantaneous: p.instantaneous,
        })?;
        unsafe { write(out_signal, s, "out_signal")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Parse and validate a TOML configuration.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut NvdeerExperiment,
) -> NvdeerStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller contract.
        let text = unsafe { CStr::from_ptr(toml) }
            .to_str()
            .map_err(|e| Fail(NvdeerStatus::InvalidUtf8, e.to_string()))?;
        let config = ExperimentConfig::from_toml_str(text)?;
        config.validate()?;
        let handle = Box::into_raw(Box::new(NvdeerExperiment { config }));
        unsafe { write(out, handle, "out")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// # Safety
/// `exp` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_experiment_set_seed(exp: *mut NvdeerExperiment, seed: u64) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let e = unsafe { exp.as_mut() }.ok_or_else(|| null("experiment"))?;
        e.config.engine.seed = seed;
        Ok(NvdeerStatus::Ok)
    })
}

/// Run the configured sweep on `threads` workers (0 = all cores). Nothing
/// is written to disk. On `PartialFailure` the curve is still returned.
///
/// # Safety
/// `exp` must be null or a live handle; `out_curve` must be null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_experiment_run(
    exp: *const NvdeerExperiment,
    threads: u32,
    out_curve: *mut *mut NvdeerCurve,
) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let e = unsafe { exp.as_ref() }.ok_or_else(|| null("experiment"))?;
        if out_curve.is_null() {
            return Err(null("out_curve"));
        }
        let threads = if threads == 0 { nvdeer::runner::default_threads() } else { threads as usize };
        let run = run_curve(&e.config, threads)?;
        let status = if run.is_partial() {
            let first = &run.failures[0];
            set_error(format!(
                "{} sweep point(s) failed; first at {}: {}",
                run.failures.len(),
                first.sweep_value,
                first.message
            ));
            NvdeerStatus::PartialFailure
        } else {
            NvdeerStatus::Ok
        };
        let handle = Box::into_raw(Box::new(NvdeerCurve { curve: run.curve }));
        unsafe { write(out_curve, handle, "out_curve")? };
        Ok(status)
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_experiment_free(exp: *mut NvdeerExperiment) {
    if !exp.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(exp) });
    }
}

/// Build a curve from arrays of length `len`. `sem` may be null (zeros);
/// each point counts as one realization.
///
/// # Safety
/// `x` and `y` (and `sem` if non-null) must point to `len` readable values;
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_curve_from_arrays(
    axis: NvdeerAxis,
    x: *const f64,
    y: *const f64,
    sem: *const f64,
    len: usize,
    out: *mut *mut NvdeerCurve,
) -> NvdeerStatus {
    guard(|| {
        if x.is_null() || y.is_null() {
            return Err(null("x or y"));
        }
        // SAFETY: caller contract.
        let (xs, ys) = unsafe { (std::slice::from_raw_parts(x, len), std::slice::from_raw_parts(y, len)) };
        let sems = if sem.is_null() { None } else { Some(unsafe { std::slice::from_raw_parts(sem, len) }) };
        let points = (0..len)
            .map(|i| CurvePoint { x: xs[i], signal_mean: ys[i], signal_sem: sems.map_or(0.0, |s| s[i]), n: 1 })
            .collect();
        let curve = DeerCurve::new(axis.into(), points)?;
        let handle = Box::into_raw(Box::new(NvdeerCurve { curve }));
        unsafe { write(out, handle, "out")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_curve_len(curve: *const NvdeerCurve) -> usize {
    // SAFETY: caller contract.
    unsafe { curve.as_ref() }.map_or(0, |c| c.curve.len())
}

/// # Safety
/// `curve` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_curve_point(
    curve: *const NvdeerCurve,
    index: usize,
    out: *mut NvdeerCurvePoint,
) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let c = unsafe { curve.as_ref() }.ok_or_else(|| null("curve"))?;
        let p = c.curve.points().get(index).ok_or_else(|| {
            Fail(NvdeerStatus::OutOfRange, format!("index {index} outside curve of length {}", c.curve.len()))
        })?;
        let point = NvdeerCurvePoint { x: p.x, signal_mean: p.signal_mean, signal_sem: p.signal_sem, n_realizations: p.n as u64 };
        unsafe { write(out, point, "out")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Minimum of the running-mean-smoothed curve.
///
/// # Safety
/// `curve` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_curve_min(
    curve: *const NvdeerCurve,
    window: usize,
    out: *mut NvdeerCurveMinimum,
) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let c = unsafe { curve.as_ref() }.ok_or_else(|| null("curve"))?;
        let m = extract_min(&c.curve, window)?;
        let value =
            NvdeerCurveMinimum { min_signal: m.min_signal, x_at_min: m.x_at_min, min_signal_sem: m.min_signal_sem, index: m.index as u64 };
        unsafe { write(out, value, "out")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// Lorentzian fit of a frequency-axis curve.
///
/// # Safety
/// `curve` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_fit_lorentzian(curve: *const NvdeerCurve, out: *mut NvdeerLorentzianFit) -> NvdeerStatus {
    guard(|| {
        // SAFETY: caller contract.
        let c = unsafe { curve.as_ref() }.ok_or_else(|| null("curve"))?;
        let f = fit_lorentzian(&c.curve)?;
        let (v, u) = (&f.values, &f.uncertainties);
        let fit = NvdeerLorentzianFit {
            center_mhz: v[0],
            fwhm_mhz: v[1],
            amplitude: v[2],
            baseline: v[3],
            center_err: u[0],
            fwhm_err: u[1],
            amplitude_err: u[2],
            baseline_err: u[3],
            residual_norm: f.residual_norm,
            iterations: f.iterations as u64,
            converged: f.converged,
        };
        unsafe { write(out, fit, "out")? };
        Ok(NvdeerStatus::Ok)
    })
}

/// # Safety
/// `curve` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nvdeer_curve_free(curve: *mut NvdeerCurve) {
    if !curve.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(curve) });
    }
}
