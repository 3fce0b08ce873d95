//! C interface to `ivbounds`.
//!
//! Datasets live behind an opaque [`IvbDataset`] handle created by
//! [`ivb_dataset_from_arrays`] or [`ivb_dataset_load_csv`] and released with
//! [`ivb_dataset_free`]. Every other call returns an [`IvbStatus`]; on
//! failure [`ivb_last_error_message`] describes the error. Results are
//! written through caller-owned output structs, so no other memory crosses
//! the boundary. Panics are caught and reported as `IVB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{self, AssertUnwindSafe};

use ivbounds::data::{self, AssumptionParams, ColumnMap, Interval, ObservationalDataset};
use ivbounds::estimators::{self, SensitivityValue};
use ivbounds::strata::{Assumption, BoundContext};
use ivbounds::uncertainty::{self, EndpointEnsemble};
use ivbounds::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvbStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 2,
    /// The records failed validation or could not be parsed.
    DataError = 3,
    /// A model fit or inversion failed numerically.
    NumericalError = 4,
    /// The data cannot identify the requested quantity (weak instrument,
    /// empty cell, crossed bound).
    IdentificationError = 5,
    /// Too many bootstrap replicates failed, or too few were requested.
    BootstrapError = 6,
    /// A file could not be read.
    IoError = 7,
    /// The library panicked; this is a bug.
    Panic = 8,
}

/// Which assumption set the bounds use. Passed as an `int`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvbAssumption {
    /// Caps on how far the unidentified stratum means may sit from zero.
    A = 0,
    /// Ordering restrictions on stratum means.
    B = 1,
    /// Ordering restrictions conditional on the covariates.
    BPrime = 2,
}

/// Point estimator selector. Passed as an `int`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvbMethod {
    AsTreated = 0,
    Ipw = 1,
    /// IPW corrected for a given level of unmeasured confounding.
    ModifiedIpw = 2,
    InstrumentalVariable = 3,
}

/// Opaque dataset handle.
pub struct IvbDataset {
    inner: ObservationalDataset,
}

/// Assumption constants; unused ones are ignored. Zero-initialise for the
/// defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbParams {
    pub xi0: f64,
    pub xi1: f64,
    pub delta11: f64,
    pub delta00: f64,
    pub delta_y0: f64,
    pub delta_trt: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbEstimate {
    pub value: f64,
    /// Untreated mean for the weighting estimators; intercept of the
    /// instrument regression for IV.
    pub intercept: f64,
    /// Analytic standard error, NaN when the estimator has none.
    pub se: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbInterval {
    pub lower: f64,
    pub upper: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbBounds {
    pub ate: IvbInterval,
    pub tau: IvbInterval,
}

/// Bound on one target with its bootstrap standard errors and the three
/// uncertainty regions.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbRegion {
    pub bound: IvbInterval,
    pub se_lower: f64,
    pub se_upper: f64,
    /// Covers each point of the bound at the requested level.
    pub pointwise_normal: IvbInterval,
    /// Covers the whole bound at the requested level.
    pub strong_normal: IvbInterval,
    /// Shortest interval holding the requested share of replicate bounds.
    /// Only meaningful when `has_strong_bootstrap` is set.
    pub strong_bootstrap: IvbInterval,
    pub has_strong_bootstrap: bool,
    /// The bound is narrow relative to its standard errors.
    pub approximate: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IvbUncertainty {
    pub ate: IvbRegion,
    pub tau: IvbRegion,
    /// Replicates that raised an estimation error and were dropped.
    pub failures: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure {
    status: IvbStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Precondition(_)
            | Error::InfeasibleTau { .. }
            | Error::Json(_) => IvbStatus::InvalidArgument,
            Error::MissingColumn(_)
            | Error::NonBinaryValue { .. }
            | Error::NonFiniteValue { .. }
            | Error::MissingCell { .. }
            | Error::EmptyInstrumentCell { .. }
            | Error::InvalidDataset(_)
            | Error::Csv(_) => IvbStatus::DataError,
            Error::RankDeficientDesign { .. }
            | Error::SeparationDetected
            | Error::MaxIterationsExceeded { .. }
            | Error::SingularDenominator { .. }
            | Error::DegenerateWeights { .. } => IvbStatus::NumericalError,
            Error::EmptyArm { .. } | Error::WeakInstrument { .. } | Error::EmptyCell { .. } | Error::InvalidBound { .. } => {
                IvbStatus::IdentificationError
            }
            Error::TooManyFailures { .. } | Error::InsufficientReplicates { .. } => IvbStatus::BootstrapError,
            Error::Io(_) => IvbStatus::IoError,
        };
        Self {
            status,
            message: format!("{}: {e}", e.kind()),
        }
    }
}

fn failure(status: IvbStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

fn null(name: &str) -> Failure {
    failure(IvbStatus::NullPointer, format!("`{name}` is NULL"))
}

/// Runs `body`, recording any error or panic for `ivb_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> IvbStatus {
    match panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            IvbStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_last_error(&format!("panic: {msg}"));
            IvbStatus::Panic
        }
    }
}

unsafe fn borrow_dataset<'a>(handle: *const IvbDataset) -> Result<&'a ObservationalDataset, Failure> {
    // SAFETY: the caller passes a live handle from this library or NULL.
    unsafe { handle.as_ref() }.map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn optional_str(p: *const c_char, name: &str) -> Result<Option<String>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    // SAFETY: the caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| failure(IvbStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))?;
    Ok(Some(s.to_string()))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: the caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn assumption_from(code: c_int) -> Result<Assumption, Failure> {
    match code {
        x if x == IvbAssumption::A as c_int => Ok(Assumption::A),
        x if x == IvbAssumption::B as c_int => Ok(Assumption::B),
        x if x == IvbAssumption::BPrime as c_int => Ok(Assumption::Bprime),
        other => Err(failure(IvbStatus::InvalidArgument, format!("unknown assumption code {other}"))),
    }
}

unsafe fn params_from(p: *const IvbParams) -> AssumptionParams {
    // SAFETY: the caller passes a valid struct or NULL.
    let p = unsafe { p.as_ref() }.copied().unwrap_or_default();
    AssumptionParams {
        xi0: p.xi0,
        xi1: p.xi1,
        delta11: p.delta11,
        delta00: p.delta00,
        delta_y0: p.delta_y0,
        delta_trt: p.delta_trt,
    }
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    // SAFETY: checked non-NULL; the caller owns writable storage.
    unsafe { out.write(value) };
    Ok(())
}

fn interval(i: &Interval) -> IvbInterval {
    IvbInterval {
        lower: i.lower,
        upper: i.upper,
    }
}

/// Builds a dataset from column arrays of length `n`. `covariates` is
/// row-major `n x p` and may be NULL when `p == 0`. `covariate_names` may be
/// NULL, in which case columns are named `v1..vp`. On success `*out` owns a
/// new handle that must be released with `ivb_dataset_free`.
///
/// # Safety
/// Each non-NULL pointer must reference the stated number of readable
/// elements; `covariate_names` entries must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ivb_dataset_from_arrays(
    y: *const f64,
    a: *const u8,
    z: *const u8,
    n: usize,
    covariates: *const f64,
    p: usize,
    covariate_names: *const *const c_char,
    out: *mut *mut IvbDataset,
) -> IvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cells = n.checked_mul(p).ok_or_else(|| failure(IvbStatus::InvalidArgument, "n * p overflows"))?;
        let (y, a, z, v) = unsafe {
            (
                slice(y, n, "y")?,
                slice(a, n, "a")?,
                slice(z, n, "z")?,
                slice(covariates, cells, "covariates")?,
            )
        };
        let names = if covariate_names.is_null() {
            (1..=p).map(|j| format!("v{j}")).collect()
        } else {
            let raw = unsafe { slice(covariate_names, p, "covariate_names")? };
            raw.iter()
                .enumerate()
                .map(|(j, &s)| unsafe { optional_str(s, "covariate_names") }?.ok_or_else(|| null(&format!("covariate_names[{j}]"))))
                .collect::<Result<Vec<_>, _>>()?
        };
        let inner = ObservationalDataset::new(y.to_vec(), a.to_vec(), z.to_vec(), v.to_vec(), names)?;
        unsafe { *out = Box::into_raw(Box::new(IvbDataset { inner })) };
        Ok(())
    })
}

/// Reads a CSV file with a header row. Column-name arguments may be NULL to
/// use `y`, `a` and `z`; `covariates` is a comma-separated list of column
/// names, or NULL / empty for none.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_dataset_load_csv(
    path: *const c_char,
    outcome: *const c_char,
    treatment: *const c_char,
    instrument: *const c_char,
    covariates: *const c_char,
    out: *mut *mut IvbDataset,
) -> IvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { optional_str(path, "path")? }.ok_or_else(|| null("path"))?;
        let defaults = ColumnMap::default();
        let columns = unsafe {
            ColumnMap {
                outcome: optional_str(outcome, "outcome")?.unwrap_or(defaults.outcome),
                treatment: optional_str(treatment, "treatment")?.unwrap_or(defaults.treatment),
                instrument: optional_str(instrument, "instrument")?.unwrap_or(defaults.instrument),
                covariates: optional_str(covariates, "covariates")?
                    .map(|s| s.split(',').map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect())
                    .unwrap_or_default(),
            }
        };
        let inner = data::load_dataset(&path, &columns).map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{path}: {}", f.message);
            f
        })?;
        unsafe { *out = Box::into_raw(Box::new(IvbDataset { inner })) };
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ivb_dataset_free(dataset: *mut IvbDataset) {
    if !dataset.is_null() {
        // SAFETY: the handle came from Box::into_raw in this library.
        drop(unsafe { Box::from_raw(dataset) });
    }
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivb_dataset_rows(dataset: *const IvbDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.inner.n())
}

/// Number of covariates, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivb_dataset_covariates(dataset: *const IvbDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.inner.p())
}

/// Point estimate of the treatment effect. `method` is an `IvbMethod`
/// value; `tau` is used only by `IVB_METHOD_MODIFIED_IPW`.
///
/// # Safety
/// `dataset` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_estimate(
    dataset: *const IvbDataset,
    method: c_int,
    tau: f64,
    out: *mut IvbEstimate,
) -> IvbStatus {
    guard(|| {
        let ds = unsafe { borrow_dataset(dataset)? };
        let est = match method {
            x if x == IvbMethod::AsTreated as c_int => estimators::at_estimate(ds)?,
            x if x == IvbMethod::Ipw as c_int => estimators::ipw_estimate(ds, &estimators::fit_propensity(ds)?)?,
            x if x == IvbMethod::ModifiedIpw as c_int => {
                if !tau.is_finite() {
                    return Err(failure(IvbStatus::InvalidArgument, "tau must be finite"));
                }
                estimators::mipw_estimate(ds, &estimators::fit_propensity(ds)?, SensitivityValue { tau })?
            }
            x if x == IvbMethod::InstrumentalVariable as c_int => estimators::iv_estimate(ds)?,
            other => return Err(failure(IvbStatus::InvalidArgument, format!("unknown method code {other}"))),
        };
        let value = IvbEstimate {
            value: est.value,
            intercept: est.intercept,
            se: est.se.unwrap_or(f64::NAN),
        };
        unsafe { write(out, value, "out") }
    })
}

/// Level of unmeasured confounding implied by a candidate ATE.
///
/// # Safety
/// `dataset` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_tau_at(dataset: *const IvbDataset, ate: f64, out: *mut f64) -> IvbStatus {
    guard(|| {
        let ds = unsafe { borrow_dataset(dataset)? };
        let tau = estimators::tau_hat(ds, &estimators::fit_propensity(ds)?, ate)?.tau;
        unsafe { write(out, tau, "out") }
    })
}

/// Bounds on the ATE and on tau. `assumption` is an `IvbAssumption` value;
/// `params` may be NULL for all-zero constants.
///
/// # Safety
/// `dataset` must be a live handle, `params` NULL or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_bounds(
    dataset: *const IvbDataset,
    assumption: c_int,
    params: *const IvbParams,
    out: *mut IvbBounds,
) -> IvbStatus {
    guard(|| {
        let ds = unsafe { borrow_dataset(dataset)? };
        let assumption = assumption_from(assumption)?;
        let params = unsafe { params_from(params) };
        let bp = BoundContext::fit(ds, assumption.needs_covariate_models())?.bounds(assumption, &params)?;
        let value = IvbBounds {
            ate: interval(&bp.ate_bound),
            tau: interval(&bp.tau_bound),
        };
        unsafe { write(out, value, "out") }
    })
}

fn region(bound: &Interval, ens: &EndpointEnsemble, level: f64) -> Result<IvbRegion, Failure> {
    let (se_lower, se_upper) = ens.standard_errors()?;
    let pointwise = uncertainty::ur_pointwise_can(bound, se_lower, se_upper, level)?;
    let strong = uncertainty::ur_strong_can(bound, se_lower, se_upper, level)?;
    let bootstrap = uncertainty::ur_strong_bootstrap(ens, level).ok();
    Ok(IvbRegion {
        bound: interval(bound),
        se_lower,
        se_upper,
        pointwise_normal: interval(&pointwise.interval),
        strong_normal: interval(&strong.interval),
        strong_bootstrap: bootstrap.map(|b| interval(&b.interval)).unwrap_or_default(),
        has_strong_bootstrap: bootstrap.is_some(),
        approximate: strong.approximate,
    })
}

/// Bounds with `replicates` stratified bootstrap resamples drawn from
/// `seed`, and the uncertainty regions at coverage `level`. Results are
/// identical for identical inputs.
///
/// # Safety
/// `dataset` must be a live handle, `params` NULL or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_bootstrap_ur(
    dataset: *const IvbDataset,
    assumption: c_int,
    params: *const IvbParams,
    replicates: usize,
    seed: u64,
    level: f64,
    out: *mut IvbUncertainty,
) -> IvbStatus {
    guard(|| {
        let ds = unsafe { borrow_dataset(dataset)? };
        let assumption = assumption_from(assumption)?;
        let params = unsafe { params_from(params) };
        if !(level > 0.0 && level < 1.0) {
            return Err(failure(IvbStatus::InvalidArgument, format!("level must lie in (0, 1), got {level}")));
        }
        let bp = BoundContext::fit(ds, assumption.needs_covariate_models())?.bounds(assumption, &params)?;
        let ens = uncertainty::bootstrap_bounds(ds, assumption, &params, replicates, seed)?;
        let value = IvbUncertainty {
            ate: region(&bp.ate_bound, &ens.ate(), level)?,
            tau: region(&bp.tau_bound, &ens.tau(), level)?,
            failures: ens.failures,
        };
        unsafe { write(out, value, "out") }
    })
}

/// Message for the most recent failed call on this thread, or an empty
/// string after a successful one. The pointer stays valid until the next
/// library call on the same thread.
#[no_mangle]
pub extern "C" fn ivb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ivb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_status_classes() {
        let cases = [
            (Error::InvalidParameter("x".into()), IvbStatus::InvalidArgument),
            (Error::EmptyInstrumentCell { arm: 0 }, IvbStatus::DataError),
            (Error::SeparationDetected, IvbStatus::NumericalError),
            (Error::WeakInstrument { difference: 0.0 }, IvbStatus::IdentificationError),
            (Error::TooManyFailures { failures: 9, replicates: 10 }, IvbStatus::BootstrapError),
            (Error::Io(std::io::Error::other("x")), IvbStatus::IoError),
        ];
        for (e, status) in cases {
            assert_eq!(Failure::from(e).status, status);
        }
    }

    #[test]
    fn panics_are_caught() {
        assert_eq!(guard(|| panic!("boom")), IvbStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ivb_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
    }

    #[test]
    fn unknown_assumption_code() {
        assert!(assumption_from(3).is_err());
        assert_eq!(assumption_from(2).ok(), Some(Assumption::Bprime));
    }
}
