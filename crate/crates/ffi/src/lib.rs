//! C ABI over the gravimetric library.
//!
//! Handles are opaque pointers released with their `*_free` function. Every
//! fallible call returns a [`GmStatus`]; on failure the message is available
//! from [`gm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gravimetric::datamodel::Sector;
use gravimetric::design::{build_design, ModelSpec};
use gravimetric::glm::{fit_with_status, Estimator, EstimatorOptions, FitResult, FitStatus};
use gravimetric::ingest::{AggregationLevel, Bundle, SectorFilter, DEFAULT_RELIGION_FLOOR};
use gravimetric::report::fit_json;
use gravimetric::{cli, scenario, GravityError};

/// Outcome of a call; values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    /// Bad arguments, unreadable or invalid input data.
    Input = 2,
    /// The fit hit its iteration cap; the handle is still filled in.
    Convergence = 3,
    /// Rank deficiency, non-positive-definite Hessian and similar; a fit
    /// handle is still filled in when coefficients exist.
    Numerical = 4,
    Internal = 5,
}

impl GmStatus {
    fn from_code(code: i32) -> Self {
        match code {
            0 => GmStatus::Ok,
            2 => GmStatus::Input,
            3 => GmStatus::Convergence,
            4 => GmStatus::Numerical,
            _ => GmStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(err: GravityError) -> GmStatus {
    let status = GmStatus::from_code(err.exit_code());
    set_error(err.to_string());
    status
}

fn guard<F: FnOnce() -> GmStatus>(f: F) -> GmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            GmStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, GmStatus> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| {
        set_error("argument is not valid UTF-8");
        GmStatus::Input
    })
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, GmStatus> {
    opt_str(p)?.ok_or_else(|| {
        set_error(format!("{what} is null"));
        GmStatus::Input
    })
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread; empty when none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loaded input bundle.
pub struct GmDataset {
    bundle: Bundle,
}

/// Estimated model.
pub struct GmFit {
    fit: FitResult,
    status: FitStatus,
    sector: Sector,
    names: Vec<CString>,
}

/// Loads `flows.csv`, `attrs.csv` and any optional inputs from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_load(dir: *const c_char, out: *mut *mut GmDataset) -> GmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GmStatus::Input;
        }
        *out = ptr::null_mut();
        let dir = try_status!(req_str(dir, "dir"));
        let args = cli::InputArgs {
            data: Some(PathBuf::from(dir)),
            flows: None,
            attrs: None,
            bilateral: None,
            tariffs: None,
            sectors: None,
            distances: None,
            remoteness: None,
            religion_floor: DEFAULT_RELIGION_FLOOR,
        };
        let bundle = match args.resolve().and_then(|p| cli::load_bundle(&p)) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(GmDataset { bundle }));
        GmStatus::Ok
    })
}

/// # Safety
/// `ds` must come from [`gm_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_free(ds: *mut GmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Computes `exporter`'s remoteness series from the bilateral and distance
/// inputs when the dataset has no remoteness file. A no-op otherwise.
///
/// # Safety
/// `ds` must be a live handle and `exporter` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_compute_remoteness(ds: *mut GmDataset, exporter: *const c_char) -> GmStatus {
    guard(|| {
        let Some(ds) = ds.as_mut() else {
            set_error("dataset is null");
            return GmStatus::Input;
        };
        let exporter = try_status!(req_str(exporter, "exporter"));
        let spec = ModelSpec::remoteness();
        match cli::ensure_remoteness(&mut ds.bundle, &spec, exporter) {
            Ok(()) => GmStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of trade-flow records, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_dataset_n_flows(ds: *const GmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.bundle.flows.len())
}

/// Fits one model.
///
/// `estimator` is `ols`, `ppml` or `nbpml`. `spec_json` is a model spec in
/// JSON, or null for the basic model. `sector` is a sector name, or null for
/// the pooled fit. On `GM_STATUS_CONVERGENCE` and on a non-positive-definite
/// Hessian (`GM_STATUS_NUMERICAL`) `*out` is still set and must be freed.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `ds` must
/// be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_fit(
    ds: *const GmDataset,
    estimator: *const c_char,
    spec_json: *const c_char,
    sector: *const c_char,
    out: *mut *mut GmFit,
) -> GmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GmStatus::Input;
        }
        *out = ptr::null_mut();
        let Some(ds) = ds.as_ref() else {
            set_error("dataset is null");
            return GmStatus::Input;
        };
        let est: Estimator = match try_status!(req_str(estimator, "estimator")).parse() {
            Ok(e) => e,
            Err(m) => return fail(GravityError::InvalidSpec(m)),
        };
        let spec = match try_status!(opt_str(spec_json)) {
            Some(text) => match ModelSpec::from_json(text) {
                Ok(s) => s,
                Err(e) => return fail(e),
            },
            None => ModelSpec::basic(),
        }
        .with_response(est.response_scale());
        let sector = match try_status!(opt_str(sector)) {
            Some(name) => match name.parse::<Sector>() {
                Ok(s) => s,
                Err(m) => return fail(GravityError::InvalidSpec(m)),
            },
            None => Sector::AllSectors,
        };
        let result = ds
            .bundle
            .dataset(SectorFilter::from(sector), AggregationLevel::YearCountry, DEFAULT_RELIGION_FLOOR)
            .and_then(|(data, _)| build_design(&data, &spec))
            .and_then(|d| fit_with_status(est, &d, &EstimatorOptions::default()));
        let (fit, status) = match result {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let names = fit
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).unwrap_or_default())
            .collect();
        let code = GmStatus::from_code(status.exit_code());
        if code != GmStatus::Ok {
            set_error(format!("fit finished with status {status:?}"));
        }
        *out = Box::into_raw(Box::new(GmFit {
            fit,
            status,
            sector,
            names,
        }));
        code
    })
}

/// # Safety
/// `fit` must come from [`gm_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_free(fit: *mut GmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_n_coefficients(fit: *const GmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.coefficients.len())
}

/// Column name of coefficient `i`, owned by the handle; null when out of range.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_coefficient_name(fit: *const GmFit, i: usize) -> *const c_char {
    fit.as_ref()
        .and_then(|f| f.names.get(i))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// # Safety
/// `fit` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_coefficient(fit: *const GmFit, i: usize, value: *mut f64) -> GmStatus {
    let (Some(f), false) = (fit.as_ref(), value.is_null()) else {
        set_error("null argument");
        return GmStatus::Input;
    };
    match f.fit.coefficients.get(i) {
        Some(v) => {
            *value = *v;
            GmStatus::Ok
        }
        None => {
            set_error(format!("coefficient index {i} out of range"));
            GmStatus::Input
        }
    }
}

/// Cluster-robust standard error of coefficient `i`; `GM_STATUS_NUMERICAL`
/// when the covariance was withheld.
///
/// # Safety
/// `fit` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_robust_se(fit: *const GmFit, i: usize, value: *mut f64) -> GmStatus {
    let (Some(f), false) = (fit.as_ref(), value.is_null()) else {
        set_error("null argument");
        return GmStatus::Input;
    };
    if i >= f.fit.coefficients.len() {
        set_error(format!("coefficient index {i} out of range"));
        return GmStatus::Input;
    }
    match f.fit.robust_se() {
        Some(se) => {
            *value = se[i];
            GmStatus::Ok
        }
        None => {
            set_error("robust covariance not available for this fit");
            GmStatus::Numerical
        }
    }
}

/// Log-likelihood, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_loglik(fit: *const GmFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.fit.loglik)
}

/// JSON summary of the fit; release with [`gm_string_free`]. Null on failure.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_fit_to_json(fit: *const GmFit) -> *mut c_char {
    let Some(f) = fit.as_ref() else {
        set_error("fit is null");
        return ptr::null_mut();
    };
    match fit_json(&f.fit, f.sector, f.status) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `(exp(beta) - 1) * 100`.
#[no_mangle]
pub extern "C" fn gm_percent_effect(beta: f64) -> f64 {
    gravimetric::glm::percent_effect(beta)
}

/// `(exp(beta_scenario - beta_soft) - 1) * 100`.
#[no_mangle]
pub extern "C" fn gm_indicator_relative_impact(beta_scenario: f64, beta_soft: f64) -> f64 {
    scenario::indicator_relative_impact(beta_scenario, beta_soft)
}

/// `(beta_scenario - beta_soft) / beta_soft * 100`; fails when `beta_soft` is 0.
///
/// # Safety
/// `value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_continuous_relative_impact(
    beta_scenario: f64,
    beta_soft: f64,
    value: *mut f64,
) -> GmStatus {
    if value.is_null() {
        set_error("value is null");
        return GmStatus::Input;
    }
    match scenario::continuous_relative_impact(beta_scenario, beta_soft) {
        Ok(v) => {
            *value = v;
            GmStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// `(exp(delta - 2 se) - 1) * 100`.
#[no_mangle]
pub extern "C" fn gm_worst_case_two_se(delta: f64, se: f64) -> f64 {
    scenario::worst_case_two_se(delta, se)
}

/// GNI* less the export loss against the soft scenario, and its percent change.
///
/// # Safety
/// `adjusted` and `percent_change` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gm_gni_adjustment(
    gni_star: f64,
    soft_total: f64,
    scenario_total: f64,
    adjusted: *mut f64,
    percent_change: *mut f64,
) -> GmStatus {
    if adjusted.is_null() || percent_change.is_null() {
        set_error("null output pointer");
        return GmStatus::Input;
    }
    let g = scenario::gni_adjustment(gni_star, soft_total, scenario_total);
    *adjusted = g.adjusted;
    *percent_change = g.percent_change;
    GmStatus::Ok
}
