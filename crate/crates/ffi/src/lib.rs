//! C ABI for the `emastate` toolkit.
//!
//! Objects are opaque handles created by `ema_*_new`/`ema_*_from_*` style
//! functions and released with the matching `ema_*_free`. Every fallible call
//! returns an [`EmaStatus`]; on failure the thread's last error code (such as
//! `"SINGULAR_INNOVATION"`) and message can be read back. Strings returned to
//! the caller must be released with [`ema_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use emastate::error::{Error, ErrorKind};
use emastate::estimate::{self, FitMode, FitOptions, Template};
use emastate::filter::{self, FilterResult};
use emastate::model::{self, ModelSpec};
use emastate::simulate::{run_scenario, Scenario};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmaStatus {
    Ok = 0,
    Validation = 2,
    Numerical = 3,
    Io = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// A model specification.
pub struct EmaModel(ModelSpec);

/// A dataset of one or more participants.
pub struct EmaData(emastate::EmaDataset);

/// Filtered moments for one participant.
pub struct EmaFilter(FilterResult);

struct LastError {
    code: CString,
    message: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn set_error(code: &str, message: &str) {
    let clean = |s: &str| CString::new(s.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(LastError { code: clean(code), message: clean(message) }));
}

fn fail(err: Error) -> EmaStatus {
    set_error(err.code(), &err.to_string());
    match err.kind() {
        ErrorKind::Validation => EmaStatus::Validation,
        ErrorKind::Numerical => EmaStatus::Numerical,
        ErrorKind::Io => EmaStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> EmaStatus) -> EmaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("PANIC", "internal panic");
            EmaStatus::Panic
        }
    }
}

fn null() -> EmaStatus {
    set_error("NULL_POINTER", "required pointer argument was null");
    EmaStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char) -> std::result::Result<&'a str, EmaStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("INVALID_UTF8", "string argument is not valid UTF-8");
        EmaStatus::InvalidUtf8
    })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> EmaStatus {
    *out = Box::into_raw(Box::new(value));
    EmaStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> EmaStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            EmaStatus::Ok
        }
        Err(_) => fail(Error::InvalidInput("output contains a nul byte".into())),
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! try_ema {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(err),
        }
    };
}

macro_rules! non_null {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            return null();
        }
    };
}

/// Code of the last error on this thread (e.g. `"NO_PRINCIPAL_LOG"`), or
/// null if the last call succeeded. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ema_last_error_code() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |l| l.code.as_ptr()))
}

/// Human-readable message for the last error on this thread, or null.
#[no_mangle]
pub extern "C" fn ema_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |l| l.message.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ema_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_model_from_json(json: *const c_char, out: *mut *mut EmaModel) -> EmaStatus {
    guard(|| {
        non_null!(out);
        let text = try_arg!(str_arg(json));
        put(out, EmaModel(try_ema!(ModelSpec::from_json(text))))
    })
}

/// Serializes a model to JSON.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_model_to_json(model: *const EmaModel, out: *mut *mut c_char) -> EmaStatus {
    guard(|| {
        non_null!(model, out);
        put_string(out, (*model).0.to_json())
    })
}

/// Validation report as JSON (`{"errors": [...], "warnings": [...]}`);
/// returns `Validation` when the report holds errors.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_model_validate(model: *const EmaModel, out: *mut *mut c_char) -> EmaStatus {
    guard(|| {
        non_null!(model, out);
        let report = model::validate_model(&(*model).0);
        let status = put_string(out, serde_json::to_string(&report).expect("report serializes"));
        if status != EmaStatus::Ok {
            return status;
        }
        match report.into_result() {
            Ok(()) => EmaStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Exact discretization of a continuous-time model over `dt`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_model_discretize(model: *const EmaModel, dt: f64, out: *mut *mut EmaModel) -> EmaStatus {
    guard(|| {
        non_null!(model, out);
        put(out, EmaModel(try_ema!(model::discretize(&(*model).0, dt))))
    })
}

/// Continuous-time equivalent of a discrete model sampled every `dt`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_model_to_continuous(model: *const EmaModel, dt: f64, out: *mut *mut EmaModel) -> EmaStatus {
    guard(|| {
        non_null!(model, out);
        put(out, EmaModel(try_ema!(model::to_continuous(&(*model).0, dt))))
    })
}

/// Copies the row-major `A` matrix into `buf` (`n_states²` doubles).
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ema_model_get_a(model: *const EmaModel, buf: *mut f64, len: usize) -> EmaStatus {
    guard(|| {
        non_null!(model, buf);
        let a = &(*model).0.a;
        if len < a.len() {
            return fail(Error::InvalidInput(format!("buffer holds {len} values, need {}", a.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, a.len());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[i * a.ncols() + j] = a[(i, j)];
            }
        }
        EmaStatus::Ok
    })
}

/// Number of latent states, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ema_model_n_states(model: *const EmaModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).0.n_states
    }
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ema_model_free(model: *mut EmaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates a dataset from a model and a scenario given as JSON.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_simulate(
    model: *const EmaModel,
    scenario_json: *const c_char,
    seed: u64,
    out: *mut *mut EmaData,
) -> EmaStatus {
    guard(|| {
        non_null!(model, out);
        let scenario = try_ema!(Scenario::from_json(try_arg!(str_arg(scenario_json))));
        put(out, EmaData(try_ema!(run_scenario(&(*model).0, &scenario, seed))))
    })
}

/// Reads a dataset file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_dataset_read(path: *const c_char, out: *mut *mut EmaData) -> EmaStatus {
    guard(|| {
        non_null!(out);
        let p = try_arg!(str_arg(path));
        put(out, EmaData(try_ema!(emastate::io::read_dataset(Path::new(p)))))
    })
}

/// Writes a dataset file.
///
/// # Safety
/// `data` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ema_dataset_write(data: *const EmaData, path: *const c_char) -> EmaStatus {
    guard(|| {
        non_null!(data);
        let p = try_arg!(str_arg(path));
        try_ema!(emastate::io::write_dataset(&(*data).0, Path::new(p)));
        EmaStatus::Ok
    })
}

/// Number of participants, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ema_dataset_n_participants(data: *const EmaData) -> usize {
    if data.is_null() {
        0
    } else {
        (*data).0.participants.len()
    }
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ema_dataset_free(data: *mut EmaData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Kalman filter (discrete or continuous time, chosen by the model) for one
/// participant.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_kalman_filter(
    model: *const EmaModel,
    data: *const EmaData,
    participant: usize,
    out: *mut *mut EmaFilter,
) -> EmaStatus {
    guard(|| {
        non_null!(model, data, out);
        let p = try_arg!(participant_ref(&(*data).0, participant));
        put(out, EmaFilter(try_ema!(filter::run_filter(&(*model).0, p, filter::FilterMethod::Kalman))))
    })
}

/// Bootstrap particle filter for one participant.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_particle_filter(
    model: *const EmaModel,
    data: *const EmaData,
    participant: usize,
    n_particles: usize,
    seed: u64,
    out: *mut *mut EmaFilter,
) -> EmaStatus {
    guard(|| {
        non_null!(model, data, out);
        let p = try_arg!(participant_ref(&(*data).0, participant));
        put(out, EmaFilter(try_ema!(filter::particle_filter(&(*model).0, p, n_particles, seed))))
    })
}

fn participant_ref(data: &emastate::EmaDataset, i: usize) -> std::result::Result<&emastate::Participant, EmaStatus> {
    data.participants
        .get(i)
        .ok_or_else(|| fail(Error::InvalidInput(format!("participant index {i} out of range"))))
}

/// Total log-likelihood (NaN for a null handle).
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ema_filter_log_likelihood(f: *const EmaFilter) -> f64 {
    if f.is_null() {
        f64::NAN
    } else {
        (*f).0.log_likelihood
    }
}

/// Number of pings (0 for a null handle).
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ema_filter_len(f: *const EmaFilter) -> usize {
    if f.is_null() {
        0
    } else {
        (*f).0.len()
    }
}

/// Copies the filtered state mean at ping `t` into `buf`.
///
/// # Safety
/// `f` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ema_filter_mean(f: *const EmaFilter, t: usize, buf: *mut f64, len: usize) -> EmaStatus {
    guard(|| {
        non_null!(f, buf);
        let Some(m) = (&(*f).0.filtered_mean).get(t) else {
            return fail(Error::InvalidInput(format!("ping {t} out of range")));
        };
        if len < m.len() {
            return fail(Error::InvalidInput(format!("buffer holds {len} values, need {}", m.len())));
        }
        std::slice::from_raw_parts_mut(buf, m.len()).copy_from_slice(m.as_slice());
        EmaStatus::Ok
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ema_filter_free(f: *mut EmaFilter) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Kalman-likelihood fit of a template (JSON) to a dataset; writes the fit
/// results as a JSON array. `pooled` selects pooled (non-zero) or
/// idiographic (zero) mode.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_fit(
    template_json: *const c_char,
    data: *const EmaData,
    pooled: i32,
    n_restarts: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> EmaStatus {
    guard(|| {
        non_null!(data, out);
        let template = try_ema!(Template::from_json(try_arg!(str_arg(template_json))));
        let mode = if pooled != 0 { FitMode::Pooled } else { FitMode::Idiographic };
        let opts = FitOptions { n_restarts, seed, ..FitOptions::default() };
        let results = try_ema!(estimate::fit(&template, &(*data).0, mode, &opts));
        put_string(out, serde_json::to_string_pretty(&results).expect("fit serializes"))
    })
}

/// AIC and BIC for a log-likelihood.
///
/// # Safety
/// `aic` and `bic` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ema_information_criteria(
    log_likelihood: f64,
    k: usize,
    n_obs_used: usize,
    aic: *mut f64,
    bic: *mut f64,
) -> EmaStatus {
    guard(|| {
        non_null!(aic, bic);
        if n_obs_used == 0 {
            return fail(Error::InvalidInput("n_obs_used must be at least 1".into()));
        }
        let (a, b) = estimate::information_criteria(log_likelihood, k, n_obs_used);
        *aic = a;
        *bic = b;
        EmaStatus::Ok
    })
}
