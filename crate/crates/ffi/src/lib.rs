//! C interface to the `wei-norman` solver.
//!
//! Models are opaque [`WnModel`] handles created by one of the
//! `wn_model_*` constructors and released with [`wn_model_free`]. Every
//! fallible function returns a [`WnStatus`]; on failure a description is
//! available from [`wn_last_error`] on the same thread until the next call.
//! Rate functions are passed in their textual form, for example
//! `"constant:1"`, `"exp:0.1,0.2"`, `"rational"` or `"square:0,1,0.01,0.5"`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wei_norman::cli::config::{Method, ModelParams};
use wei_norman::cli::{solve_with, SolverModel};
use wei_norman::expm::DEFAULT_EXPM_TOL;
use wei_norman::{Error, RateFunction};

/// Euler step used when [`WnMethod::Euler`] is requested.
pub const WN_EULER_DT: f64 = 1e-4;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    SolverFailure = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WnMethod {
    /// Product of matrix exponentials.
    WeiNorman = 0,
    /// Adaptive Dormand-Prince integration.
    Rk45 = 1,
    /// Fixed-step Euler with step [`WN_EULER_DT`].
    Euler = 2,
    /// Closed form; not available for the pure-birth model.
    Oracle = 3,
}

/// A model with its generators assembled, ready to solve.
pub struct WnModel {
    inner: SolverModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("interior NULs removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> WnStatus {
    match e {
        Error::Config(_) | Error::RateParse { .. } | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
            WnStatus::InvalidArgument
        }
        _ => WnStatus::SolverFailure,
    }
}

/// Runs `body`, converting errors and panics into a status and a message.
fn guard(body: impl FnOnce() -> Result<(), (WnStatus, String)>) -> WnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => WnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {msg}"));
            WnStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (WnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (WnStatus, String) {
    (WnStatus::NullPointer, format!("`{what}` is NULL"))
}

/// # Safety
/// `s` must be NULL or point to a NUL-terminated string.
unsafe fn rate(s: *const c_char, what: &str) -> Result<RateFunction, (WnStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    let text = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (WnStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))?;
    text.parse().map_err(lib_err)
}

/// # Safety
/// `out` must be NULL or valid for writing one pointer.
unsafe fn build(params: ModelParams, out: *mut *mut WnModel) -> Result<(), (WnStatus, String)> {
    let inner = SolverModel::build(&params, DEFAULT_EXPM_TOL).map_err(lib_err)?;
    *out = Box::into_raw(Box::new(WnModel { inner }));
    Ok(())
}

/// Birth-death process with birth rate `b(t)` and per-capita death rate
/// `d(t)`, tracking counts 0 through `n_max - 2` plus an overflow state.
///
/// # Safety
/// `b` and `d` must be NUL-terminated strings and `out` must be valid for
/// writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn wn_model_birth_death(
    b: *const c_char,
    d: *const c_char,
    n_max: usize,
    out: *mut *mut WnModel,
) -> WnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams::BirthDeath {
            b: rate(b, "b")?,
            d: rate(d, "d")?,
            n_max,
        };
        build(params, out)
    })
}

/// Cohort of `n` individuals with force of infection `lambda(t)` and
/// recovery rate `gamma(t)`, starting fully susceptible.
///
/// # Safety
/// As for [`wn_model_birth_death`].
#[no_mangle]
pub unsafe extern "C" fn wn_model_sir_cohort(
    lambda: *const c_char,
    gamma: *const c_char,
    n: usize,
    out: *mut *mut WnModel,
) -> WnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams::SirCohort {
            lambda: rate(lambda, "lambda")?,
            gamma: rate(gamma, "gamma")?,
            n,
        };
        build(params, out)
    })
}

/// Pure birth process with immigration rate `a(t)` and per-capita birth rate
/// `b(t)`, tracking counts 0 through `m` plus an overflow state, starting
/// empty.
///
/// # Safety
/// As for [`wn_model_birth_death`].
#[no_mangle]
pub unsafe extern "C" fn wn_model_pure_birth(
    a: *const c_char,
    b: *const c_char,
    m: usize,
    out: *mut *mut WnModel,
) -> WnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams::PureBirth {
            a: rate(a, "a")?,
            b: rate(b, "b")?,
            m,
        };
        build(params, out)
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from a `wn_model_*` constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn wn_model_free(model: *mut WnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states, i.e. the length of every distribution.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn wn_model_dim(model: *const WnModel, out: *mut usize) -> WnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = model.inner.dim();
        Ok(())
    })
}

/// Distribution at time `t` by `method`, written to `out[0..len]`. `len`
/// must be at least [`wn_model_dim`]; only that many entries are written.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wn_solve(
    model: *const WnModel,
    method: WnMethod,
    t: f64,
    out: *mut f64,
    len: usize,
) -> WnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dim = model.inner.dim();
        if len < dim {
            return Err((
                WnStatus::BufferTooSmall,
                format!("buffer holds {len} values but the model has {dim} states"),
            ));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err((WnStatus::InvalidArgument, format!("time must be finite and nonnegative, got {t}")));
        }
        let method = match method {
            WnMethod::WeiNorman => Method::WeiNorman,
            WnMethod::Rk45 => Method::Rk45,
            WnMethod::Euler => Method::Euler,
            WnMethod::Oracle if model.inner.has_oracle() => Method::Oracle,
            WnMethod::Oracle => {
                return Err((
                    WnStatus::InvalidArgument,
                    format!("no closed form for the {} model", model.inner.kind()),
                ))
            }
        };
        let p = solve_with(&model.inner, method, &[t], WN_EULER_DT)
            .map_err(lib_err)?
            .pop()
            .expect("one distribution per time");
        ptr::copy_nonoverlapping(p.as_ptr(), out, dim);
        Ok(())
    })
}

/// Checks the model's algebraic identities; `*passed` is 1 when all hold.
///
/// # Safety
/// `model` must be a live handle and `passed` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn wn_verify(model: *const WnModel, passed: *mut bool) -> WnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if passed.is_null() {
            return Err(null("passed"));
        }
        let report = model.inner.verify().map_err(lib_err)?;
        *passed = report.passed();
        if let Some(check) = report.first_failure() {
            set_error(format!("identity failed: {} (residual {:e})", check.name, check.residual));
        }
        Ok(())
    })
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next `wn_*` call on the same thread.
#[no_mangle]
pub extern "C" fn wn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
