//! C ABI over the `mvsde` core.
//!
//! Every entry point returns an [`MvsdeStatus`]. On failure the message is
//! kept per thread and read with [`mvsde_last_error`]. Models are opaque
//! handles created from a preset JSON object and released with
//! [`mvsde_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mvsde::analysis::{as_rate_equation, bem_rate_equation, ms_rate_equation};
use mvsde::measure::w2_atoms;
use mvsde::model::{ModelSpec, Preset};
use mvsde::scheme::{simulate_paths, SchemeConfig};
use mvsde::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvsdeStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Config = 3,
    ImplicitSolve = 4,
    Diverged = 5,
    MissingConstants = 6,
    Infeasible = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct MvsdeModel {
    spec: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MvsdeStatus, msg: impl Into<String>) -> MvsdeStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> MvsdeStatus {
    match err {
        Error::InvalidArgument(_) => MvsdeStatus::InvalidArgument,
        Error::DivergedCloud => MvsdeStatus::Diverged,
        Error::ImplicitSolveFailure { .. } => MvsdeStatus::ImplicitSolve,
        Error::MissingConstants { .. } => MvsdeStatus::MissingConstants,
        Error::Infeasible(_) => MvsdeStatus::Infeasible,
        Error::Config(_) => MvsdeStatus::Config,
        Error::Io(_) => MvsdeStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MvsdeStatus>) -> MvsdeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvsdeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(MvsdeStatus::Panic, "panic inside mvsde"),
    }
}

fn core<T>(r: mvsde::Result<T>) -> Result<T, MvsdeStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, MvsdeStatus> {
    if s.is_null() {
        return Err(fail(MvsdeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(MvsdeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), MvsdeStatus> {
    if p.is_null() {
        Err(fail(MvsdeStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mvsde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a model from a preset object such as `{"name": "opinion"}`.
///
/// # Safety
/// `preset_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_model_new(preset_json: *const c_char, out: *mut *mut MvsdeModel) -> MvsdeStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let json = text(preset_json, "preset_json")?;
        let preset: Preset =
            serde_json::from_str(json).map_err(|e| fail(MvsdeStatus::Config, format!("preset: {e}")))?;
        let spec = core(preset.build())?;
        *out = Box::into_raw(Box::new(MvsdeModel { spec }));
        Ok(())
    })
}

/// Releases a handle from [`mvsde_model_new`]; null is ignored.
///
/// # Safety
/// `model` must come from [`mvsde_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mvsde_model_free(model: *mut MvsdeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension of the model.
///
/// # Safety
/// `model` must be a live handle; `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_model_dimension(model: *const MvsdeModel, d: *mut usize) -> MvsdeStatus {
    guard(|| {
        out_ptr(d, "d")?;
        let m = model.as_ref().ok_or_else(|| fail(MvsdeStatus::NullPointer, "model is null"))?;
        *d = m.spec.d;
        Ok(())
    })
}

/// Mean-square decay rate of the explicit scheme at step `dt`.
///
/// # Safety
/// `theta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_ms_rate(dt: f64, a1: f64, a2: f64, b1: f64, b2: f64, theta: *mut f64) -> MvsdeStatus {
    guard(|| {
        out_ptr(theta, "theta")?;
        *theta = core(ms_rate_equation(dt, a1, a2, b1, b2))?.theta_star;
        Ok(())
    })
}

/// Almost-sure decay rate of the explicit scheme at step `dt`.
///
/// # Safety
/// `xi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_as_rate(dt: f64, b1: f64, b2: f64, c1: f64, c2: f64, xi: *mut f64) -> MvsdeStatus {
    guard(|| {
        out_ptr(xi, "xi")?;
        *xi = core(as_rate_equation(dt, b1, b2, c1, c2))?.xi_star;
        Ok(())
    })
}

/// Mean-square decay rate of the backward scheme at step `dt`.
///
/// # Safety
/// `beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_bem_rate(dt: f64, ct1: f64, ct2: f64, h1: f64, h2: f64, beta: *mut f64) -> MvsdeStatus {
    guard(|| {
        out_ptr(beta, "beta")?;
        *beta = core(bem_rate_equation(dt, ct1, ct2, h1, h2))?.beta_star;
        Ok(())
    })
}

/// Wasserstein-2 distance between two clouds of `n` atoms in dimension `d`,
/// stored row-major.
///
/// # Safety
/// `a` and `b` must each point to `n * d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvsde_w2(a: *const f64, b: *const f64, n: usize, d: usize, out: *mut f64) -> MvsdeStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if a.is_null() || b.is_null() {
            return Err(fail(MvsdeStatus::NullPointer, "atom array is null"));
        }
        if n == 0 || d == 0 {
            return Err(fail(MvsdeStatus::InvalidArgument, "need n >= 1 and d >= 1"));
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| fail(MvsdeStatus::InvalidArgument, "n * d overflows"))?;
        let (a, b) = (std::slice::from_raw_parts(a, len), std::slice::from_raw_parts(b, len));
        *out = w2_atoms(a, b, d);
        Ok(())
    })
}

/// Simulates `scheme_json` (a scheme object, e.g. `{"dt": 0.01, "steps": 300,
/// "n": 1000, "paths": 10, "seed": 1}`) and writes the path-averaged
/// mean-square series into `out`. `written` receives the series length,
/// which is `steps + 1` unless a path diverged; `diverged` is set to 0 or 1.
/// With a too small buffer nothing is written except `written`, and the
/// call returns `BufferTooSmall`.
///
/// # Safety
/// `out` must point to `capacity` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mvsde_simulate_mean_square(
    model: *const MvsdeModel,
    scheme_json: *const c_char,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
    diverged: *mut i32,
) -> MvsdeStatus {
    guard(|| {
        out_ptr(written, "written")?;
        out_ptr(diverged, "diverged")?;
        let m = model.as_ref().ok_or_else(|| fail(MvsdeStatus::NullPointer, "model is null"))?;
        let json = text(scheme_json, "scheme_json")?;
        let cfg: SchemeConfig =
            serde_json::from_str(json).map_err(|e| fail(MvsdeStatus::Config, format!("scheme: {e}")))?;
        let ens = core(simulate_paths(&m.spec, &cfg))?;
        let series: Vec<f64> = ens.averaged().iter().map(|r| r.mean_square).collect();
        *written = series.len();
        *diverged = i32::from(ens.any_diverged());
        if series.len() > capacity {
            return Err(fail(
                MvsdeStatus::BufferTooSmall,
                format!("need {} doubles, buffer holds {capacity}", series.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(MvsdeStatus::NullPointer, "out is null"));
        }
        std::slice::from_raw_parts_mut(out, series.len()).copy_from_slice(&series);
        Ok(())
    })
}
