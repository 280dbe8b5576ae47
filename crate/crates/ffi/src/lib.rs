//! C interface over the core toolkit. Handles are opaque pointers owned by
//! the library; every entry point returns a status code and records a
//! message for the calling thread on failure. No call unwinds across the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ntfkit::decomp::{fit_restarts, CpModel, FitConfig};
use ntfkit::diagnostics::corcondia;
use ntfkit::tensor::Tensor3;
use ntfkit::Error;

/// Result of every call. Matches the exit codes of the command line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtfStatus {
    Ok = 0,
    /// Arguments violate a documented requirement.
    InvalidArgument = 2,
    /// Input data is malformed, inconsistent, or unreadable.
    Data = 3,
    /// A computation lost numerical validity.
    Numerical = 4,
}

/// Dense non-negative third-order tensor.
pub struct NtfTensor(Tensor3);

/// Fitted rank decomposition.
pub struct NtfModel(CpModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes removed");
    });
}

fn status_of(err: &Error) -> NtfStatus {
    match err.exit_code() {
        2 => NtfStatus::InvalidArgument,
        4 => NtfStatus::Numerical,
        _ => NtfStatus::Data,
    }
}

fn fail(err: Error) -> NtfStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn invalid(msg: &str) -> NtfStatus {
    set_error(msg);
    NtfStatus::InvalidArgument
}

/// Runs `body` guarding against panics, which are reported as `Numerical`.
fn guarded(body: impl FnOnce() -> NtfStatus) -> NtfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            NtfStatus::Numerical
        }
    }
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, NtfStatus> {
    if ptr.is_null() {
        return Err(invalid("path is null"));
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(invalid("path is not valid UTF-8")),
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn ntf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a fully observed tensor from a dense buffer of `i*j*k` values in
/// storage order: index `[a][b][c]` lives at `a + i*(b + j*c)`.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be a valid
/// destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ntf_tensor_new(
    i: usize,
    j: usize,
    k: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut NtfTensor,
) -> NtfStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        if values.is_null() {
            return invalid("values is null");
        }
        if len != i * j * k {
            return invalid("len must equal i*j*k");
        }
        let data = unsafe { std::slice::from_raw_parts(values, len) }.to_vec();
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return fail(Error::data(format!(
                "tensor entries must be finite and non-negative, found {v}"
            )));
        }
        match Tensor3::from_values((i, j, k), data) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(NtfTensor(t))) };
                NtfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reads a tensor file produced by the toolkit. Missing cells are rejected;
/// impute before export if the data has gaps.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid destination
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ntf_tensor_read(
    path: *const c_char,
    out: *mut *mut NtfTensor,
) -> NtfStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out is null");
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ntfkit::io::read_tensor(path) {
            Ok(t) => {
                if t.n_missing() > 0 {
                    return fail(Error::data(
                        "tensor has missing cells; impute before loading through the C interface"
                            .to_string(),
                    ));
                }
                unsafe { *out = Box::into_raw(Box::new(NtfTensor(t))) };
                NtfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the three dimensions of `tensor` to `i`, `j`, `k`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntf_tensor_dims(
    tensor: *const NtfTensor,
    i: *mut usize,
    j: *mut usize,
    k: *mut usize,
) -> NtfStatus {
    guarded(|| {
        if tensor.is_null() || i.is_null() || j.is_null() || k.is_null() {
            return invalid("null argument");
        }
        let dims = unsafe { &(*tensor).0 }.dims();
        unsafe {
            *i = dims.0;
            *j = dims.1;
            *k = dims.2;
        }
        NtfStatus::Ok
    })
}

/// Releases a tensor. Passing null is a no-op.
///
/// # Safety
/// `tensor` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn ntf_tensor_free(tensor: *mut NtfTensor) {
    if !tensor.is_null() {
        drop(unsafe { Box::from_raw(tensor) });
    }
}

/// Fits a rank-`rank` non-negative decomposition with `restarts` seeded
/// restarts and stores the winner. `tol` bounds the relative-error change
/// per sweep; `relative_error` may be null if the caller does not want it.
///
/// # Safety
/// `tensor` must be a live handle; `out` must be a valid destination for one
/// pointer; `relative_error`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn ntf_fit(
    tensor: *const NtfTensor,
    rank: usize,
    seed: u64,
    restarts: usize,
    max_sweeps: usize,
    tol: f64,
    out: *mut *mut NtfModel,
    relative_error: *mut f64,
) -> NtfStatus {
    guarded(|| {
        if tensor.is_null() || out.is_null() {
            return invalid("null argument");
        }
        let mut cfg = FitConfig::new(rank, seed);
        cfg.n_restarts = restarts;
        cfg.max_sweeps = max_sweeps;
        cfg.tol = tol;
        match fit_restarts(unsafe { &(*tensor).0 }, &cfg) {
            Ok((model, trace, _)) => {
                if !relative_error.is_null() {
                    unsafe { *relative_error = trace.final_relative_error() };
                }
                unsafe { *out = Box::into_raw(Box::new(NtfModel(model))) };
                NtfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of components in the model.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntf_model_rank(model: *const NtfModel, out: *mut usize) -> NtfStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null argument");
        }
        unsafe { *out = (*model).0.rank() };
        NtfStatus::Ok
    })
}

/// Copies the component weights into `buf`, which holds `len` doubles; `len`
/// must equal the rank.
///
/// # Safety
/// `model` must be live; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ntf_model_lambda(
    model: *const NtfModel,
    buf: *mut f64,
    len: usize,
) -> NtfStatus {
    guarded(|| {
        if model.is_null() || buf.is_null() {
            return invalid("null argument");
        }
        let lambda = unsafe { &(*model).0 }.lambda();
        if len != lambda.len() {
            return invalid("len must equal the model rank");
        }
        unsafe { std::ptr::copy_nonoverlapping(lambda.as_ptr(), buf, len) };
        NtfStatus::Ok
    })
}

/// Copies factor matrix `mode` (1, 2 or 3) into `buf` row-major: entry
/// `(row, component)` lands at `row * rank + component`. `len` must equal
/// `dim * rank` for that mode.
///
/// # Safety
/// `model` must be live; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ntf_model_factor(
    model: *const NtfModel,
    mode: usize,
    buf: *mut f64,
    len: usize,
) -> NtfStatus {
    guarded(|| {
        if model.is_null() || buf.is_null() {
            return invalid("null argument");
        }
        let model = unsafe { &(*model).0 };
        let factor = match model.factor(mode) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        if len != factor.rows() * factor.cols() {
            return invalid("len must equal rows * rank for the requested mode");
        }
        unsafe { std::ptr::copy_nonoverlapping(factor.data().as_ptr(), buf, len) };
        NtfStatus::Ok
    })
}

/// Core consistency of `model` against `tensor`, in (-inf, 100].
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ntf_corcondia(
    tensor: *const NtfTensor,
    model: *const NtfModel,
    out: *mut f64,
) -> NtfStatus {
    guarded(|| {
        if tensor.is_null() || model.is_null() || out.is_null() {
            return invalid("null argument");
        }
        match corcondia(unsafe { &(*tensor).0 }, unsafe { &(*model).0 }) {
            Ok(cc) => {
                unsafe { *out = cc };
                NtfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model. Passing null is a no-op.
///
/// # Safety
/// `model` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn ntf_model_free(model: *mut NtfModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
