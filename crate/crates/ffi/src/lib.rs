//! C ABI over `roughkit`.
//!
//! Every object crosses the boundary as an opaque handle that the caller
//! releases with the matching `*_free` function. Fallible functions return an
//! [`RkStatus`] and write results through out-pointers; on failure the message
//! is available from [`rk_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use roughkit::rough::{rough_metric, MetricMode};
use roughkit::signature::signature;
use roughkit::{Error, RoughPath, SampledPath, Signature, Word};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Singular = 4,
    Divergence = 5,
    Model = 6,
    Parse = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A sampled, piecewise-linear path.
pub struct RkPath(SampledPath);

/// A truncated signature.
pub struct RkSignature(Signature);

/// A level-2 rough path.
pub struct RkRoughPath(RoughPath);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RkStatus {
    match e {
        Error::Domain(_) => RkStatus::Domain,
        Error::Argument(_) => RkStatus::InvalidArgument,
        Error::Singularity(_) => RkStatus::Singular,
        Error::Divergence { .. } => RkStatus::Divergence,
        Error::Model(_) => RkStatus::Model,
        Error::Parse { .. } | Error::Json(_) => RkStatus::Parse,
        Error::Io(_) => RkStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), (RkStatus, String)>) -> RkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RkStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RkStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RkStatus, String) {
    (RkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RkStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (RkStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (RkStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Copies `data` into `(out, cap)` and reports the length through `written`.
unsafe fn write_buffer(data: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Result<(), (RkStatus, String)> {
    if !written.is_null() {
        written.write(data.len());
    }
    if cap < data.len() {
        return Err((RkStatus::BufferTooSmall, format!("buffer holds {cap} values, need {}", data.len())));
    }
    if !data.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    Ok(())
}

/// Message describing the most recent call on this thread; empty after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn rk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a path from `n` times and `n * dim` row-major values.
///
/// # Safety
/// `times` must point to `n` doubles, `values` to `n * dim` doubles and `out`
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rk_path_new(
    times: *const f64,
    values: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut RkPath,
) -> RkStatus {
    guard(|| {
        let total = n.checked_mul(dim).ok_or((RkStatus::InvalidArgument, "n * dim overflows".into()))?;
        let t = input_slice(times, n, "times")?.to_vec();
        let v = input_slice(values, total, "values")?.to_vec();
        let path = SampledPath::from_flat(t, v, dim).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(RkPath(path))))
    })
}

/// Releases a path. Null is ignored.
///
/// # Safety
/// `path` must come from [`rk_path_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rk_path_free(path: *mut RkPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// # Safety
/// `path` must be a live handle and `out_len`, `out_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_path_shape(path: *const RkPath, out_len: *mut usize, out_dim: *mut usize) -> RkStatus {
    guard(|| {
        let p = &borrow(path, "path")?.0;
        write_out(out_len, p.len())?;
        write_out(out_dim, p.dim())
    })
}

/// p-variation over partitions of the sample grid.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_path_p_variation(path: *const RkPath, p: f64, out: *mut f64) -> RkStatus {
    guard(|| {
        let v = borrow(path, "path")?.0.p_variation(p).map_err(lib)?;
        write_out(out, v)
    })
}

/// Hölder seminorm of exponent `alpha` over sample pairs.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_path_holder_seminorm(path: *const RkPath, alpha: f64, out: *mut f64) -> RkStatus {
    guard(|| {
        let v = borrow(path, "path")?.0.holder_seminorm(alpha).map_err(lib)?;
        write_out(out, v)
    })
}

/// Signature of the whole path truncated at `level`.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_signature_new(path: *const RkPath, level: usize, out: *mut *mut RkSignature) -> RkStatus {
    guard(|| {
        let p = &borrow(path, "path")?.0;
        let sig = signature(p, level, p.time(0), p.horizon()).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(RkSignature(sig))))
    })
}

/// Releases a signature. Null is ignored.
///
/// # Safety
/// `sig` must come from [`rk_signature_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rk_signature_free(sig: *mut RkSignature) {
    if !sig.is_null() {
        drop(Box::from_raw(sig));
    }
}

/// Coefficient of the word `letters[0..len]` (letters are `1..=dim`).
///
/// # Safety
/// `sig` must be a live handle, `letters` must point to `len` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_signature_coefficient(
    sig: *const RkSignature,
    letters: *const u16,
    len: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let s = &borrow(sig, "signature")?.0;
        let word = Word::new(input_slice(letters, len, "letters")?.to_vec()).map_err(lib)?;
        let v = s.tensor().get(&word).map_err(lib)?;
        write_out(out, v)
    })
}

/// Copies level `n` (row-major, `dim^n` values) into `out`. `written`
/// receives the required length even when the buffer is too small.
///
/// # Safety
/// `sig` must be a live handle, `out` must have room for `cap` doubles and
/// `written` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn rk_signature_level(
    sig: *const RkSignature,
    n: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RkStatus {
    guard(|| {
        let s = &borrow(sig, "signature")?.0;
        let data = s.tensor().project(n).map_err(lib)?;
        write_buffer(data, out, cap, written)
    })
}

/// Canonical level-2 lift of a path.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_rough_path_lift(path: *const RkPath, out: *mut *mut RkRoughPath) -> RkStatus {
    guard(|| {
        let rp = RoughPath::canonical_lift(&borrow(path, "path")?.0);
        write_out(out, Box::into_raw(Box::new(RkRoughPath(rp))))
    })
}

/// Releases a rough path. Null is ignored.
///
/// # Safety
/// `rp` must come from [`rk_rough_path_lift`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rk_rough_path_free(rp: *mut RkRoughPath) {
    if !rp.is_null() {
        drop(Box::from_raw(rp));
    }
}

/// Second level over `[s, t]` as a row-major `dim × dim` matrix.
///
/// # Safety
/// `rp` must be a live handle, `out` must have room for `cap` doubles and
/// `written` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn rk_rough_path_second_level(
    rp: *const RkRoughPath,
    s: f64,
    t: f64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RkStatus {
    guard(|| {
        let data = borrow(rp, "rough path")?.0.second_level(s, t).map_err(lib)?;
        write_buffer(&data, out, cap, written)
    })
}

/// Inhomogeneous p-variation (`holder == 0`) or Hölder (`holder != 0`)
/// distance between two rough paths on the same grid.
///
/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_rough_path_distance(
    a: *const RkRoughPath,
    b: *const RkRoughPath,
    p: f64,
    holder: i32,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let mode = if holder != 0 { MetricMode::Holder } else { MetricMode::PVar };
        let d = rough_metric(&borrow(a, "first rough path")?.0, &borrow(b, "second rough path")?.0, p, mode).map_err(lib)?;
        write_out(out, d)
    })
}
