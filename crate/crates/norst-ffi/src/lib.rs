//! C ABI for the streaming tracker: opaque handles, status codes, and a
//! thread-local last-error message. The header is generated by cbindgen
//! into `include/norst.h`.
//!
//! Matrix arguments are column-major `f64` buffers. A tracker handle is
//! single-threaded; distinct handles are independent.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};

use norst::geometry::Basis;
use norst::init::init_random_orthogonal;
use norst::tracker::{suggest_params, Tracker, TrackerParams};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NorstStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NumericalError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Tracker knobs, mirroring the Rust parameter struct.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NorstParams {
    pub r: usize,
    pub k_steps: usize,
    pub alpha: usize,
    pub omega_supp: f64,
    pub xi: f64,
    pub lambda_thresh: f64,
    pub adaptive_thresholds: bool,
}

impl From<NorstParams> for TrackerParams {
    fn from(p: NorstParams) -> Self {
        TrackerParams {
            r: p.r,
            k_steps: p.k_steps,
            alpha: p.alpha,
            omega_supp: p.omega_supp,
            xi: p.xi,
            lambda_thresh: p.lambda_thresh,
            adaptive_thresholds: p.adaptive_thresholds,
        }
    }
}

/// Opaque tracker handle.
pub struct NorstTracker {
    inner: Tracker,
    last_support: Vec<usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into()).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &norst::NorstError) -> NorstStatus {
    use norst::NorstError as E;
    set_error(err.to_string());
    match err {
        E::DimensionMismatch { .. } => NorstStatus::DimensionMismatch,
        E::InvalidParameter { .. } | E::Config(_) => NorstStatus::InvalidArgument,
        _ => NorstStatus::NumericalError,
    }
}

fn guarded(f: impl FnOnce() -> NorstStatus) -> NorstStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            NorstStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread, or NULL when no
/// failure has occurred. The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn norst_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |c| c.as_ptr())
    })
}

/// Fills `out` with the derived tracker parameters (window, refinement
/// count, thresholds) from problem facts.
///
/// # Safety
/// `out` must point to writable `NorstParams` storage.
#[no_mangle]
pub unsafe extern "C" fn norst_suggest_params(
    n: usize,
    r: usize,
    f: f64,
    lambda_plus: f64,
    x_min: f64,
    zeta: f64,
    out: *mut NorstParams,
) -> NorstStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return NorstStatus::NullPointer;
        }
        match suggest_params(n, r, f, lambda_plus, x_min, zeta) {
            Ok(p) => {
                unsafe {
                    *out = NorstParams {
                        r: p.r,
                        k_steps: p.k_steps,
                        alpha: p.alpha,
                        omega_supp: p.omega_supp,
                        xi: p.xi,
                        lambda_thresh: p.lambda_thresh,
                        adaptive_thresholds: p.adaptive_thresholds,
                    };
                }
                NorstStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Creates a tracker from an initial subspace estimate.
///
/// `p_init` is an `n x r` column-major orthonormal matrix; `t_start` is the
/// global index of the first streamed frame (the training frame count).
/// On success `*out` owns the tracker; release it with
/// [`norst_tracker_free`].
///
/// # Safety
/// `p_init` must point to `n * r` readable doubles and `out` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_new(
    p_init: *const f64,
    n: usize,
    r: usize,
    params: *const NorstParams,
    t_start: usize,
    out: *mut *mut NorstTracker,
) -> NorstStatus {
    guarded(|| {
        if p_init.is_null() || params.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        let cols = unsafe { std::slice::from_raw_parts(p_init, n * r) };
        let basis = match Basis::from_orthonormal(DMatrix::from_column_slice(n, r, cols)) {
            Ok(b) => b,
            Err(e) => return status_of(&e),
        };
        let params = TrackerParams::from(unsafe { *params });
        match Tracker::new(basis, params, t_start) {
            Ok(tracker) => {
                unsafe {
                    *out = Box::into_raw(Box::new(NorstTracker {
                        inner: tracker,
                        last_support: Vec::new(),
                    }));
                }
                NorstStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Creates a tracker seeded with a random orthogonal basis (the
/// missing-data initialization); tracking starts at frame 0.
///
/// # Safety
/// `out` must point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_new_random_init(
    n: usize,
    params: *const NorstParams,
    seed: u64,
    out: *mut *mut NorstTracker,
) -> NorstStatus {
    guarded(|| {
        if params.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        let p = TrackerParams::from(unsafe { *params });
        let basis = match init_random_orthogonal(n, p.r, seed) {
            Ok(b) => b,
            Err(e) => return status_of(&e),
        };
        match Tracker::new(basis, p, 0) {
            Ok(tracker) => {
                unsafe {
                    *out = Box::into_raw(Box::new(NorstTracker {
                        inner: tracker,
                        last_support: Vec::new(),
                    }));
                }
                NorstStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn frame_common<'a>(
    handle: *mut NorstTracker,
    y: *const f64,
    n: usize,
    x_hat_out: *mut f64,
    l_hat_out: *mut f64,
) -> Result<(&'a mut NorstTracker, DVector<f64>), NorstStatus> {
    if handle.is_null() || y.is_null() {
        set_error("null pointer argument");
        return Err(NorstStatus::NullPointer);
    }
    if x_hat_out.is_null() || l_hat_out.is_null() {
        set_error("null output buffer");
        return Err(NorstStatus::NullPointer);
    }
    let tracker = unsafe { &mut *handle };
    let y = DVector::from_column_slice(unsafe { std::slice::from_raw_parts(y, n) });
    Ok((tracker, y))
}

/// Processes one frame: splits `y` into outlier and low-rank parts, writing
/// both (`n` doubles each), and advances the detect/update machinery.
///
/// # Safety
/// `handle` must come from a constructor and not be freed; `y`, `x_hat_out`
/// and `l_hat_out` must point to `n` readable / writable doubles.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_process_frame(
    handle: *mut NorstTracker,
    y: *const f64,
    n: usize,
    x_hat_out: *mut f64,
    l_hat_out: *mut f64,
) -> NorstStatus {
    guarded(|| {
        let (tracker, y) = match unsafe { frame_common(handle, y, n, x_hat_out, l_hat_out) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match tracker.inner.process_frame(&y) {
            Ok(fe) => {
                unsafe {
                    ptr::copy_nonoverlapping(fe.x_hat.as_ptr(), x_hat_out, n);
                    ptr::copy_nonoverlapping(fe.l_hat.as_ptr(), l_hat_out, n);
                }
                tracker.last_support = fe.support;
                NorstStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Processes one frame whose outlier support (or missing set) is known:
/// the l1 step is skipped and the listed entries are re-estimated by least
/// squares.
///
/// # Safety
/// As [`norst_tracker_process_frame`]; additionally `support` must point to
/// `support_len` readable indices, each `< n`.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_process_masked_frame(
    handle: *mut NorstTracker,
    y: *const f64,
    n: usize,
    support: *const usize,
    support_len: usize,
    x_hat_out: *mut f64,
    l_hat_out: *mut f64,
) -> NorstStatus {
    guarded(|| {
        if support.is_null() && support_len > 0 {
            set_error("null support with nonzero length");
            return NorstStatus::NullPointer;
        }
        let (tracker, y) = match unsafe { frame_common(handle, y, n, x_hat_out, l_hat_out) } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let sup: Vec<usize> = if support_len == 0 {
            Vec::new()
        } else {
            unsafe { std::slice::from_raw_parts(support, support_len) }.to_vec()
        };
        match tracker.inner.process_frame_known_support(&y, &sup) {
            Ok(fe) => {
                unsafe {
                    ptr::copy_nonoverlapping(fe.x_hat.as_ptr(), x_hat_out, n);
                    ptr::copy_nonoverlapping(fe.l_hat.as_ptr(), l_hat_out, n);
                }
                tracker.last_support = fe.support;
                NorstStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of entries in the most recent frame's estimated outlier support.
///
/// # Safety
/// `handle` must be a live tracker; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_last_support_len(
    handle: *const NorstTracker,
    out: *mut usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        unsafe { *out = (*handle).last_support.len() };
        NorstStatus::Ok
    })
}

/// Copies the most recent frame's support indices into `out` (capacity
/// `cap`); fails with `BufferTooSmall` when `cap` is insufficient.
///
/// # Safety
/// `handle` must be a live tracker; `out` must point to `cap` writable
/// `usize` slots.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_last_support(
    handle: *const NorstTracker,
    out: *mut usize,
    cap: usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        let sup = unsafe { &(*handle).last_support };
        if cap < sup.len() {
            set_error(format!("need capacity {}, got {cap}", sup.len()));
            return NorstStatus::BufferTooSmall;
        }
        unsafe { ptr::copy_nonoverlapping(sup.as_ptr(), out, sup.len()) };
        NorstStatus::Ok
    })
}

/// Copies the current subspace estimate into `out` as an `n x r`
/// column-major matrix. `cap` is the number of doubles available.
///
/// # Safety
/// `handle` must be a live tracker; `out` must point to `cap` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_current_basis(
    handle: *const NorstTracker,
    out: *mut f64,
    cap: usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        let basis = unsafe { (*handle).inner.current_basis() };
        let needed = basis.ambient_dim() * basis.dim();
        if cap < needed {
            set_error(format!("need capacity {needed}, got {cap}"));
            return NorstStatus::BufferTooSmall;
        }
        unsafe { ptr::copy_nonoverlapping(basis.cols().as_ptr(), out, needed) };
        NorstStatus::Ok
    })
}

/// Number of change detections so far.
///
/// # Safety
/// `handle` must be a live tracker; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_detection_count(
    handle: *const NorstTracker,
    out: *mut usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        unsafe { *out = (*handle).inner.detections().len() };
        NorstStatus::Ok
    })
}

/// Global frame index of detection `idx`.
///
/// # Safety
/// `handle` must be a live tracker; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_detection(
    handle: *const NorstTracker,
    idx: usize,
    out: *mut usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        match unsafe { (*handle).inner.detections().get(idx) } {
            Some(&t) => {
                unsafe { *out = t };
                NorstStatus::Ok
            }
            None => {
                set_error(format!("detection index {idx} out of range"));
                NorstStatus::InvalidArgument
            }
        }
    })
}

/// Frames processed so far.
///
/// # Safety
/// `handle` must be a live tracker; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_frames_processed(
    handle: *const NorstTracker,
    out: *mut usize,
) -> NorstStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer argument");
            return NorstStatus::NullPointer;
        }
        unsafe { *out = (*handle).inner.frames_processed() };
        NorstStatus::Ok
    })
}

/// Releases a tracker. NULL is a no-op.
///
/// # Safety
/// `handle` must come from a constructor and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn norst_tracker_free(handle: *mut NorstTracker) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}
