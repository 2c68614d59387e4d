//! C ABI over the segpart solvers.
//!
//! Domains and partitions cross the boundary as opaque handles that the
//! caller releases with the matching `*_free`. Every fallible call returns a
//! [`SegStatus`]; on failure a description is available from
//! [`seg_last_error`] on the same thread until the next failing call.
//! Fields are exchanged as row-major `nx * ny` arrays of `double`, normalized
//! so that `h^2 * sum(u^2) = 1`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use segpart::eigensolve::{first_dirichlet_eig_with, EigenOptions};
use segpart::partition::{optimize, PartitionProblem, PartitionState};
use segpart::{build_domain, GridDomain, SegError, Shape};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    EmptyDomain = 3,
    NoConvergence = 4,
    InfeasibleR = 5,
    SqueezedOut = 6,
    Annihilated = 7,
    ConstraintViolated = 8,
    BufferTooSmall = 9,
    Internal = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegShape {
    /// `p0` = radius.
    Disk = 0,
    /// `p0` x `p1`.
    Rectangle = 1,
    /// Side `p0`.
    Square = 2,
    /// Side `p0`.
    LShape = 3,
    /// Outer radius `p0`, removed ball radius `p1`.
    DiskMinusBall = 4,
}

/// Lattice domain handle.
pub struct SegDomain {
    inner: Arc<GridDomain>,
}

/// Optimized partition handle.
pub struct SegPartition {
    state: PartitionState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SegError) -> SegStatus {
    match e {
        SegError::EmptyDomain | SegError::EmptyRegion => SegStatus::EmptyDomain,
        SegError::InvalidInput(_) => SegStatus::InvalidInput,
        SegError::NoConvergence { .. } | SegError::Bracket(_) => SegStatus::NoConvergence,
        SegError::InfeasibleR(_) => SegStatus::InfeasibleR,
        SegError::SqueezedOut(_) => SegStatus::SqueezedOut,
        SegError::Annihilated(_) => SegStatus::Annihilated,
        SegError::ConstraintViolated(_) => SegStatus::ConstraintViolated,
        SegError::Format(_) | SegError::Io(_) | SegError::Json(_) => SegStatus::Internal,
    }
}

fn fail(status: SegStatus, msg: impl Into<String>) -> SegStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> SegStatus) -> SegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SegStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: segpart::Result<T>) -> Result<T, SegStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn seg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Samples a shape with resolution `n` and stores a new handle in `*out`.
///
/// # Safety
/// `out` must be NULL or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn seg_domain_new(
    shape: SegShape,
    p0: f64,
    p1: f64,
    n: usize,
    out: *mut *mut SegDomain,
) -> SegStatus {
    if out.is_null() {
        return fail(SegStatus::NullPointer, "out is NULL");
    }
    *out = ptr::null_mut();
    guard(|| {
        let shape = match shape {
            SegShape::Disk => Shape::Disk { radius: p0 },
            SegShape::Rectangle => Shape::Rectangle { a: p0, b: p1 },
            SegShape::Square => Shape::Square { a: p0 },
            SegShape::LShape => Shape::LShape { a: p0 },
            SegShape::DiskMinusBall => Shape::DiskMinusBall { radius: p0, inner: p1 },
        };
        match lift(build_domain(shape, n)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SegDomain { inner }));
                SegStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `d` must be NULL or a handle from [`seg_domain_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seg_domain_free(d: *mut SegDomain) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Lattice dimensions, spacing and number of interior nodes.
///
/// # Safety
/// `d` must be a live handle; each output pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn seg_domain_dims(
    d: *const SegDomain,
    nx: *mut usize,
    ny: *mut usize,
    h: *mut f64,
    interior: *mut usize,
) -> SegStatus {
    let Some(d) = d.as_ref() else {
        return fail(SegStatus::NullPointer, "domain is NULL");
    };
    let g = &d.inner;
    if !nx.is_null() {
        *nx = g.nx;
    }
    if !ny.is_null() {
        *ny = g.ny;
    }
    if !h.is_null() {
        *h = g.h;
    }
    if !interior.is_null() {
        *interior = g.interior_count();
    }
    SegStatus::Ok
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> SegStatus {
    if buf.is_null() {
        return SegStatus::Ok;
    }
    if len < values.len() {
        return fail(SegStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", values.len()));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    SegStatus::Ok
}

/// First Dirichlet eigenvalue of the whole domain. When `field` is not NULL
/// the normalized eigenfunction is written to it (`len >= nx * ny`).
///
/// # Safety
/// `d` must be a live handle, `lambda` writable, `field` NULL or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seg_ground_state(
    d: *const SegDomain,
    tol: f64,
    lambda: *mut f64,
    field: *mut f64,
    len: usize,
) -> SegStatus {
    let (Some(d), false) = (d.as_ref(), lambda.is_null()) else {
        return fail(SegStatus::NullPointer, "domain or lambda is NULL");
    };
    guard(|| {
        let opts = EigenOptions { tol, ..EigenOptions::default() };
        match lift(first_dirichlet_eig_with(&d.inner.full_mask(), &opts, None)) {
            Ok(e) => {
                *lambda = e.lambda;
                copy_out(e.field.values(), field, len)
            }
            Err(s) => s,
        }
    })
}

/// Optimizes a `k`-partition with pairwise separation `r`.
///
/// # Safety
/// `d` must be a live handle and `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_solve(
    d: *const SegDomain,
    k: usize,
    r: f64,
    seed: u64,
    out: *mut *mut SegPartition,
) -> SegStatus {
    let (Some(d), false) = (d.as_ref(), out.is_null()) else {
        return fail(SegStatus::NullPointer, "domain or out is NULL");
    };
    *out = ptr::null_mut();
    guard(|| {
        let mut p = PartitionProblem::new(&d.inner, k, r);
        p.seed = seed;
        match lift(optimize(&p)) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(SegPartition { state }));
                SegStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`seg_partition_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_free(p: *mut SegPartition) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of components and the objective, the sum of component eigenvalues.
///
/// # Safety
/// `p` must be a live handle; outputs NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_summary(p: *const SegPartition, k: *mut usize, c: *mut f64) -> SegStatus {
    let Some(p) = p.as_ref() else {
        return fail(SegStatus::NullPointer, "partition is NULL");
    };
    if !k.is_null() {
        *k = p.state.k();
    }
    if !c.is_null() {
        *c = p.state.c;
    }
    SegStatus::Ok
}

/// Eigenvalue of component `i` and, when `field` is not NULL, its field.
///
/// # Safety
/// `p` must be a live handle, `lambda` NULL or writable, `field` NULL or
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_component(
    p: *const SegPartition,
    i: usize,
    lambda: *mut f64,
    field: *mut f64,
    len: usize,
) -> SegStatus {
    let Some(p) = p.as_ref() else {
        return fail(SegStatus::NullPointer, "partition is NULL");
    };
    if i >= p.state.k() {
        return fail(SegStatus::InvalidInput, format!("component {i} out of range for k = {}", p.state.k()));
    }
    if !lambda.is_null() {
        *lambda = p.state.lambdas[i];
    }
    copy_out(p.state.fields[i].values(), field, len)
}

/// Support of component `i` as 0/1 bytes (`len >= nx * ny`).
///
/// # Safety
/// `p` must be a live handle and `mask` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_support(
    p: *const SegPartition,
    i: usize,
    mask: *mut u8,
    len: usize,
) -> SegStatus {
    let (Some(p), false) = (p.as_ref(), mask.is_null()) else {
        return fail(SegStatus::NullPointer, "partition or mask is NULL");
    };
    if i >= p.state.k() {
        return fail(SegStatus::InvalidInput, format!("component {i} out of range for k = {}", p.state.k()));
    }
    let bits = p.state.supports[i].bits();
    if len < bits.len() {
        return fail(SegStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", bits.len()));
    }
    for (j, &b) in bits.iter().enumerate() {
        *mask.add(j) = u8::from(b);
    }
    SegStatus::Ok
}

/// Smallest distance between two different supports (`+inf` for `k = 1`).
///
/// # Safety
/// `p` must be a live handle and `dist` writable.
#[no_mangle]
pub unsafe extern "C" fn seg_partition_min_distance(p: *const SegPartition, dist: *mut f64) -> SegStatus {
    let (Some(p), false) = (p.as_ref(), dist.is_null()) else {
        return fail(SegStatus::NullPointer, "partition or dist is NULL");
    };
    guard(|| match lift(p.state.min_pairwise_distance()) {
        Ok(v) => {
            *dist = v;
            SegStatus::Ok
        }
        Err(s) => s,
    })
}
