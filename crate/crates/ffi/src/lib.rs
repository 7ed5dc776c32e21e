//! C ABI over the designgap engine. Handles are opaque pointers, every
//! call returns a status code, and the last error message is kept in
//! thread-local storage.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use designgap::bounds;
use designgap::gateset;
use designgap::linalg::CMatrix;
use designgap::moment::{haar_projector, moment_operator, spectral_gap, GateEnsemble};
use designgap::{Error, Limits};
use num_complex::Complex64 as C64;

/// Status code of every FFI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DimensionOverflow = 3,
    NotUnitary = 4,
    NoConvergence = 5,
    BudgetExceeded = 6,
    InternalError = 7,
}

/// Spectral gap result.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DgGapReport {
    pub gap: f64,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub iterations: u64,
}

/// Opaque gate-ensemble handle.
pub struct DgEnsemble {
    inner: GateEnsemble,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DgStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => DgStatus::InvalidArgument,
        Error::DimensionOverflow { .. } => DgStatus::DimensionOverflow,
        Error::EigBudgetExceeded { .. } => DgStatus::BudgetExceeded,
        Error::NotUnitary { .. } => DgStatus::NotUnitary,
        Error::NoConvergence { .. } => DgStatus::NoConvergence,
        Error::InvalidProbabilities { .. } => DgStatus::InvalidArgument,
        Error::NonFinite { .. } => DgStatus::InvalidArgument,
        Error::DisconnectedGraph { .. } => DgStatus::InvalidArgument,
        Error::UnboundedDepth { .. } => DgStatus::InvalidArgument,
        Error::OrthogonalityViolation { .. } => DgStatus::NotUnitary,
        Error::Internal(_) | Error::Linalg(_) => DgStatus::InternalError,
    }
}

fn fail(err: Error) -> DgStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guarded(f: impl FnOnce() -> DgStatus) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DgStatus::InternalError
        }
    }
}

/// Version string of the library; the pointer stays valid for the process
/// lifetime.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message (including the terminating NUL when it
/// fits) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// required length is returned).
#[no_mangle]
pub unsafe extern "C" fn dg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always NUL-terminate what was written
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Builds a gate ensemble from `n_members` unitaries on a `dim`-dimensional
/// space. `probabilities` holds one weight per member; `entries` holds the
/// member matrices contiguously, row-major, with each complex entry stored
/// as `(re, im)` doubles.
///
/// # Safety
/// `probabilities` must point to `n_members` doubles, `entries` to
/// `n_members * dim * dim * 2` doubles, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_ensemble_new(
    dim: usize,
    n_members: usize,
    probabilities: *const f64,
    entries: *const f64,
    out: *mut *mut DgEnsemble,
) -> DgStatus {
    if out.is_null() || probabilities.is_null() || entries.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    if dim == 0 || n_members == 0 {
        set_error("dimension and member count must be positive");
        return DgStatus::InvalidArgument;
    }
    let probs = std::slice::from_raw_parts(probabilities, n_members);
    let data = std::slice::from_raw_parts(entries, n_members * dim * dim * 2);
    guarded(|| {
        let mut members = Vec::with_capacity(n_members);
        for m in 0..n_members {
            let base = m * dim * dim * 2;
            let mut mat = Vec::with_capacity(dim * dim);
            for k in 0..dim * dim {
                mat.push(C64::new(data[base + 2 * k], data[base + 2 * k + 1]));
            }
            let matrix = match CMatrix::from_vec(dim, dim, mat) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            members.push((probs[m], matrix));
        }
        match GateEnsemble::new(dim, members) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DgEnsemble { inner }));
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees an ensemble handle; a null pointer is ignored.
///
/// # Safety
/// `handle` must have been produced by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn dg_ensemble_free(handle: *mut DgEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Dimension of the ensemble's unitaries, or zero for a null handle.
///
/// # Safety
/// `handle` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn dg_ensemble_dim(handle: *const DgEnsemble) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.dim()
}

/// Spectral gap of the ensemble's t-th moment operator against the
/// invariant-subspace projector.
///
/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_spectral_gap(
    handle: *const DgEnsemble,
    t: u32,
    out: *mut DgGapReport,
) -> DgStatus {
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    let ensemble = &(*handle).inner;
    guarded(|| {
        let limits = Limits::from_env();
        let result = (|| {
            let m = moment_operator(ensemble, t as usize, &limits)?;
            let p = haar_projector(ensemble.dim(), t as usize, &limits)?;
            spectral_gap(&m, &p)
        })();
        match result {
            Ok(rep) => {
                *out = DgGapReport {
                    gap: rep.gap,
                    residual_norm: rep.residual_norm,
                    tolerance: rep.tolerance,
                    iterations: rep.iterations as u64,
                };
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Spectral gaps for moment orders `1..=t_max`. Stops early on a dimension
/// budget; `out_len` receives the number of gaps written.
///
/// # Safety
/// `out_gaps` must point to `t_max` writable doubles; `out_len` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_gap_sweep(
    handle: *const DgEnsemble,
    t_max: u32,
    out_gaps: *mut f64,
    out_len: *mut usize,
) -> DgStatus {
    if handle.is_null() || out_gaps.is_null() || out_len.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    let ensemble = &(*handle).inner;
    guarded(|| {
        let limits = Limits::from_env();
        match gateset::gap_sweep(ensemble, t_max as usize, &limits) {
            Ok(diag) => {
                for (i, g) in diag.gaps.iter().enumerate() {
                    *out_gaps.add(i) = *g;
                }
                *out_len = diag.gaps.len();
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Rank of the invariant-subspace projector on a `q`-dimensional space.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_haar_projector_rank(q: usize, t: u32, out: *mut usize) -> DgStatus {
    if out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    guarded(|| match haar_projector(q, t as usize, &Limits::from_env()) {
        Ok(p) => {
            *out = p.rank;
            DgStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Formation depth of a circuit whose layers all have spectral gap `gap`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_haar_depth(
    gap: f64,
    n_sites: usize,
    t: u32,
    local_dim: usize,
    eps: f64,
    out: *mut f64,
) -> DgStatus {
    if out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    guarded(|| match bounds::haar_depth(gap, n_sites, t as usize, local_dim, eps) {
        Ok(b) => {
            *out = b.depth;
            DgStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Depth bound for single-layer-connected circuits with non-Haar locals.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_single_layer_depth(
    local_gap: f64,
    haar_gap: f64,
    n_sites: usize,
    t: u32,
    local_dim: usize,
    eps: f64,
    out: *mut f64,
) -> DgStatus {
    if out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    guarded(|| {
        let result = bounds::haar_depth(haar_gap, n_sites, t as usize, local_dim, eps)
            .and_then(|base| bounds::single_layer_depth(local_gap, &base));
        match result {
            Ok(b) => {
                *out = b.depth;
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Depth bound for fixed-architecture circuits from the local gap, the
/// connection depth, and the architecture's gap floor.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_block_depth(
    local_gap: f64,
    connection_depth: u32,
    gap_floor: f64,
    n_sites: usize,
    t: u32,
    local_dim: usize,
    eps: f64,
    out: *mut f64,
) -> DgStatus {
    if out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    guarded(|| {
        match bounds::fixed_block_depth(
            local_gap,
            connection_depth as usize,
            gap_floor,
            n_sites,
            t as usize,
            local_dim,
            eps,
        ) {
            Ok(b) => {
                *out = b.depth;
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Patch size and per-patch depth of the two-layer patchwork construction
/// on qubit systems.
///
/// # Safety
/// `out_patch_size` and `out_patch_depth` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dg_patchwork_depth(
    n_sites: usize,
    t: u32,
    eps: f64,
    local_gap: f64,
    c0: f64,
    out_patch_size: *mut usize,
    out_patch_depth: *mut f64,
) -> DgStatus {
    if out_patch_size.is_null() || out_patch_depth.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    guarded(|| match bounds::patchwork_depth(n_sites, t as usize, eps, local_gap, c0) {
        Ok((xi, m)) => {
            *out_patch_size = xi;
            *out_patch_depth = m;
            DgStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Distance between two unitaries modulo a global phase. Matrices are
/// row-major `(re, im)` doubles of the given dimension.
///
/// # Safety
/// `v_entries` and `u_entries` must each point to `dim * dim * 2` doubles;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_phase_distance(
    v_entries: *const f64,
    u_entries: *const f64,
    dim: usize,
    out: *mut f64,
) -> DgStatus {
    if v_entries.is_null() || u_entries.is_null() || out.is_null() {
        set_error("null argument");
        return DgStatus::NullArgument;
    }
    if dim == 0 {
        set_error("dimension must be positive");
        return DgStatus::InvalidArgument;
    }
    let read = |ptr: *const f64| -> designgap::Result<CMatrix> {
        let data = unsafe { std::slice::from_raw_parts(ptr, dim * dim * 2) };
        let entries = (0..dim * dim)
            .map(|k| C64::new(data[2 * k], data[2 * k + 1]))
            .collect();
        CMatrix::from_vec(dim, dim, entries)
    };
    guarded(|| {
        let result = (|| {
            let v = read(v_entries)?;
            let u = read(u_entries)?;
            gateset::phase_distance(&v, &u, &Limits::from_env())
        })();
        match result {
            Ok(d) => {
                *out = d;
                DgStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
