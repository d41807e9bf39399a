//! C ABI over the freeconc library. Functions return an [`FcStatus`];
//! on failure the message is available from [`fc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use freeconc::bmc::{self, BmcSpec};
use freeconc::dependence::{self, FiniteChain};
use freeconc::dyson;
use freeconc::free_bounds::minmax_coupling;
use freeconc::matrix_core::{singular_values, RectMatrix};
use freeconc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Shape = 10,
    Numeric = 11,
    Domain = 12,
    Unbounded = 13,
    Convergence = 14,
    IterationLimit = 15,
    Degenerate = 16,
    Ergodicity = 17,
    Config = 18,
    Io = 19,
    Panic = 99,
}

/// Opaque block Markov chain specification.
pub struct FcBmcSpec {
    inner: BmcSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Shape(_) => FcStatus::Shape,
        Error::Numeric(_) => FcStatus::Numeric,
        Error::Domain(_) => FcStatus::Domain,
        Error::Unbounded(_) => FcStatus::Unbounded,
        Error::Convergence(_) => FcStatus::Convergence,
        Error::IterationLimit(_) => FcStatus::IterationLimit,
        Error::Degenerate(_) => FcStatus::Degenerate,
        Error::Ergodicity(_) => FcStatus::Ergodicity,
        Error::Config(_) => FcStatus::Config,
        Error::Io(_) => FcStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Status(FcStatus, &'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            FcStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".to_string());
            FcStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Status(FcStatus::NullPointer, "null pointer argument"))
    } else {
        Ok(())
    }
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length without the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a JSON configuration into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_spec_from_json(json: *const c_char, out: *mut *mut FcBmcSpec) -> FcStatus {
    guard(|| {
        nonnull(json)?;
        nonnull(out)?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail::Status(FcStatus::InvalidUtf8, "configuration is not valid UTF-8"))?;
        let spec = BmcSpec::from_json(text)?;
        *out = Box::into_raw(Box::new(FcBmcSpec { inner: spec }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `spec` must be null or a handle from [`fc_bmc_spec_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_spec_free(spec: *mut FcBmcSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of states `d` and number of clusters `K`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_spec_dims(spec: *const FcBmcSpec, d: *mut usize, k: *mut usize) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(d)?;
        nonnull(k)?;
        *d = (*spec).inner.d();
        *k = (*spec).inner.k();
        Ok(())
    })
}

/// Variational norm value of the finite-`d` profile.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_mhat(spec: *const FcBmcSpec, out: *mut f64) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(out)?;
        *out = bmc::mhat(&(*spec).inner)?;
        Ok(())
    })
}

/// Right edge of the limiting singular value support.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_support_edge(spec: *const FcBmcSpec, out: *mut f64) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(out)?;
        *out = dyson::support_edge(&bmc::dyson_system(&(*spec).inner)?)?;
        Ok(())
    })
}

/// The exact parameter `frak d` of the spec.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_frakd(spec: *const FcBmcSpec, out: *mut f64) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(out)?;
        *out = bmc::frakd(&(*spec).inner)?;
        Ok(())
    })
}

/// Symmetrized limiting density at `n` points with smoothing `eps`.
///
/// # Safety
/// `xs` and `out` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_density(
    spec: *const FcBmcSpec,
    xs: *const f64,
    n: usize,
    eps: f64,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(xs)?;
        nonnull(out)?;
        let sys = bmc::dyson_system(&(*spec).inner)?;
        let rho = dyson::density_grid(&sys, slice::from_raw_parts(xs, n), eps)?;
        slice::from_raw_parts_mut(out, n).copy_from_slice(&rho);
        Ok(())
    })
}

/// Singular values, in descending order, of one simulated centered and
/// scaled frequency matrix. `out` must hold `d` values.
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn fc_bmc_sample_singular_values(
    spec: *const FcBmcSpec,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> FcStatus {
    guard(|| {
        nonnull(spec)?;
        nonnull(out)?;
        let spec = &(*spec).inner;
        if len < spec.d() {
            return Err(Fail::Status(FcStatus::BufferTooSmall, "output buffer shorter than d"));
        }
        let sv = singular_values(&bmc::sample_m(spec, seed))?;
        slice::from_raw_parts_mut(out, sv.len()).copy_from_slice(&sv);
        Ok(())
    })
}

/// Variational value `min_x max_i (1/x_i + sum_j c_ij x_j)` of a
/// nonnegative `n x n` coupling matrix in row-major order.
///
/// # Safety
/// `c` must point to `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn fc_minmax_coupling(c: *const f64, n: usize, out: *mut f64) -> FcStatus {
    guard(|| {
        nonnull(c)?;
        nonnull(out)?;
        let m = RectMatrix::from_vec(n, n, slice::from_raw_parts(c, n * n).to_vec())?;
        *out = minmax_coupling(&m)?.0;
        Ok(())
    })
}

/// `Psi` of the stationary chain of length `len` with the row-stochastic
/// `k x k` transition matrix `p` in row-major order.
///
/// # Safety
/// `p` must point to `k * k` values.
#[no_mangle]
pub unsafe extern "C" fn fc_capital_psi(p: *const f64, k: usize, len: usize, out: *mut usize) -> FcStatus {
    guard(|| {
        nonnull(p)?;
        nonnull(out)?;
        let m = RectMatrix::from_vec(k, k, slice::from_raw_parts(p, k * k).to_vec())?;
        *out = dependence::capital_psi(&FiniteChain::stationary(m, len)?)?;
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
