//! C ABI for `richkde`.
//!
//! Objects are opaque handles created by `rk_*_new` and released with the
//! matching `rk_*_free`. Every fallible call returns an [`RkStatus`]; on
//! failure [`rk_last_error_message`] describes the problem for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use richkde::extrapolation::{lagrange_weights, BandwidthSet, ExtrapolatedEstimator};
use richkde::kernel::{kde_evaluate, EvaluationGrid, Sample};
use richkde::selection::{
    optimal_bandwidth, optimal_order, spread_bandwidths, DEFAULT_SPREAD_RATIO,
};
use richkde::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    InvalidArgument = 1,
    IllConditioned = 2,
    SingularSystem = 3,
    NoFeasibleWeights = 4,
    Domain = 5,
    NumericalFailure = 6,
    NumericalOverflow = 7,
    NullPointer = 8,
    Panic = 9,
}

/// An owned sample of `n` points in `dim` dimensions.
pub struct RkSample(Sample);

/// A fitted extrapolated estimator.
pub struct RkEstimator(ExtrapolatedEstimator);

/// Result of the optimal order rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RkOrderSelection {
    pub alpha: f64,
    pub r_real: f64,
    pub r: usize,
    pub h_star: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RkStatus {
    match err {
        Error::InvalidArgument(_) => RkStatus::InvalidArgument,
        Error::IllConditionedBandwidths(_) => RkStatus::IllConditioned,
        Error::SingularSystem(_) => RkStatus::SingularSystem,
        Error::NoFeasibleWeights(_) => RkStatus::NoFeasibleWeights,
        Error::Domain(_) => RkStatus::Domain,
        Error::NumericalFailure(_) => RkStatus::NumericalFailure,
        Error::NumericalOverflow(_) => RkStatus::NumericalOverflow,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RkStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(&format!("{what} is null"));
            RkStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic");
            RkStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(value);
    Ok(())
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `n * dim` row-major values into a new sample.
///
/// # Safety
/// `data` must point to `n * dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_sample_new(
    data: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut RkSample,
) -> RkStatus {
    guard(|| {
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("sample size overflows".into()))?;
        let values = slice(data, len, "data")?.to_vec();
        let sample = Sample::new(values, dim)?;
        write_out(out, Box::into_raw(Box::new(RkSample(sample))), "out")
    })
}

/// # Safety
/// `sample` must be null or a handle from `rk_sample_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_sample_free(sample: *mut RkSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Plain Gaussian KDE with bandwidth `h` at the point `x` of length `dim`.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn rk_kde_evaluate(
    sample: *const RkSample,
    h: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let s = &deref(sample, "sample")?.0;
        let x = slice(x, dim, "x")?;
        write_out(out, kde_evaluate(s, h, x)?, "out")
    })
}

/// Builds an estimator from `r` bandwidths (any order) with Richardson
/// weights. The sample is copied; the caller keeps ownership of `sample`.
///
/// # Safety
/// `bandwidths` must point to `r` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_new(
    sample: *const RkSample,
    bandwidths: *const f64,
    r: usize,
    out: *mut *mut RkEstimator,
) -> RkStatus {
    guard(|| {
        let s = deref(sample, "sample")?.0.clone();
        let bw = BandwidthSet::new(slice(bandwidths, r, "bandwidths")?.to_vec())?;
        let est = ExtrapolatedEstimator::with_lagrange_weights(s, bw)?;
        write_out(out, Box::into_raw(Box::new(RkEstimator(est))), "out")
    })
}

/// Builds an estimator with the optimal order and bandwidths spread by the
/// default ratio around the optimal bandwidth.
///
/// # Safety
/// `sample` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_new_auto(
    sample: *const RkSample,
    out: *mut *mut RkEstimator,
) -> RkStatus {
    guard(|| {
        let s = deref(sample, "sample")?.0.clone();
        let (n, d) = (s.len() as u64, s.dim());
        let r = optimal_order(n, d)?.r;
        let bw = spread_bandwidths(optimal_bandwidth(n, d, r)?, r, DEFAULT_SPREAD_RATIO)?;
        let est = ExtrapolatedEstimator::with_lagrange_weights(s, bw)?;
        write_out(out, Box::into_raw(Box::new(RkEstimator(est))), "out")
    })
}

/// # Safety
/// `est` must be null or a handle from `rk_estimator_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_free(est: *mut RkEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Number of bandwidths, or 0 for a null handle.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_order(est: *const RkEstimator) -> usize {
    est.as_ref().map_or(0, |e| e.0.bandwidths().order())
}

/// Copies the sorted bandwidths and their weights into arrays of length
/// `len`, which must equal the order.
///
/// # Safety
/// Output pointers must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_weights(
    est: *const RkEstimator,
    bandwidths_out: *mut f64,
    weights_out: *mut f64,
    len: usize,
) -> RkStatus {
    guard(|| {
        let e = &deref(est, "estimator")?.0;
        if len != e.bandwidths().order() {
            return Err(Error::InvalidArgument(format!(
                "buffer length {len} does not match order {}",
                e.bandwidths().order()
            ))
            .into());
        }
        slice_mut(bandwidths_out, len, "bandwidths_out")?.copy_from_slice(e.bandwidths().values());
        slice_mut(weights_out, len, "weights_out")?.copy_from_slice(e.weights().as_slice());
        Ok(())
    })
}

/// Estimate at one point of length `dim`.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_evaluate(
    est: *const RkEstimator,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let e = &deref(est, "estimator")?.0;
        let x = slice(x, dim, "x")?;
        write_out(out, e.evaluate(x)?, "out")
    })
}

/// Estimates at `npoints` row-major points; writes `npoints` values.
///
/// # Safety
/// `points` must hold `npoints * dim` doubles and `out` `npoints` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_estimator_evaluate_grid(
    est: *const RkEstimator,
    points: *const f64,
    npoints: usize,
    dim: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        let e = &deref(est, "estimator")?.0;
        let len = npoints
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("grid size overflows".into()))?;
        let grid = EvaluationGrid::new(slice(points, len, "points")?.to_vec(), dim)?;
        let values = e.evaluate_grid(&grid)?;
        slice_mut(out, npoints, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Richardson weights for `r` bandwidths. `weights_out[i]` belongs to
/// `bandwidths[i]` whatever the input order.
///
/// # Safety
/// Both pointers must be valid for `r` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_lagrange_weights(
    bandwidths: *const f64,
    r: usize,
    weights_out: *mut f64,
) -> RkStatus {
    guard(|| {
        let h = slice(bandwidths, r, "bandwidths")?;
        let bw = BandwidthSet::new(h.to_vec())?;
        let w = lagrange_weights(&bw)?;
        let out = slice_mut(weights_out, r, "weights_out")?;
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
        for (sorted_pos, &orig) in order.iter().enumerate() {
            out[orig] = w.as_slice()[sorted_pos];
        }
        Ok(())
    })
}

/// Optimal bandwidth for `n` points in `d` dimensions at order `r`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_optimal_bandwidth(
    n: u64,
    d: usize,
    r: usize,
    out: *mut f64,
) -> RkStatus {
    guard(|| write_out(out, optimal_bandwidth(n, d, r)?, "out"))
}

/// Optimal extrapolation order for `n` points in `d` dimensions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_optimal_order(
    n: u64,
    d: usize,
    out: *mut RkOrderSelection,
) -> RkStatus {
    guard(|| {
        let sel = optimal_order(n, d)?;
        let value = RkOrderSelection {
            alpha: sel.alpha,
            r_real: sel.r_real,
            r: sel.r,
            h_star: sel.h_star,
        };
        write_out(out, value, "out")
    })
}
