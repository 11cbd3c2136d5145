//! C ABI over the AdaHessian toolkit.
//!
//! Every fallible function returns an [`AhStatus`]. On failure the message
//! is available from [`ah_last_error`] on the same thread until the next
//! failing call. Handles are opaque and must be released with their
//! matching `_free` function. Buffers are caller-owned `double` arrays
//! whose length is passed explicitly and checked against the problem or
//! optimizer dimension.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use adahessian::autodiff::{evaluate, gradient, hvp, Batch, DifferentiableProblem, SecondOrderTape};
use adahessian::hutchinson::{estimate_with_operator, probe_rng};
use adahessian::optim::{spatial_average, AdaHessian, AdaHessianHyper, Optimizer};
use adahessian::problems::ProblemSpec;
use adahessian::{BlockSpec, Error, ParamVector};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// A NaN or infinity was produced; outputs were left untouched.
    NonFinite = 4,
    Config = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A benchmark problem.
pub struct AhProblem {
    inner: Box<dyn DifferentiableProblem>,
}

/// An AdaHessian optimizer with its moment buffers.
pub struct AhOptimizer {
    inner: AdaHessian,
}

/// AdaHessian hyperparameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Hessian power in [0, 1].
    pub hessian_power: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<AhHyper> for AdaHessianHyper {
    fn from(h: AhHyper) -> Self {
        AdaHessianHyper {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            hessian_power: h.hessian_power,
            eps: h.eps,
            weight_decay: h.weight_decay,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AhStatus {
    match e {
        Error::DimensionMismatch { .. } => AhStatus::DimensionMismatch,
        Error::NonFiniteOp { .. } | Error::NonFiniteValue { .. } => AhStatus::NonFinite,
        Error::InvalidArgument(_) => AhStatus::InvalidArgument,
        Error::Config(_) => AhStatus::Config,
        Error::Io(_) => AhStatus::Io,
    }
}

struct Fail(AhStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AhStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AhStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            AhStatus::Internal
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn problem<'a>(p: *const AhProblem) -> Result<&'a AhProblem, Fail> {
    p.as_ref().ok_or_else(|| null("problem"))
}

fn check_len(len: usize, expected: usize, what: &'static str) -> Result<(), Fail> {
    if len != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: len,
        }
        .into());
    }
    Ok(())
}

fn params(values: &[f64]) -> Result<ParamVector, Fail> {
    Ok(ParamVector::new(values.to_vec())?)
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ah_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ah_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default hyperparameters (lr 0.15, betas 0.9/0.999, power 1, eps 1e-8).
#[no_mangle]
pub extern "C" fn ah_hyper_default() -> AhHyper {
    let h = AdaHessianHyper::default();
    AhHyper {
        lr: h.lr,
        beta1: h.beta1,
        beta2: h.beta2,
        hessian_power: h.hessian_power,
        eps: h.eps,
        weight_decay: h.weight_decay,
    }
}

/// Builds the registered problem `name` with default settings and data
/// seed `data_seed`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_new(name: *const c_char, data_seed: u64, out: *mut *mut AhProblem) -> AhStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Fail(AhStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let mut spec = ProblemSpec::named(name);
        spec.seed = data_seed;
        let inner = spec.build()?;
        *out = Box::into_raw(Box::new(AhProblem { inner }));
        Ok(())
    })
}

/// Releases a problem. NULL is ignored.
///
/// # Safety
/// `p` must come from [`ah_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_free(p: *mut AhProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of parameters, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_dim(p: *const AhProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.dim())
}

/// Writes the initial point for run seed `seed` into `out[0..len]`.
///
/// # Safety
/// `p` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_initial_point(
    p: *const AhProblem,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> AhStatus {
    guard(|| {
        let p = problem(p)?;
        check_len(len, p.inner.dim(), "output")?;
        let out = slice_mut(out, len, "out")?;
        out.copy_from_slice(p.inner.initial_point(seed).as_slice());
        Ok(())
    })
}

/// Full-data loss at `theta`.
///
/// # Safety
/// `theta` must hold `len` doubles and `loss` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_evaluate(
    p: *const AhProblem,
    theta: *const f64,
    len: usize,
    loss: *mut f64,
) -> AhStatus {
    guard(|| {
        let p = problem(p)?;
        let theta = params(slice(theta, len, "theta")?)?;
        if loss.is_null() {
            return Err(null("loss"));
        }
        *loss = evaluate(p.inner.as_ref(), &theta, &Batch::Full)?;
        Ok(())
    })
}

/// Full-data gradient at `theta` into `out`.
///
/// # Safety
/// `theta` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_gradient(
    p: *const AhProblem,
    theta: *const f64,
    len: usize,
    out: *mut f64,
) -> AhStatus {
    guard(|| {
        let p = problem(p)?;
        let theta = params(slice(theta, len, "theta")?)?;
        let g = gradient(p.inner.as_ref(), &theta, &Batch::Full)?;
        slice_mut(out, len, "out")?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Exact Hessian-vector product `H(theta) z` into `out`.
///
/// # Safety
/// `theta`, `z` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_hvp(
    p: *const AhProblem,
    theta: *const f64,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> AhStatus {
    guard(|| {
        let p = problem(p)?;
        let theta = params(slice(theta, len, "theta")?)?;
        let z = params(slice(z, len, "z")?)?;
        let hz = hvp(p.inner.as_ref(), &theta, &Batch::Full, &z)?;
        slice_mut(out, len, "out")?.copy_from_slice(hz.as_slice());
        Ok(())
    })
}

/// Hutchinson estimate of the Hessian diagonal at `theta` from `samples`
/// Rademacher probes. Probes depend only on `(seed, iteration)`.
///
/// # Safety
/// `theta` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_problem_estimate_diag(
    p: *const AhProblem,
    theta: *const f64,
    len: usize,
    samples: usize,
    seed: u64,
    iteration: u64,
    out: *mut f64,
) -> AhStatus {
    guard(|| {
        let p = problem(p)?;
        if samples == 0 {
            return Err(Fail(AhStatus::InvalidArgument, "samples must be >= 1".into()));
        }
        let theta = params(slice(theta, len, "theta")?)?;
        let mut tape = SecondOrderTape::record(p.inner.as_ref(), &theta, &Batch::Full)?;
        let d = estimate_with_operator(&mut tape, samples, &mut probe_rng(seed, iteration))?;
        slice_mut(out, len, "out")?.copy_from_slice(d.as_slice());
        Ok(())
    })
}

/// Replaces each block of `block_size` consecutive entries by its mean.
/// `out` may alias `diag`.
///
/// # Safety
/// `diag` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_spatial_average(
    diag: *const f64,
    len: usize,
    block_size: usize,
    out: *mut f64,
) -> AhStatus {
    guard(|| {
        let blocks = BlockSpec::single(len, block_size)?;
        let avg = spatial_average(&params(slice(diag, len, "diag")?)?, &blocks);
        slice_mut(out, len, "out")?.copy_from_slice(avg.as_slice());
        Ok(())
    })
}

/// Creates an optimizer over parameter groups of the given sizes (one per
/// model tensor); spatial averaging never crosses a group boundary.
///
/// # Safety
/// `hyper` must be valid, `groups` must hold `n_groups` sizes and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn ah_optimizer_new(
    hyper: *const AhHyper,
    groups: *const usize,
    n_groups: usize,
    block_size: usize,
    out: *mut *mut AhOptimizer,
) -> AhStatus {
    guard(|| {
        let hyper = *hyper.as_ref().ok_or_else(|| null("hyper"))?;
        if groups.is_null() {
            return Err(null("groups"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let groups = std::slice::from_raw_parts(groups, n_groups).to_vec();
        let blocks = BlockSpec::new(groups, block_size)?;
        let inner = AdaHessian::new(hyper.into(), blocks)?;
        *out = Box::into_raw(Box::new(AhOptimizer { inner }));
        Ok(())
    })
}

/// Releases an optimizer. NULL is ignored.
///
/// # Safety
/// `o` must come from [`ah_optimizer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ah_optimizer_free(o: *mut AhOptimizer) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Completed steps, or 0 for NULL.
///
/// # Safety
/// `o` must be NULL or a live optimizer handle.
#[no_mangle]
pub unsafe extern "C" fn ah_optimizer_iteration(o: *const AhOptimizer) -> u64 {
    o.as_ref().map_or(0, |o| o.inner.iteration())
}

/// One AdaHessian step updating `theta` in place. `diag` is a fresh raw
/// Hessian diagonal estimate (spatially averaged here), or NULL to reuse
/// the previous one. The first step requires an estimate. On failure
/// `theta` is unchanged.
///
/// # Safety
/// `theta`, `grad` and a non-NULL `diag` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ah_optimizer_step(
    o: *mut AhOptimizer,
    theta: *mut f64,
    grad: *const f64,
    diag: *const f64,
    len: usize,
    lr_scale: f64,
) -> AhStatus {
    guard(|| {
        let o = o.as_mut().ok_or_else(|| null("optimizer"))?;
        let out = slice_mut(theta, len, "theta")?;
        let mut theta = params(out)?;
        let grad = params(slice(grad, len, "grad")?)?;
        let diag = if diag.is_null() {
            None
        } else {
            Some(params(slice(diag, len, "diag")?)?)
        };
        o.inner.step(&mut theta, &grad, diag.as_ref(), lr_scale)?;
        out.copy_from_slice(theta.as_slice());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Config("x".into())), AhStatus::Config);
        assert_eq!(
            status_of(&Error::NonFiniteValue { what: "x", index: 0 }),
            AhStatus::NonFinite
        );
    }

    #[test]
    fn panics_become_internal_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, AhStatus::Internal);
        let msg = unsafe { CStr::from_ptr(ah_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ah_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
