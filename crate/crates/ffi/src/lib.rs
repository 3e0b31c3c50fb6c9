//! C interface to `rlct-core`.
//!
//! Every function returns an [`RlctStatus`]. On failure the message is kept
//! per thread and can be read with [`rlct_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;
use std::sync::Arc;

use rlct_core::estimators::{lambda_e_tilde, lambda_v1, lambda_vm, p_v_half, ReplicationPlan};
use rlct_core::sampler::{McmcConfig, TemperedChain};
use rlct_core::sbic::{posterior_model_probs, solve_sbic, EvidenceEntry, LogEvidenceTable, ModelPoset};
use rlct_core::zoo::ModelFamily;
use rlct_core::{Error, Model, RngPlan};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlctStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Numeric = 4,
    Data = 5,
    Io = 6,
    Panic = 7,
}

impl From<&Error> for RlctStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => RlctStatus::Config,
            Error::Domain(_) => RlctStatus::Domain,
            Error::Numeric(_) => RlctStatus::Numeric,
            Error::Data(_) => RlctStatus::Data,
            Error::Io(_) => RlctStatus::Io,
        }
    }
}

/// Retained log-likelihood draws of one tempered chain.
pub struct RlctChain(TemperedChain);

/// A model from the built-in families.
pub struct RlctModel {
    family: ModelFamily,
    model: Arc<dyn Model>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RlctStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RlctStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RlctStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            RlctStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            RlctStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rlct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rlct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Wraps `len` log-likelihood draws taken at inverse temperature `t`.
///
/// # Safety
/// `draws` must point to `len` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rlct_chain_new(
    draws: *const f64,
    len: usize,
    t: f64,
    out: *mut *mut RlctChain,
) -> RlctStatus {
    guard(|| {
        let draws = slice_in(draws, len, "draws")?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config(format!("t must be positive, got {t}")).into());
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::data("log-likelihood draws must be finite").into());
        }
        let chain = TemperedChain {
            t,
            loglik_draws: draws.to_vec(),
            param_draws: None,
            acceptance_rate: f64::NAN,
            ess_loglik: f64::NAN,
            unconstrained_mean: Vec::new(),
            warnings: Vec::new(),
        };
        write(out, Box::into_raw(Box::new(RlctChain(chain))), "out")
    })
}

/// # Safety
/// `chain` must come from [`rlct_chain_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rlct_chain_free(chain: *mut RlctChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// `t^2` times the variance of the draws.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_lambda_v1(chain: *const RlctChain, out: *mut f64) -> RlctStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        write(out, lambda_v1(&chain.0)?, "out")
    })
}

/// Variance of the draws; for a chain at `t = 1` this is half the
/// variance-based effective parameter count.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_p_v_half(chain: *const RlctChain, out: *mut f64) -> RlctStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        write(out, p_v_half(&chain.0)?, "out")
    })
}

/// Finite-difference estimate from one chain, the mean at `t + delta`
/// obtained by importance reweighting. `weight_ess` may be null.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_lambda_e_tilde(
    chain: *const RlctChain,
    delta: f64,
    out: *mut f64,
    weight_ess: *mut f64,
) -> RlctStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        let est = lambda_e_tilde(&chain.0, delta)?;
        if !weight_ess.is_null() {
            weight_ess.write(est.weight_ess);
        }
        write(out, est.value, "out")
    })
}

/// Builds a model by short name: `gmm2`, `normal_location`,
/// `binomial_mixture:<i>` or `rrr:<H>`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_model_new(name: *const c_char, out: *mut *mut RlctModel) -> RlctStatus {
    guard(|| {
        if name.is_null() {
            return Err(Failure::Null("name"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Error::config("model name is not UTF-8"))?;
        let family = ModelFamily::by_name(name)?;
        let model = family.build()?;
        write(out, Box::into_raw(Box::new(RlctModel { family, model })), "out")
    })
}

/// # Safety
/// `model` must come from [`rlct_model_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rlct_model_free(model: *mut RlctModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of constrained parameters.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_model_dim(model: *const RlctModel, out: *mut usize) -> RlctStatus {
    guard(|| {
        let model = deref(model, "model")?;
        write(out, model.model.dim(), "out")
    })
}

/// Sampler and replication settings for [`rlct_estimate_vm`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RlctVmSettings {
    pub n_s: usize,
    pub m: usize,
    /// Inverse temperature is `c / log n_s`.
    pub c: f64,
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// 0 picks the default thread count.
    pub workers: usize,
}

/// Default settings: `n_s = 1000`, `m = 25`, `c = 1` and the default
/// sampler length.
#[no_mangle]
pub extern "C" fn rlct_vm_settings_default() -> RlctVmSettings {
    let mcmc = McmcConfig::default();
    RlctVmSettings {
        n_s: 1000,
        m: 25,
        c: 1.0,
        n_iters: mcmc.n_iters,
        burn_in: mcmc.burn_in,
        thin: mcmc.thin,
        seed: 1,
        workers: 0,
    }
}

/// Mean over `m` simulated datasets of the single-dataset variance
/// estimate. `truth_params` may be null for the family's default truth.
/// `std_error` may be null.
///
/// # Safety
/// Handles must be live, `truth_params` must hold `truth_len` doubles when
/// non-null, and `lambda` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rlct_estimate_vm(
    fit: *const RlctModel,
    truth: *const RlctModel,
    truth_params: *const f64,
    truth_len: usize,
    settings: *const RlctVmSettings,
    lambda: *mut f64,
    std_error: *mut f64,
) -> RlctStatus {
    guard(|| {
        let fit = deref(fit, "fit")?;
        let truth = deref(truth, "truth")?;
        let s = deref(settings, "settings")?;
        let params = if truth_params.is_null() {
            truth.family.default_truth()?
        } else {
            slice_in(truth_params, truth_len, "truth_params")?.to_vec()
        };
        let plan = ReplicationPlan::new(s.n_s, s.m, s.c, params);
        let mcmc = McmcConfig::new(s.n_iters, s.burn_in, s.thin);
        let workers = (s.workers > 0).then_some(s.workers);
        let est = lambda_vm(fit.model.as_ref(), truth.model.as_ref(), &plan, &mcmc, &RngPlan::new(s.seed), workers)?;
        if !std_error.is_null() {
            std_error.write(est.std_error);
        }
        write(lambda, est.lambda_hat, "lambda")
    })
}

/// Solves the singular-BIC equations for `k` models.
///
/// `leq` is a row-major `k x k` byte matrix with `leq[a*k + b] != 0` when
/// model `a` is nested in model `b`. `lambda` is row-major with entry
/// `[i*k + j]` the learning coefficient of model `i` at a truth in model
/// `j`; only pairs with `j <= i` are read. `mult` has the same layout and
/// may be null for multiplicity one. Scores (log marginal likelihood
/// approximations) are written to `scores`.
///
/// # Safety
/// Every non-null array must have the stated length.
#[no_mangle]
pub unsafe extern "C" fn rlct_sbic_solve(
    k: usize,
    leq: *const u8,
    priors: *const f64,
    n: usize,
    log_max_lik: *const f64,
    lambda: *const f64,
    mult: *const u32,
    scores: *mut f64,
) -> RlctStatus {
    guard(|| {
        if k == 0 {
            return Err(Error::config("need at least one model").into());
        }
        let leq = slice_in(leq, k * k, "leq")?;
        let priors = slice_in(priors, k, "priors")?;
        let ll = slice_in(log_max_lik, k, "log_max_lik")?;
        let lambda = slice_in(lambda, k * k, "lambda")?;
        let mult = if mult.is_null() { None } else { Some(slice_in(mult, k * k, "mult")?) };
        let out = slice_out(scores, k, "scores")?;
        let rows = (0..k).map(|a| (0..k).map(|b| leq[a * k + b] != 0).collect()).collect();
        let names = (1..=k).map(|i| format!("M{i}")).collect();
        let poset = ModelPoset::new(names, rows, priors.to_vec())?;
        let mut table = LogEvidenceTable::new(n)?;
        for i in 0..k {
            for j in poset.below(i) {
                let entry = EvidenceEntry {
                    log_max_lik: ll[i],
                    lambda: lambda[i * k + j],
                    mult: mult.map_or(1, |m| m[i * k + j]),
                };
                table.insert(i, j, entry)?;
            }
        }
        out.copy_from_slice(&solve_sbic(&poset, &table)?);
        Ok(())
    })
}

/// Posterior model probabilities from scores and prior weights.
///
/// # Safety
/// `scores`, `priors` and `probs` must each hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn rlct_posterior_probs(
    k: usize,
    scores: *const f64,
    priors: *const f64,
    probs: *mut f64,
) -> RlctStatus {
    guard(|| {
        let scores = slice_in(scores, k, "scores")?;
        let priors = slice_in(priors, k, "priors")?;
        let out = slice_out(probs, k, "probs")?;
        out.copy_from_slice(&posterior_model_probs(scores, priors)?);
        Ok(())
    })
}
