//! Learning-coefficient estimators and posterior complexity measures
//! computed from tempered chains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Lane, Model, RngPlan, StreamRng, MAX_SIMULATION_SIZE};
use crate::sampler::{mcse_mean, mcse_variance, mean_var, sample_tempered, McmcConfig, TemperedChain, TemperingConfig};

/// Importance-weight ESS below which the one-chain estimator warns.
pub const LOW_WEIGHT_ESS: f64 = 10.0;

/// How many datasets to simulate and at which size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub n_s: usize,
    pub m: usize,
    pub c: f64,
    pub generating_params: Vec<f64>,
}

impl ReplicationPlan {
    pub fn new(n_s: usize, m: usize, c: f64, generating_params: Vec<f64>) -> Self {
        Self { n_s, m, c, generating_params }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s < 2 {
            return Err(Error::config("n_s must be at least 2"));
        }
        if self.n_s > MAX_SIMULATION_SIZE {
            return Err(Error::config(format!("n_s must not exceed {MAX_SIMULATION_SIZE}")));
        }
        if self.m == 0 {
            return Err(Error::config("m must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config("c must be positive"));
        }
        Ok(())
    }

    pub fn temperature(&self) -> Result<f64> {
        TemperingConfig::with_c(self.c).resolve(self.n_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlctEstimate {
    pub model: String,
    pub truth: String,
    pub lambda_hat: f64,
    /// Replicate s.d. over `sqrt(m)`. With one replicate this is the Monte
    /// Carlo error of that replicate instead.
    pub std_error: f64,
    pub m: usize,
    pub n_s: usize,
    pub c: f64,
    pub per_replicate: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RlctEstimate {
    pub const CSV_HEADER: [&'static str; 8] =
        ["model_i", "truth_j", "n_s", "m", "c", "lambda_hat", "std_error", "warnings"];

    pub fn csv_record(&self) -> [String; 8] {
        [
            self.model.clone(),
            self.truth.clone(),
            self.n_s.to_string(),
            self.m.to_string(),
            self.c.to_string(),
            self.lambda_hat.to_string(),
            self.std_error.to_string(),
            self.warnings.join("; "),
        ]
    }
}

/// Settings of the finite-difference estimators: `t = c / log n`,
/// `Delta = d / log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EEstimatorConfig {
    pub c: f64,
    pub d: f64,
}

impl Default for EEstimatorConfig {
    fn default() -> Self {
        Self { c: 1.0, d: 1.0 }
    }
}

impl EEstimatorConfig {
    /// `(t, Delta)` for a sample of size `n`.
    pub fn resolve(&self, n: usize) -> Result<(f64, f64)> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::config(format!(
                "d must be positive (Delta = 0 leaves the estimator undefined), got {}",
                self.d
            )));
        }
        let t = TemperingConfig::with_c(self.c).resolve(n)?;
        Ok((t, self.d / (n as f64).ln()))
    }
}

fn require_draws(chain: &TemperedChain) -> Result<()> {
    if chain.len() < 2 {
        return Err(Error::numeric(format!("need at least 2 retained draws, have {}", chain.len())));
    }
    Ok(())
}

/// `t^2 V^t[loglik]` from one chain.
pub fn lambda_v1(chain: &TemperedChain) -> Result<f64> {
    require_draws(chain)?;
    Ok(chain.t * chain.t * mean_var(&chain.loglik_draws).1)
}

/// Runs one replicate: simulate, sample at `t = c / log n_s`, return the
/// estimate and the chain warnings.
fn one_replicate(
    fit: &dyn Model,
    truth: &dyn Model,
    plan: &ReplicationPlan,
    t: f64,
    mcmc: &McmcConfig,
    rngs: &RngPlan,
    k: usize,
) -> Result<(f64, f64, Vec<String>)> {
    let mut data_rng = rngs.stream(k as u64, Lane::DATA);
    let data = truth.simulate(&plan.generating_params, plan.n_s, &mut data_rng);
    let mut chain_rng = rngs.stream(k as u64, Lane::CHAIN);
    let chain = sample_tempered(fit, &data, t, mcmc, &mut chain_rng)?;
    let value = lambda_v1(&chain)?;
    let mcse = t * t * mcse_variance(&chain.loglik_draws);
    let warnings = chain.warnings.into_iter().map(|w| format!("replicate {k}: {w}")).collect();
    Ok((value, mcse, warnings))
}

/// Runs `f(k)` for `k in 0..count` on `workers` threads (all available
/// when `None`), keeping results in index order.
pub fn run_indexed<T, F>(count: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    let run = || (0..count).into_par_iter().map(&f).collect::<Vec<_>>();
    let results = match workers {
        Some(0) => return Err(Error::config("worker count must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

/// Mean of `m` single-dataset variance estimates, each on its own simulated
/// dataset from `truth` at `plan.generating_params`.
pub fn lambda_vm(
    fit: &dyn Model,
    truth: &dyn Model,
    plan: &ReplicationPlan,
    mcmc: &McmcConfig,
    rngs: &RngPlan,
    workers: Option<usize>,
) -> Result<RlctEstimate> {
    plan.validate()?;
    mcmc.validate()?;
    if plan.generating_params.len() != truth.dim() {
        return Err(Error::config(format!(
            "truth {} takes {} parameters, got {}",
            truth.name(),
            truth.dim(),
            plan.generating_params.len()
        )));
    }
    truth.transform().to_unconstrained(&plan.generating_params).map_err(|e| {
        Error::config(format!("generating parameters are not interior: {e}"))
    })?;
    let t = plan.temperature()?;
    let results = run_indexed(plan.m, workers, |k| one_replicate(fit, truth, plan, t, mcmc, rngs, k))?;

    let per_replicate: Vec<f64> = results.iter().map(|r| r.0).collect();
    let lambda_hat = per_replicate.iter().sum::<f64>() / plan.m as f64;
    let std_error = if plan.m == 1 {
        results[0].1
    } else {
        let ss: f64 = per_replicate.iter().map(|v| (v - lambda_hat).powi(2)).sum();
        (ss / (plan.m - 1) as f64).sqrt() / (plan.m as f64).sqrt()
    };
    Ok(RlctEstimate {
        model: fit.name(),
        truth: truth.name(),
        lambda_hat,
        std_error,
        m: plan.m,
        n_s: plan.n_s,
        c: plan.c,
        per_replicate,
        warnings: results.into_iter().flat_map(|r| r.2).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferenceEstimate {
    pub value: f64,
    pub t: f64,
    pub delta: f64,
    pub mean_at_t: f64,
    pub mean_at_t_delta: f64,
    /// Importance-weight ESS; equals the draw count for the two-chain form.
    pub weight_ess: f64,
    pub warnings: Vec<String>,
}

fn finite_difference(t: f64, delta: f64, diff: f64) -> f64 {
    t * (t + delta) * diff / delta
}

/// Two-chain finite difference of `E^t[loglik]` between `t` and `t + Delta`.
/// The chains use the two supplied streams.
pub fn lambda_e(
    model: &dyn Model,
    data: &Dataset,
    cfg: &EEstimatorConfig,
    mcmc: &McmcConfig,
    rng_t: &mut StreamRng,
    rng_shifted: &mut StreamRng,
) -> Result<FiniteDifferenceEstimate> {
    let (t, delta) = cfg.resolve(data.n())?;
    let low = sample_tempered(model, data, t, mcmc, rng_t)?;
    let high = sample_tempered(model, data, t + delta, mcmc, rng_shifted)?;
    let e_low = mean_var(&low.loglik_draws).0;
    let e_high = mean_var(&high.loglik_draws).0;
    let mut warnings = low.warnings;
    warnings.extend(high.warnings);
    Ok(FiniteDifferenceEstimate {
        value: finite_difference(t, delta, e_high - e_low),
        t,
        delta,
        mean_at_t: e_low,
        mean_at_t_delta: e_high,
        weight_ess: low.loglik_draws.len().min(high.loglik_draws.len()) as f64,
        warnings,
    })
}

/// One-chain variant: `E^{t+Delta}` is obtained by reweighting the draws at
/// `t` with `exp(Delta * loglik)`.
pub fn lambda_e_tilde(chain: &TemperedChain, delta: f64) -> Result<FiniteDifferenceEstimate> {
    require_draws(chain)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(format!("Delta must be positive, got {delta}")));
    }
    let draws = &chain.loglik_draws;
    let (mean, _) = mean_var(draws);
    let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut sw, mut sw2, mut swx) = (0.0, 0.0, 0.0);
    for &l in draws {
        let w = (delta * (l - max)).exp();
        sw += w;
        sw2 += w * w;
        swx += w * (l - mean);
    }
    let shift = swx / sw;
    let weight_ess = sw * sw / sw2;
    let mut warnings = Vec::new();
    if weight_ess < LOW_WEIGHT_ESS {
        warnings.push(format!("importance weights degenerate (ESS {weight_ess:.2})"));
    }
    let t = chain.t;
    Ok(FiniteDifferenceEstimate {
        value: finite_difference(t, delta, shift),
        t,
        delta,
        mean_at_t: mean,
        mean_at_t_delta: mean + shift,
        weight_ess,
        warnings,
    })
}

/// `V^1[loglik]` from a chain at `t = 1`.
pub fn p_v_half(chain: &TemperedChain) -> Result<f64> {
    require_draws(chain)?;
    Ok(mean_var(&chain.loglik_draws).1)
}

/// `-2 E^1[loglik] + 2 loglik(theta_bar)` where `theta_bar` is the
/// posterior mean in unconstrained coordinates mapped back to the model.
pub fn p_d(chain: &TemperedChain, model: &dyn Model, data: &Dataset) -> Result<f64> {
    require_draws(chain)?;
    if chain.unconstrained_mean.len() != model.dim() {
        return Err(Error::config("chain does not belong to this model"));
    }
    let (theta_bar, _) = model.transform().from_unconstrained(&chain.unconstrained_mean);
    let at_mean = model.log_lik(&theta_bar, data);
    if !at_mean.is_finite() {
        return Err(Error::numeric("log-likelihood at the posterior mean is not finite"));
    }
    Ok(-2.0 * mean_var(&chain.loglik_draws).0 + 2.0 * at_mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbicValue {
    pub value: f64,
    pub std_error: f64,
    pub warnings: Vec<String>,
}

/// `E^{1/log n}[loglik]` from one chain.
pub fn wbic(model: &dyn Model, data: &Dataset, mcmc: &McmcConfig, rng: &mut StreamRng) -> Result<WbicValue> {
    let t = TemperingConfig::default().resolve(data.n())?;
    let chain = sample_tempered(model, data, t, mcmc, rng)?;
    Ok(WbicValue {
        value: mean_var(&chain.loglik_draws).0,
        std_error: mcse_mean(&chain.loglik_draws),
        warnings: chain.warnings,
    })
}
