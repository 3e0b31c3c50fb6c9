//! Tempered posterior sampling: adaptive random-walk Metropolis on
//! unconstrained coordinates, plus a grid quadrature oracle for low
//! dimensions.

pub mod diagnostics;
mod quadrature;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use diagnostics::{effective_sample_size, mcse_mean, mcse_variance, mean_var};
pub use quadrature::{quadrature_tempered_moments, QuadratureGrid, QuadratureMoments};

use crate::error::{Error, Result};
use crate::model::{Dataset, Model, StreamRng};

/// Retained-draw ESS below which a chain carries a warning.
pub const LOW_ESS: f64 = 50.0;
/// Minimum number of retained draws a configuration must produce.
pub const MIN_RETAINED: usize = 100;
const INIT_ATTEMPTS: usize = 100;

/// Inverse temperature `t = c / log n`, or a fixed override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperingConfig {
    pub c: f64,
    pub t: Option<f64>,
}

impl Default for TemperingConfig {
    fn default() -> Self {
        Self { c: 1.0, t: None }
    }
}

impl TemperingConfig {
    pub fn with_c(c: f64) -> Self {
        Self { c, t: None }
    }

    /// Resolves the temperature for a sample of size `n`.
    pub fn resolve(&self, n: usize) -> Result<f64> {
        let t = match self.t {
            Some(t) => t,
            None => {
                if n < 2 {
                    return Err(Error::config("temperature c / log n needs n >= 2"));
                }
                if !(self.c > 0.0 && self.c.is_finite()) {
                    return Err(Error::config(format!("c must be positive, got {}", self.c)));
                }
                self.c / (n as f64).ln()
            }
        };
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!("inverse temperature {t} outside (0, 1]")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub initial_scale: f64,
    /// Keep constrained parameters of retained draws.
    pub keep_params: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iters: 60_000,
            burn_in: 10_000,
            thin: 5,
            target_accept: 0.3,
            initial_scale: 0.1,
            keep_params: false,
        }
    }
}

impl McmcConfig {
    pub fn new(n_iters: usize, burn_in: usize, thin: usize) -> Self {
        Self { n_iters, burn_in, thin, ..Self::default() }
    }

    pub fn retained(&self) -> usize {
        (self.n_iters.saturating_sub(self.burn_in)) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.burn_in >= self.n_iters {
            return Err(Error::config(format!(
                "burn_in ({}) must be smaller than n_iters ({})",
                self.burn_in, self.n_iters
            )));
        }
        if self.retained() < MIN_RETAINED {
            return Err(Error::config(format!(
                "configuration retains {} draws; at least {MIN_RETAINED} required",
                self.retained()
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target_accept must lie in (0, 1)"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::config("initial_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperedChain {
    pub t: f64,
    pub loglik_draws: Vec<f64>,
    pub param_draws: Option<Vec<Vec<f64>>>,
    pub acceptance_rate: f64,
    pub ess_loglik: f64,
    /// Mean of the retained draws in unconstrained coordinates.
    pub unconstrained_mean: Vec<f64>,
    pub warnings: Vec<String>,
}

impl TemperedChain {
    pub fn len(&self) -> usize {
        self.loglik_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loglik_draws.is_empty()
    }

    pub fn mcse_mean_loglik(&self) -> f64 {
        mcse_mean(&self.loglik_draws)
    }

    pub fn mcse_var_loglik(&self) -> f64 {
        mcse_variance(&self.loglik_draws)
    }
}

/// Sample mean of the retained log-likelihood draws.
pub fn posterior_mean_loglik(chain: &TemperedChain) -> f64 {
    mean_var(&chain.loglik_draws).0
}

/// Sample variance (denominator: number of draws) of the retained
/// log-likelihood draws.
pub fn posterior_var_loglik(chain: &TemperedChain) -> f64 {
    mean_var(&chain.loglik_draws).1
}

/// Output of [`random_walk_metropolis`].
#[derive(Debug, Clone)]
pub struct KernelRun {
    /// Tracked statistic of each retained state.
    pub tracked: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    pub acceptance_rate: f64,
    pub mean_state: Vec<f64>,
    pub final_scale: f64,
}

/// Running mean and variance per coordinate.
struct Welford {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }
}

/// Random-walk Metropolis on `R^d`.
///
/// `target` returns the log density and a tracked statistic, or `None` for a
/// state outside the support. During burn-in the global scale follows a
/// Robbins-Monro recursion toward `target_accept`, and the per-coordinate
/// proposal widths are re-estimated from two windows of burn-in draws. After
/// burn-in the kernel is frozen.
pub fn random_walk_metropolis<F>(
    mut target: F,
    init: Vec<f64>,
    mcmc: &McmcConfig,
    keep_states: bool,
    rng: &mut StreamRng,
) -> Result<KernelRun>
where
    F: FnMut(&[f64]) -> Option<(f64, f64)>,
{
    mcmc.validate()?;
    let d = init.len();
    if d == 0 {
        return Err(Error::config("cannot sample a model without free parameters"));
    }
    let (mut cur_lp, mut cur_stat) =
        target(&init).ok_or_else(|| Error::numeric("initial state has non-finite log density"))?;
    let mut cur = init;
    let mut prop = vec![0.0; d];
    let mut widths = vec![1.0; d];
    let default_scale = 2.38 / (d as f64).sqrt();
    let mut log_scale = mcmc.initial_scale.ln();
    let mut rm_step = 0usize;

    let burn = mcmc.burn_in;
    let windows = [(burn / 4, burn / 2), (burn / 2, 3 * burn / 4)];
    let mut window_stats = Welford::new(d);

    let retained = mcmc.retained();
    let mut tracked = Vec::with_capacity(retained);
    let mut states = keep_states.then(|| Vec::with_capacity(retained));
    let mut mean_stats = Welford::new(d);
    let mut accepted = 0usize;

    for iter in 0..mcmc.n_iters {
        let scale = log_scale.exp();
        for ((p, c), w) in prop.iter_mut().zip(&cur).zip(&widths) {
            let z: f64 = rng.sample(StandardNormal);
            *p = c + scale * w * z;
        }
        let log_u: f64 = rng.random::<f64>().ln();
        let mut accept_prob = 0.0;
        if let Some((lp, stat)) = target(&prop) {
            let log_ratio = lp - cur_lp;
            accept_prob = log_ratio.exp().min(1.0);
            if log_u < log_ratio {
                std::mem::swap(&mut cur, &mut prop);
                cur_lp = lp;
                cur_stat = stat;
                if iter >= burn {
                    accepted += 1;
                }
            }
        }

        if iter < burn {
            rm_step += 1;
            log_scale += (accept_prob - mcmc.target_accept) / (rm_step as f64).powf(0.6);
            log_scale = log_scale.clamp(-30.0, 10.0);
            for &(start, end) in &windows {
                if iter >= start && iter < end {
                    window_stats.push(&cur);
                }
                if iter + 1 == end && window_stats.count >= 20.0 {
                    let n = window_stats.count;
                    for (w, m2) in widths.iter_mut().zip(&window_stats.m2) {
                        let var = m2 / (n - 1.0);
                        if var > 0.0 {
                            let shrunk = (n * var + 5.0e-6) / (n + 5.0);
                            *w = shrunk.sqrt();
                        }
                    }
                    window_stats = Welford::new(d);
                    log_scale = default_scale.ln();
                    rm_step = 0;
                }
            }
        } else if (iter - burn + 1) % mcmc.thin == 0 && tracked.len() < retained {
            tracked.push(cur_stat);
            mean_stats.push(&cur);
            if let Some(s) = states.as_mut() {
                s.push(cur.clone());
            }
        }
    }

    Ok(KernelRun {
        tracked,
        states,
        acceptance_rate: accepted as f64 / (mcmc.n_iters - burn) as f64,
        mean_state: mean_stats.mean,
        final_scale: log_scale.exp(),
    })
}

/// Draws from `p(X|theta)^t phi(theta)` for `data` under `model`.
pub fn sample_tempered(
    model: &dyn Model,
    data: &Dataset,
    t: f64,
    mcmc: &McmcConfig,
    rng: &mut StreamRng,
) -> Result<TemperedChain> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::config(format!("inverse temperature must be finite and >= 0, got {t}")));
    }
    mcmc.validate()?;
    model.check_data(data)?;
    let transform = model.transform();
    if transform.dim() == 0 {
        return Err(Error::config(format!("model {} has no free parameters", model.name())));
    }
    let loglik = model.bind(data);
    let mut theta = vec![0.0; model.dim()];
    let mut target = |u: &[f64]| -> Option<(f64, f64)> {
        let log_jac = transform.from_unconstrained_into(u, &mut theta);
        let lp = model.log_prior(&theta);
        if !(lp.is_finite() && log_jac.is_finite()) {
            return None;
        }
        let ll = loglik(&theta);
        if !ll.is_finite() {
            return None;
        }
        Some((t * ll + lp + log_jac, ll))
    };

    let mut init = model
        .warm_start(data, rng)
        .and_then(|p| transform.to_unconstrained(&p).ok())
        .map(|(u, _)| u)
        .filter(|u| target(u).is_some());
    for _ in 0..INIT_ATTEMPTS {
        if init.is_some() {
            break;
        }
        let candidate = model.initial_params(rng);
        if let Ok((u, _)) = transform.to_unconstrained(&candidate) {
            if target(&u).is_some() {
                init = Some(u);
            }
        }
    }
    let init = init.ok_or_else(|| {
        Error::numeric(format!(
            "no finite starting point for {} after {INIT_ATTEMPTS} prior draws",
            model.name()
        ))
    })?;

    let run = random_walk_metropolis(target, init, mcmc, mcmc.keep_params, rng)?;
    let ess = effective_sample_size(&run.tracked);
    let mut warnings = Vec::new();
    if ess < LOW_ESS {
        warnings.push(format!("low effective sample size {ess:.1} for loglik at t = {t:.4}"));
    }
    if run.acceptance_rate == 0.0 || run.acceptance_rate == 1.0 {
        warnings.push(format!("degenerate acceptance rate {}", run.acceptance_rate));
    }
    let param_draws = run
        .states
        .map(|states| states.iter().map(|u| transform.from_unconstrained(u).0).collect());
    Ok(TemperedChain {
        t,
        loglik_draws: run.tracked,
        param_draws,
        acceptance_rate: run.acceptance_rate,
        ess_loglik: ess,
        unconstrained_mean: run.mean_state,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, RngPlan};
    use crate::zoo::{gmm2_model, normal_location_model, ConjugateSummary};
    use rand_distr::{Distribution, Normal};

    fn normal_data(n: usize, seed: u64) -> Dataset {
        let mut rng = RngPlan::new(seed).stream(0, Lane::DATA);
        let dist = Normal::new(0.3, 1.0).unwrap();
        Dataset::from_scalars((0..n).map(|_| dist.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert_eq!(McmcConfig::default().retained(), 10_000);
        assert!(McmcConfig::new(100, 100, 1).validate().is_err());
        assert!(McmcConfig::new(1000, 100, 0).validate().is_err());
        assert!(McmcConfig::new(599, 100, 5).validate().is_err());
        assert!(McmcConfig { target_accept: 1.0, ..McmcConfig::default() }.validate().is_err());
    }

    #[test]
    fn tempering_resolution() {
        let t = TemperingConfig::default().resolve(1000).unwrap();
        assert!((t - 1.0 / 1000f64.ln()).abs() < 1e-15);
        assert!(TemperingConfig::default().resolve(1).is_err());
        assert!(TemperingConfig::with_c(0.0).resolve(100).is_err());
        assert!(TemperingConfig { c: 1.0, t: Some(1.5) }.resolve(100).is_err());
        assert_eq!(TemperingConfig { c: 1.0, t: Some(0.5) }.resolve(1).unwrap(), 0.5);
    }

    #[test]
    fn moments_of_simple_series() {
        let mut chain = TemperedChain {
            t: 1.0,
            loglik_draws: vec![0.0, 2.0],
            param_draws: None,
            acceptance_rate: 0.5,
            ess_loglik: 2.0,
            unconstrained_mean: vec![],
            warnings: vec![],
        };
        assert_eq!(posterior_mean_loglik(&chain), 1.0);
        assert_eq!(posterior_var_loglik(&chain), 1.0);
        chain.loglik_draws = vec![-4.0; 7];
        assert_eq!(posterior_var_loglik(&chain), 0.0);
    }

    #[test]
    fn conjugate_normal_matches_closed_form() {
        let model = normal_location_model();
        let data = normal_data(50, 11);
        let summary = ConjugateSummary::new(&data);
        for (k, &t) in [1.0 / 50f64.ln(), 1.0].iter().enumerate() {
            let cfg = McmcConfig { keep_params: true, ..McmcConfig::new(60_000, 10_000, 5) };
            let mut rng = RngPlan::new(3).stream(k as u64, Lane::CHAIN);
            let chain = sample_tempered(&model, &data, t, &cfg, &mut rng).unwrap();
            assert_eq!(chain.len(), 10_000);
            assert!(chain.acceptance_rate > 0.0 && chain.acceptance_rate < 1.0);

            let theta: Vec<f64> = chain.param_draws.as_ref().unwrap().iter().map(|p| p[0]).collect();
            let (mean, var) = summary.tempered_posterior(t);
            let (m_hat, v_hat) = mean_var(&theta);
            assert!((m_hat - mean).abs() < 3.0 * mcse_mean(&theta), "t={t} mean {m_hat} vs {mean}");
            assert!((v_hat - var).abs() < 3.0 * mcse_variance(&theta), "t={t} var {v_hat} vs {var}");

            let (e, v) = summary.tempered_loglik_moments(t);
            let e_hat = posterior_mean_loglik(&chain);
            let v_hat = posterior_var_loglik(&chain);
            assert!((e_hat - e).abs() < 3.0 * chain.mcse_mean_loglik(), "t={t} E {e_hat} vs {e}");
            assert!((v_hat - v).abs() < 3.0 * chain.mcse_var_loglik(), "t={t} V {v_hat} vs {v}");
        }
    }

    #[test]
    fn zero_temperature_samples_the_prior() {
        let model = gmm2_model();
        let data = Dataset::from_scalars(vec![0.1, -0.4, 2.0]).unwrap();
        let cfg = McmcConfig { keep_params: true, ..McmcConfig::new(60_000, 10_000, 5) };
        let mut rng = RngPlan::new(8).stream(0, Lane::CHAIN);
        let chain = sample_tempered(&model, &data, 0.0, &cfg, &mut rng).unwrap();
        let alpha: Vec<f64> = chain.param_draws.unwrap().iter().map(|p| p[0]).collect();
        let (m, _) = mean_var(&alpha);
        assert!((m - 0.5).abs() < 3.0 * mcse_mean(&alpha), "{m}");
    }

    #[test]
    fn discretised_target_is_stationary() {
        let weights = [1.0, 3.0, 2.0, 5.0, 0.5];
        let total: f64 = weights.iter().sum();
        let target = |u: &[f64]| -> Option<(f64, f64)> {
            let x = u[0];
            if (0.0..5.0).contains(&x) {
                Some((weights[x as usize].ln(), x.floor()))
            } else {
                None
            }
        };
        let cfg = McmcConfig::new(1_010_000, 10_000, 1);
        let mut rng = RngPlan::new(21).stream(0, Lane::AUX);
        let run = random_walk_metropolis(target, vec![2.5], &cfg, false, &mut rng).unwrap();
        let mut counts = [0.0; 5];
        for &bin in &run.tracked {
            counts[bin as usize] += 1.0;
        }
        let n = run.tracked.len() as f64;
        let tv: f64 =
            0.5 * counts.iter().zip(&weights).map(|(c, w)| (c / n - w / total).abs()).sum::<f64>();
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn chains_are_deterministic() {
        let model = gmm2_model();
        let data = Dataset::from_scalars(vec![0.1, -0.4, 2.0, 0.7]).unwrap();
        let cfg = McmcConfig::new(3_000, 1_000, 2);
        let a = sample_tempered(&model, &data, 0.5, &cfg, &mut RngPlan::new(6).stream(1, Lane::CHAIN));
        let b = sample_tempered(&model, &data, 0.5, &cfg, &mut RngPlan::new(6).stream(1, Lane::CHAIN));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let model = crate::zoo::rrr_model(2, 2, 1).unwrap();
        let data = Dataset::from_scalars(vec![1.0, 2.0]).unwrap();
        let cfg = McmcConfig::new(3_000, 1_000, 2);
        let err = sample_tempered(&model, &data, 0.5, &cfg, &mut RngPlan::new(1).stream(0, Lane::CHAIN));
        assert!(matches!(err, Err(Error::Data(_))));
        let rank0 = crate::zoo::rrr_model(2, 2, 0).unwrap();
        let data = Dataset::new(vec![1.0; 8], 4).unwrap();
        let err = sample_tempered(&rank0, &data, 0.5, &cfg, &mut RngPlan::new(1).stream(0, Lane::CHAIN));
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
