//! Expectation-maximisation for the one-dimensional mixture families.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::zoo::MleResult;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MixtureFamily {
    /// Unit-variance Gaussian components; locations are means.
    GaussianUnitVariance { components: usize },
    /// Binomial components with a fixed number of trials; locations are
    /// success probabilities.
    Binomial { components: usize, trials: u32 },
}

impl MixtureFamily {
    pub fn components(&self) -> usize {
        match *self {
            MixtureFamily::GaussianUnitVariance { components }
            | MixtureFamily::Binomial { components, .. } => components,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { restarts: 20, tol: 1e-8, max_iter: 2000 }
    }
}

/// Distinct values and their multiplicities.
struct Weighted {
    values: Vec<f64>,
    counts: Vec<f64>,
    total: f64,
}

impl Weighted {
    fn new(data: &Dataset) -> Self {
        let mut sorted = data.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for x in sorted {
            if values.last() == Some(&x) {
                *counts.last_mut().unwrap() += 1.0;
            } else {
                values.push(x);
                counts.push(1.0);
            }
        }
        let total = counts.iter().sum();
        Self { values, counts, total }
    }
}

struct Kernel {
    family: MixtureFamily,
    ln_choose: Vec<f64>,
}

impl Kernel {
    fn new(family: MixtureFamily) -> Self {
        let ln_choose = match family {
            MixtureFamily::Binomial { trials, .. } => {
                let k = trials as usize;
                let mut lf = vec![0.0; k + 1];
                for x in 1..=k {
                    lf[x] = lf[x - 1] + (x as f64).ln();
                }
                (0..=k).map(|x| lf[k] - lf[x] - lf[k - x]).collect()
            }
            _ => Vec::new(),
        };
        Self { family, ln_choose }
    }

    fn log_density(&self, x: f64, loc: f64) -> f64 {
        match self.family {
            MixtureFamily::GaussianUnitVariance { .. } => -LN_SQRT_2PI - 0.5 * (x - loc) * (x - loc),
            MixtureFamily::Binomial { trials, .. } => {
                let k = trials as f64;
                let a = if x == 0.0 { 0.0 } else { x * loc.ln() };
                let b = if x == k { 0.0 } else { (k - x) * (-loc).ln_1p() };
                self.ln_choose[x as usize] + a + b
            }
        }
    }

    /// Location from a weighted mean of observations.
    fn location(&self, mean: f64) -> f64 {
        match self.family {
            MixtureFamily::GaussianUnitVariance { .. } => mean,
            MixtureFamily::Binomial { trials, .. } => mean / trials as f64,
        }
    }

    fn clamp(&self, loc: f64) -> f64 {
        match self.family {
            MixtureFamily::GaussianUnitVariance { .. } => loc,
            MixtureFamily::Binomial { .. } => loc.clamp(1e-3, 1.0 - 1e-3),
        }
    }
}

struct RunResult {
    weights: Vec<f64>,
    locs: Vec<f64>,
    loglik: f64,
    trace: Vec<f64>,
    converged: bool,
}

fn run_em(
    kernel: &Kernel,
    data: &Weighted,
    mut weights: Vec<f64>,
    mut locs: Vec<f64>,
    cfg: &EmConfig,
) -> RunResult {
    let k = weights.len();
    let n_vals = data.values.len();
    let mut resp = vec![0.0; n_vals * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iter {
        // E-step, also yields the log-likelihood at the current parameters
        let mut loglik = 0.0;
        let ln_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        for (v, (&x, &c)) in data.values.iter().zip(&data.counts).enumerate() {
            let row = &mut resp[v * k..(v + 1) * k];
            let mut hi = f64::NEG_INFINITY;
            for h in 0..k {
                row[h] = ln_w[h] + kernel.log_density(x, locs[h]);
                hi = hi.max(row[h]);
            }
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - hi).exp();
                s += *r;
            }
            for r in row.iter_mut() {
                *r /= s;
            }
            loglik += c * (hi + s.ln());
        }
        trace.push(loglik);
        if (loglik - prev).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev = loglik;
        // M-step
        for h in 0..k {
            let mut mass = 0.0;
            let mut first = 0.0;
            for (v, (&x, &c)) in data.values.iter().zip(&data.counts).enumerate() {
                let w = c * resp[v * k + h];
                mass += w;
                first += w * x;
            }
            weights[h] = mass / data.total;
            if mass > 1e-300 {
                locs[h] = kernel.location(first / mass);
            }
        }
    }
    let loglik = *trace.last().unwrap_or(&f64::NEG_INFINITY);
    RunResult { weights, locs, loglik, trace, converged }
}

fn quantile_start(kernel: &Kernel, data: &Weighted, k: usize) -> (Vec<f64>, Vec<f64>) {
    // k groups of (nearly) equal mass along the sorted sample
    let mut locs = Vec::with_capacity(k);
    let per = data.total / k as f64;
    let mut cursor = 0usize;
    let mut left = data.counts.first().copied().unwrap_or(0.0);
    for _ in 0..k {
        let mut need = per;
        let mut sum = 0.0;
        let mut mass = 0.0;
        while need > 1e-12 && cursor < data.values.len() {
            let take = left.min(need);
            sum += take * data.values[cursor];
            mass += take;
            need -= take;
            left -= take;
            if left <= 1e-12 {
                cursor += 1;
                left = data.counts.get(cursor).copied().unwrap_or(0.0);
            }
        }
        let mean = if mass > 0.0 { sum / mass } else { *data.values.last().unwrap() };
        locs.push(kernel.clamp(kernel.location(mean)));
    }
    (vec![1.0 / k as f64; k], locs)
}

fn random_start(kernel: &Kernel, data: &Weighted, k: usize, rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).map(|e: f64| e + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let n_vals = data.values.len();
    let picks: Vec<usize> = if n_vals >= k {
        sample_indices(rng, n_vals, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..n_vals)).collect()
    };
    let locs = picks
        .into_iter()
        .map(|idx| {
            let jitter = 0.1 * (rng.random::<f64>() - 0.5);
            let x = data.values[idx];
            match kernel.family {
                MixtureFamily::GaussianUnitVariance { .. } => x + jitter,
                MixtureFamily::Binomial { .. } => kernel.clamp(kernel.location(x) + 0.1 * jitter),
            }
        })
        .collect();
    (weights, locs)
}

/// Best EM fixed point over `cfg.restarts` starts (one quantile-based start,
/// the rest random). Components in the result are sorted by location and the
/// parameter layout is `[w_1 .. w_{K-1}, loc_1 .. loc_K]`, matching the zoo
/// mixture models.
pub fn mle_mixture_em(
    family: MixtureFamily,
    data: &Dataset,
    cfg: &EmConfig,
    rng: &mut dyn RngCore,
) -> Result<MleResult> {
    let k = family.components();
    if k == 0 {
        return Err(Error::config("mixture needs at least one component"));
    }
    if cfg.restarts == 0 {
        return Err(Error::config("EM needs at least one restart"));
    }
    if data.width() != 1 {
        return Err(Error::data("mixture EM expects scalar observations"));
    }
    if let MixtureFamily::Binomial { trials, .. } = family {
        if data.values().iter().any(|&x| x < 0.0 || x > trials as f64 || x.fract() != 0.0) {
            return Err(Error::data("binomial counts must be integers in [0, trials]"));
        }
    }
    let kernel = Kernel::new(family);
    let weighted = Weighted::new(data);

    if k == 1 {
        let mean = data.values().iter().sum::<f64>() / data.n() as f64;
        let loc = kernel.location(mean);
        let loglik: f64 = weighted
            .values
            .iter()
            .zip(&weighted.counts)
            .map(|(&x, &c)| c * kernel.log_density(x, loc))
            .sum();
        return Ok(MleResult {
            params_hat: vec![loc],
            max_loglik: loglik,
            converged: true,
            restarts_used: 1,
            loglik_trace: vec![loglik],
        });
    }

    let mut best: Option<RunResult> = None;
    let mut any_converged = false;
    for restart in 0..cfg.restarts {
        let (w, l) = if restart == 0 {
            quantile_start(&kernel, &weighted, k)
        } else {
            random_start(&kernel, &weighted, k, rng)
        };
        let run = run_em(&kernel, &weighted, w, l, cfg);
        any_converged |= run.converged;
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|b| run.loglik > b.loglik) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| best.locs[a].total_cmp(&best.locs[b]));
    let weights: Vec<f64> = order.iter().map(|&h| best.weights[h]).collect();
    let locs: Vec<f64> = order.iter().map(|&h| best.locs[h]).collect();
    let mut params = weights[..k - 1].to_vec();
    params.extend_from_slice(&locs);
    Ok(MleResult {
        params_hat: params,
        max_loglik: best.loglik,
        converged: any_converged,
        restarts_used: cfg.restarts,
        loglik_trace: best.trace,
    })
}
