use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundLogLik, Dataset, Model};
use crate::transform::{logistic, Block, Transform};

/// Prior on each success probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogitPrior {
    /// Flat on the logit scale (improper).
    #[default]
    FlatLogit,
    /// Uniform on `(0, 1)`.
    Uniform,
}

/// `sum_h pi_h B(k, p_h)` with a flat Dirichlet prior on the weights.
///
/// Parameters are `[pi_1 .. pi_{i-1}, p_1 .. p_i]`; the last weight is implied.
#[derive(Debug, Clone)]
pub struct BinomialMixture {
    components: usize,
    trials: u32,
    logit_prior: LogitPrior,
    transform: Transform,
    ln_choose: Vec<f64>,
}

pub fn binom_mixture_model(components: usize, trials: u32) -> BinomialMixture {
    BinomialMixture::new(components, trials, LogitPrior::default())
}

impl BinomialMixture {
    pub fn new(components: usize, trials: u32, logit_prior: LogitPrior) -> Self {
        assert!(components >= 1, "at least one component");
        assert!(trials >= 1, "at least one trial");
        let k = trials as usize;
        let mut ln_fact = vec![0.0; k + 1];
        for x in 1..=k {
            ln_fact[x] = ln_fact[x - 1] + (x as f64).ln();
        }
        let ln_choose = (0..=k).map(|x| ln_fact[k] - ln_fact[x] - ln_fact[k - x]).collect();
        Self {
            components,
            trials,
            logit_prior,
            transform: Transform::new(vec![Block::Simplex(components), Block::UnitInterval(components)]),
            ln_choose,
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }

    pub fn logit_prior(&self) -> LogitPrior {
        self.logit_prior
    }

    /// Full weight vector (including the implied last weight) and the success
    /// probabilities.
    pub fn split<'a>(&self, params: &'a [f64]) -> (Vec<f64>, &'a [f64]) {
        let i = self.components;
        let mut weights = params[..i - 1].to_vec();
        weights.push(1.0 - weights.iter().sum::<f64>());
        (weights, &params[i - 1..])
    }

    /// Inverse of [`BinomialMixture::split`].
    pub fn pack(weights: &[f64], probs: &[f64]) -> Vec<f64> {
        let mut out = weights[..weights.len() - 1].to_vec();
        out.extend_from_slice(probs);
        out
    }

    /// Equal weights with success probabilities `h / (j + 1)`.
    pub fn evenly_spaced_truth(&self) -> Vec<f64> {
        let j = self.components;
        let weights = vec![1.0 / j as f64; j];
        let probs: Vec<f64> = (1..=j).map(|h| h as f64 / (j + 1) as f64).collect();
        Self::pack(&weights, &probs)
    }

    /// Count of each outcome `0..=k`.
    pub fn histogram(&self, data: &Dataset) -> Vec<f64> {
        let mut counts = vec![0.0; self.trials as usize + 1];
        for &x in data.values() {
            counts[x as usize] += 1.0;
        }
        counts
    }

    /// `scratch` must hold `4 * components` values.
    fn log_lik_hist(&self, params: &[f64], counts: &[f64], scratch: &mut [f64]) -> f64 {
        let i = self.components;
        let k = self.trials as f64;
        let probs = &params[i - 1..];
        let (coef, terms) = scratch.split_at_mut(3 * i);
        let mut last = 1.0;
        for h in 0..i {
            let w = if h + 1 < i { params[h] } else { last };
            last -= w;
            coef[3 * h] = w.ln();
            coef[3 * h + 1] = probs[h].ln();
            coef[3 * h + 2] = (-probs[h]).ln_1p();
        }
        let mut total = 0.0;
        for (x, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let xf = x as f64;
            let mut hi = f64::NEG_INFINITY;
            for h in 0..i {
                let v = coef[3 * h] + xlogy(xf, coef[3 * h + 1]) + xlogy(k - xf, coef[3 * h + 2]);
                terms[h] = v;
                hi = hi.max(v);
            }
            if hi == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let s: f64 = terms.iter().map(|v| (v - hi).exp()).sum();
            total += c * (hi + s.ln() + self.ln_choose[x]);
        }
        total
    }
}

/// `x * ln_y` with the convention `0 * (-inf) = 0`.
#[inline]
fn xlogy(x: f64, ln_y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln_y
    }
}

impl Model for BinomialMixture {
    fn name(&self) -> String {
        format!("binomial_mixture(i={}, k={})", self.components, self.trials)
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn data_width(&self) -> usize {
        1
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.width() != 1 {
            return Err(Error::data("binomial mixture expects scalar counts"));
        }
        for &x in data.values() {
            if x.fract() != 0.0 || x < 0.0 || x > self.trials as f64 {
                return Err(Error::data(format!(
                    "count {x} is not an integer in [0, {}]",
                    self.trials
                )));
            }
        }
        Ok(())
    }

    fn log_lik(&self, params: &[f64], data: &Dataset) -> f64 {
        let counts = self.histogram(data);
        let mut scratch = vec![0.0; 4 * self.components];
        self.log_lik_hist(params, &counts, &mut scratch)
    }

    fn bind<'a>(&'a self, data: &'a Dataset) -> BoundLogLik<'a> {
        let counts = self.histogram(data);
        let width = 4 * self.components;
        Box::new(move |params| {
            let mut scratch = [0.0f64; 64];
            if width <= scratch.len() {
                self.log_lik_hist(params, &counts, &mut scratch[..width])
            } else {
                let mut heap = vec![0.0; width];
                self.log_lik_hist(params, &counts, &mut heap)
            }
        })
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        let (weights, probs) = self.split(params);
        if weights.iter().any(|&w| !(w > 0.0)) || probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return f64::NEG_INFINITY;
        }
        // flat Dirichlet density (i - 1)!
        let mut lp: f64 = (1..self.components).map(|v| (v as f64).ln()).sum();
        if self.logit_prior == LogitPrior::FlatLogit {
            lp -= probs.iter().map(|&p| p.ln() + (-p).ln_1p()).sum::<f64>();
        }
        lp
    }

    fn simulate(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Dataset {
        let (weights, probs) = self.split(params);
        let dists: Vec<Binomial> = probs
            .iter()
            .map(|&p| Binomial::new(self.trials as u64, p).expect("p in [0, 1]"))
            .collect();
        let values = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut h = self.components - 1;
                for (idx, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        h = idx;
                        break;
                    }
                }
                dists[h].sample(rng) as f64
            })
            .collect();
        Dataset::from_scalars(values).expect("n >= 1")
    }

    fn initial_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.components)
            .map(|_| Exp1.sample(rng))
            .map(|e: f64| e.max(1e-3))
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let probs: Vec<f64> = (0..self.components)
            .map(|_| match self.logit_prior {
                LogitPrior::FlatLogit => {
                    let z: f64 = StandardNormal.sample(rng);
                    logistic(z)
                }
                LogitPrior::Uniform => rng.random::<f64>().clamp(1e-6, 1.0 - 1e-6),
            })
            .collect();
        Self::pack(&weights, &probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, RngPlan};

    #[test]
    fn single_component_is_binomial() {
        let m = binom_mixture_model(1, 5);
        assert_eq!(m.dim(), 1);
        let data = Dataset::from_scalars(vec![2.0]).unwrap();
        let ll = m.log_lik(&[0.4], &data);
        let expected = (10.0f64 * 0.4 * 0.4 * 0.6 * 0.6 * 0.6).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn dimension_is_two_i_minus_one() {
        for i in 1..=6 {
            assert_eq!(binom_mixture_model(i, 30).dim(), 2 * i - 1);
        }
    }

    #[test]
    fn bound_and_plain_likelihood_agree() {
        let m = binom_mixture_model(3, 30);
        let mut rng = RngPlan::new(3).stream(0, Lane::DATA);
        let truth = m.evenly_spaced_truth();
        let data = m.simulate(&truth, 200, &mut rng);
        let bound = m.bind(&data);
        let direct: f64 = data
            .values()
            .iter()
            .map(|&x| {
                let (w, p) = m.split(&truth);
                let dens: f64 = (0..3)
                    .map(|h| w[h] * m.ln_choose[x as usize].exp() * p[h].powf(x) * (1.0 - p[h]).powf(30.0 - x))
                    .sum();
                dens.ln()
            })
            .sum();
        assert!((bound(&truth) - direct).abs() < 1e-9);
    }

    #[test]
    fn certain_success_is_finite_on_full_counts() {
        let m = binom_mixture_model(2, 4);
        let data = Dataset::from_scalars(vec![4.0, 1.0]).unwrap();
        assert!(m.log_lik(&[0.5, 1.0, 0.3], &data).is_finite());
    }

    #[test]
    fn rejects_non_integer_counts() {
        let m = binom_mixture_model(2, 4);
        assert!(m.check_data(&Dataset::from_scalars(vec![1.5]).unwrap()).is_err());
        assert!(m.check_data(&Dataset::from_scalars(vec![5.0]).unwrap()).is_err());
    }

    #[test]
    fn flat_logit_prior_is_flat_after_jacobian() {
        let m = BinomialMixture::new(1, 30, LogitPrior::FlatLogit);
        let a = m.log_prior(&[0.2]) + m.transform().log_jacobian(&[crate::transform::logit(0.2)]);
        let b = m.log_prior(&[0.7]) + m.transform().log_jacobian(&[crate::transform::logit(0.7)]);
        assert!((a - b).abs() < 1e-12);
    }
}
