use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::model::{Dataset, Model};
use crate::transform::{Block, Transform};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `alpha N(mu1, 1) + (1 - alpha) N(mu2, 1)` with `alpha ~ U(0, 1)` and
/// `mu1, mu2 ~ N(0, prior_var)`.
///
/// Parameters are `[alpha, mu1, mu2]`.
#[derive(Debug, Clone)]
pub struct GaussianMixture2 {
    prior_var: f64,
    transform: Transform,
}

impl Default for GaussianMixture2 {
    fn default() -> Self {
        Self::new(4.0)
    }
}

impl GaussianMixture2 {
    pub fn new(prior_var: f64) -> Self {
        Self {
            prior_var,
            transform: Transform::new(vec![Block::UnitInterval(1), Block::Real(2)]),
        }
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    /// Log-density of one observation.
    #[inline]
    pub fn log_density(x: f64, ln_w1: f64, ln_w2: f64, mu1: f64, mu2: f64) -> f64 {
        let a = ln_w1 - 0.5 * (x - mu1) * (x - mu1);
        let b = ln_w2 - 0.5 * (x - mu2) * (x - mu2);
        log_add_exp(a, b) - LN_SQRT_2PI
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Standard-normal truth used for the exact threshold 3/4.
pub fn gmm2_standard_normal_truth() -> Vec<f64> {
    vec![0.5, 0.0, 0.0]
}

/// Builds the two-component unit-variance Gaussian mixture.
pub fn gmm2_model() -> GaussianMixture2 {
    GaussianMixture2::default()
}

impl Model for GaussianMixture2 {
    fn name(&self) -> String {
        "gmm2".to_string()
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn data_width(&self) -> usize {
        1
    }

    fn log_lik(&self, params: &[f64], data: &Dataset) -> f64 {
        let (alpha, mu1, mu2) = (params[0], params[1], params[2]);
        let ln_w1 = alpha.ln();
        let ln_w2 = (-alpha).ln_1p();
        data.values()
            .iter()
            .map(|&x| Self::log_density(x, ln_w1, ln_w2, mu1, mu2))
            .sum()
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        let alpha = params[0];
        if !(alpha > 0.0 && alpha < 1.0) {
            return f64::NEG_INFINITY;
        }
        let norm = -0.5 * (2.0 * std::f64::consts::PI * self.prior_var).ln();
        params[1..]
            .iter()
            .map(|m| norm - 0.5 * m * m / self.prior_var)
            .sum()
    }

    fn simulate(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Dataset {
        let (alpha, mu1, mu2) = (params[0], params[1], params[2]);
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                if rng.random::<f64>() < alpha {
                    mu1 + z
                } else {
                    mu2 + z
                }
            })
            .collect();
        Dataset::from_scalars(values).expect("n >= 1")
    }

    fn initial_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let sd = self.prior_var.sqrt();
        let alpha = rng.random::<f64>().clamp(1e-6, 1.0 - 1e-6);
        let m1: f64 = StandardNormal.sample(rng);
        let m2: f64 = StandardNormal.sample(rng);
        vec![alpha, sd * m1, sd * m2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RngPlan;

    #[test]
    fn single_point_at_pure_component() {
        let m = gmm2_model();
        let data = Dataset::from_scalars(vec![0.0]).unwrap();
        let ll = m.log_lik(&[1.0, 0.0, 3.0], &data);
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12, "{ll}");
    }

    #[test]
    fn simulator_mean_is_centred() {
        let m = gmm2_model();
        let mut rng = RngPlan::new(11).stream(0, crate::model::Lane::DATA);
        let n = 10_000;
        let d = m.simulate(&[0.5, -2.0, 2.0], n, &mut rng);
        let mean = d.values().iter().sum::<f64>() / n as f64;
        // variance of the mixture is 1 + 4 = 5
        let se = (5.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn prior_matches_definition() {
        let m = gmm2_model();
        let lp = m.log_prior(&[0.3, 0.0, 2.0]);
        let expected = 2.0 * (-0.5 * (8.0 * std::f64::consts::PI).ln()) - 0.5 * 4.0 / 4.0;
        assert!((lp - expected).abs() < 1e-12);
        assert_eq!(m.log_prior(&[1.0, 0.0, 0.0]), f64::NEG_INFINITY);
    }
}
