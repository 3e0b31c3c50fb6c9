use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{BoundLogLik, Dataset, Model};
use crate::transform::{Block, Transform};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(theta, 1)` with prior `theta ~ N(0, 1)`. Regular, `lambda = 1/2`, and
/// every tempered quantity has a closed form.
#[derive(Debug, Clone)]
pub struct NormalLocation {
    transform: Transform,
}

impl Default for NormalLocation {
    fn default() -> Self {
        Self { transform: Transform::new(vec![Block::Real(1)]) }
    }
}

pub fn normal_location_model() -> NormalLocation {
    NormalLocation::default()
}

/// Closed-form tempered quantities for a fixed dataset.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateSummary {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ConjugateSummary {
    pub fn new(data: &Dataset) -> Self {
        let v = data.values();
        Self {
            n: v.len() as f64,
            sum: v.iter().sum(),
            sum_sq: v.iter().map(|x| x * x).sum(),
        }
    }

    /// Mean and variance of `theta` under the tempered posterior.
    pub fn tempered_posterior(&self, t: f64) -> (f64, f64) {
        let prec = t * self.n + 1.0;
        (t * self.sum / prec, 1.0 / prec)
    }

    /// `E^t[log p(X|theta)]` and `V^t[log p(X|theta)]`.
    ///
    /// The log-likelihood is `A - n/2 (theta - xbar)^2`, so both moments
    /// follow from the first two moments of a non-central chi-square.
    pub fn tempered_loglik_moments(&self, t: f64) -> (f64, f64) {
        let (mean, var) = self.tempered_posterior(t);
        let xbar = self.sum / self.n;
        let centred_ss = self.sum_sq - self.n * xbar * xbar;
        let a = -0.5 * self.n * LN_2PI - 0.5 * centred_ss;
        let shift = mean - xbar;
        let e_sq = shift * shift + var;
        let v_sq = 2.0 * var * var + 4.0 * var * shift * shift;
        let half_n = 0.5 * self.n;
        (a - half_n * e_sq, half_n * half_n * v_sq)
    }
}

impl Model for NormalLocation {
    fn name(&self) -> String {
        "normal_location".to_string()
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn data_width(&self) -> usize {
        1
    }

    fn log_lik(&self, params: &[f64], data: &Dataset) -> f64 {
        let theta = params[0];
        data.values()
            .iter()
            .map(|x| -0.5 * LN_2PI - 0.5 * (x - theta) * (x - theta))
            .sum()
    }

    fn bind<'a>(&'a self, data: &'a Dataset) -> BoundLogLik<'a> {
        let s = ConjugateSummary::new(data);
        Box::new(move |params| {
            let theta = params[0];
            -0.5 * s.n * LN_2PI - 0.5 * (s.sum_sq - 2.0 * theta * s.sum + s.n * theta * theta)
        })
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        -0.5 * LN_2PI - 0.5 * params[0] * params[0]
    }

    fn simulate(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Dataset {
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                params[0] + z
            })
            .collect();
        Dataset::from_scalars(values).expect("n >= 1")
    }

    fn initial_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![StandardNormal.sample(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_joint_tempered;

    #[test]
    fn tempered_joint_matches_hand_evaluation() {
        let m = normal_location_model();
        let data = Dataset::from_scalars(vec![0.5]).unwrap();
        let got = log_joint_tempered(&m, &data, &[0.0], 0.5).unwrap();
        let log_n = |x: f64| -0.5 * LN_2PI - 0.5 * x * x;
        assert!((got - (0.5 * log_n(0.5) + log_n(0.0))).abs() < 1e-14);
        assert_eq!(log_joint_tempered(&m, &data, &[0.3], 0.0).unwrap(), m.log_prior(&[0.3]));
    }

    #[test]
    fn tempered_posterior_formula() {
        let data = Dataset::from_scalars(vec![1.0, 2.0, 3.0]).unwrap();
        let s = ConjugateSummary::new(&data);
        let (m, v) = s.tempered_posterior(0.5);
        assert!((m - 0.5 * 6.0 / 2.5).abs() < 1e-15);
        assert!((v - 1.0 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_v_approaches_half() {
        let mut prev_gap = f64::INFINITY;
        for &n in &[100usize, 10_000, 1_000_000] {
            let t = 1.0 / (n as f64).ln();
            // data at xbar = 0.3, unit spread
            let s = ConjugateSummary { n: n as f64, sum: 0.3 * n as f64, sum_sq: n as f64 * 1.09 };
            let (_, v) = s.tempered_loglik_moments(t);
            let gap = (t * t * v - 0.5).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.01);
    }
}
