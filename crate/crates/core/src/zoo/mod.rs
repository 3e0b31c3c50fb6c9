//! Concrete models, their maximum-likelihood routines and reference values.

mod binomial;
mod cormorant;
mod em;
mod gmm;
mod normal;
pub mod reference;
mod rrr;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use binomial::{binom_mixture_model, BinomialMixture, LogitPrior};
pub use cormorant::{cormorant_fixture, CORMORANT_FREQUENCIES, CORMORANT_TRIALS};
pub use em::{mle_mixture_em, EmConfig, MixtureFamily};
pub use gmm::{gmm2_model, gmm2_standard_normal_truth, GaussianMixture2};
pub use normal::{normal_location_model, ConjugateSummary, NormalLocation};
pub use rrr::{mle_rrr, rrr_model, ReducedRankRegression, RegressionStats, DEFAULT_RRR_PRIOR_VAR};

use crate::error::{Error, Result};
use crate::model::{Dataset, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub params_hat: Vec<f64>,
    pub max_loglik: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// Log-likelihood per iteration of the winning run.
    pub loglik_trace: Vec<f64>,
}

fn default_gmm_prior_var() -> f64 {
    4.0
}
fn default_trials() -> u32 {
    CORMORANT_TRIALS
}
fn default_rrr_dim() -> usize {
    6
}
fn default_rrr_prior_var() -> f64 {
    DEFAULT_RRR_PRIOR_VAR
}

/// Model selector used by configuration files and the FFI layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFamily {
    Gmm2 {
        #[serde(default = "default_gmm_prior_var")]
        prior_var: f64,
    },
    BinomialMixture {
        components: usize,
        #[serde(default = "default_trials")]
        trials: u32,
        #[serde(default)]
        logit_prior: LogitPrior,
    },
    Rrr {
        #[serde(default = "default_rrr_dim")]
        inputs: usize,
        #[serde(default = "default_rrr_dim")]
        outputs: usize,
        rank: usize,
        #[serde(default = "default_rrr_prior_var")]
        prior_var: f64,
    },
    NormalLocation,
}

impl ModelFamily {
    /// Looks a family up by its short name with default settings.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gmm2" => Ok(ModelFamily::Gmm2 { prior_var: default_gmm_prior_var() }),
            "normal_location" => Ok(ModelFamily::NormalLocation),
            other => {
                if let Some(rest) = other.strip_prefix("binomial_mixture:") {
                    let components = rest
                        .parse()
                        .map_err(|_| Error::config(format!("bad component count in {other:?}")))?;
                    return Ok(ModelFamily::BinomialMixture {
                        components,
                        trials: default_trials(),
                        logit_prior: LogitPrior::default(),
                    });
                }
                if let Some(rest) = other.strip_prefix("rrr:") {
                    let rank = rest
                        .parse()
                        .map_err(|_| Error::config(format!("bad rank in {other:?}")))?;
                    return Ok(ModelFamily::Rrr {
                        inputs: 6,
                        outputs: 6,
                        rank,
                        prior_var: default_rrr_prior_var(),
                    });
                }
                Err(Error::config(format!(
                    "unknown model {other:?}; expected gmm2, normal_location, binomial_mixture:<i> or rrr:<H>"
                )))
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Model>> {
        Ok(match *self {
            ModelFamily::Gmm2 { prior_var } => {
                if !(prior_var > 0.0) {
                    return Err(Error::config("gmm2 prior variance must be positive"));
                }
                Arc::new(GaussianMixture2::new(prior_var))
            }
            ModelFamily::BinomialMixture { components, trials, logit_prior } => {
                if components == 0 || trials == 0 {
                    return Err(Error::config("binomial mixture needs components >= 1 and trials >= 1"));
                }
                Arc::new(BinomialMixture::new(components, trials, logit_prior))
            }
            ModelFamily::Rrr { inputs, outputs, rank, prior_var } => {
                Arc::new(ReducedRankRegression::new(inputs, outputs, rank, prior_var)?)
            }
            ModelFamily::NormalLocation => Arc::new(NormalLocation::default()),
        })
    }

    /// Default data-generating parameters when this family plays the truth.
    pub fn default_truth(&self) -> Result<Vec<f64>> {
        Ok(match *self {
            ModelFamily::Gmm2 { .. } => gmm2_standard_normal_truth(),
            ModelFamily::BinomialMixture { components, trials, logit_prior } => {
                BinomialMixture::new(components, trials, logit_prior).evenly_spaced_truth()
            }
            ModelFamily::Rrr { inputs, outputs, rank, prior_var } => {
                ReducedRankRegression::new(inputs, outputs, rank, prior_var)?.canonical_truth()
            }
            ModelFamily::NormalLocation => vec![0.0],
        })
    }

    /// Complexity index within the family (components or rank).
    pub fn order(&self) -> usize {
        match *self {
            ModelFamily::BinomialMixture { components, .. } => components,
            ModelFamily::Rrr { rank, .. } => rank,
            _ => 1,
        }
    }

    /// Whether a truth from `self` lies inside the model `fit` (`self` ⪯ `fit`).
    pub fn nested_in(&self, fit: &ModelFamily) -> bool {
        match (self, fit) {
            (ModelFamily::Gmm2 { .. }, ModelFamily::Gmm2 { .. }) => true,
            (ModelFamily::NormalLocation, ModelFamily::NormalLocation) => true,
            (
                ModelFamily::BinomialMixture { components: j, trials: kj, .. },
                ModelFamily::BinomialMixture { components: i, trials: ki, .. },
            ) => kj == ki && j <= i,
            (
                ModelFamily::Rrr { inputs: mj, outputs: nj, rank: j, .. },
                ModelFamily::Rrr { inputs: mi, outputs: ni, rank: i, .. },
            ) => mj == mi && nj == ni && j <= i,
            _ => false,
        }
    }

    /// Maximum likelihood fit. Mixtures use EM with restarts.
    pub fn mle(&self, data: &Dataset, em: &EmConfig, rng: &mut dyn RngCore) -> Result<MleResult> {
        match *self {
            ModelFamily::Gmm2 { .. } => mle_mixture_em(
                MixtureFamily::GaussianUnitVariance { components: 2 },
                data,
                em,
                rng,
            ),
            ModelFamily::BinomialMixture { components, trials, .. } => mle_mixture_em(
                MixtureFamily::Binomial { components, trials },
                data,
                em,
                rng,
            ),
            ModelFamily::Rrr { inputs, outputs, rank, prior_var } => {
                mle_rrr(&ReducedRankRegression::new(inputs, outputs, rank, prior_var)?, data)
            }
            ModelFamily::NormalLocation => {
                let mean = data.values().iter().sum::<f64>() / data.n() as f64;
                let model = NormalLocation::default();
                let ll = model.log_lik(&[mean], data);
                Ok(MleResult {
                    params_hat: vec![mean],
                    max_loglik: ll,
                    converged: true,
                    restarts_used: 1,
                    loglik_trace: vec![ll],
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, RngPlan};

    fn all_families() -> Vec<ModelFamily> {
        vec![
            ModelFamily::by_name("gmm2").unwrap(),
            ModelFamily::by_name("normal_location").unwrap(),
            ModelFamily::by_name("binomial_mixture:3").unwrap(),
            ModelFamily::by_name("rrr:2").unwrap(),
        ]
    }

    #[test]
    fn simulated_data_has_finite_likelihood() {
        let plan = RngPlan::new(99);
        for fam in all_families() {
            let model = fam.build().unwrap();
            let truth = fam.default_truth().unwrap();
            for k in 0..1000u64 {
                let mut rng = plan.stream(k, Lane::DATA);
                let data = model.simulate(&truth, 20, &mut rng);
                model.check_data(&data).unwrap();
                assert!(model.log_lik(&truth, &data).is_finite(), "{}", model.name());
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        for fam in all_families() {
            let model = fam.build().unwrap();
            let truth = fam.default_truth().unwrap();
            let a = model.simulate(&truth, 50, &mut RngPlan::new(4).stream(2, Lane::DATA));
            let b = model.simulate(&truth, 50, &mut RngPlan::new(4).stream(2, Lane::DATA));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tempered_joint_is_linear_in_t() {
        let plan = RngPlan::new(5);
        for fam in all_families() {
            let model = fam.build().unwrap();
            let truth = fam.default_truth().unwrap();
            let data = model.simulate(&truth, 30, &mut plan.stream(0, Lane::DATA));
            let params = model.initial_params(&mut plan.stream(0, Lane::CHAIN));
            let f = |t| crate::model::log_joint_tempered(model.as_ref(), &data, &params, t).unwrap();
            let (a, b) = (0.25, 0.5);
            let lhs = f(a) + f(b);
            let rhs = f(0.0) + f(a + b);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{}", model.name());
        }
    }

    #[test]
    fn registry_rejects_unknown_names() {
        assert!(ModelFamily::by_name("lasso").is_err());
        assert!(ModelFamily::by_name("rrr:x").is_err());
        assert!(ModelFamily::by_name("rrr:9").unwrap().build().is_err());
    }

    #[test]
    fn nesting_relation() {
        let b2 = ModelFamily::by_name("binomial_mixture:2").unwrap();
        let b3 = ModelFamily::by_name("binomial_mixture:3").unwrap();
        assert!(b2.nested_in(&b3));
        assert!(!b3.nested_in(&b2));
        assert!(!b2.nested_in(&ModelFamily::by_name("gmm2").unwrap()));
    }
}
