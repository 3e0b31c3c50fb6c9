//! Model abstraction, datasets and the seeded stream contract.
//!
//! Models are assumed to satisfy the usual regularity conditions of
//! singular learning theory (compact analytic parameter set, analytic prior
//! factorisation, analytic log-likelihood ratio, relatively finite variance).
//! Nothing here checks them for user-supplied models.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transform::Transform;

/// Largest simulation size accepted by the replication machinery.
pub const MAX_SIMULATION_SIZE: usize = 100_000;

/// `n` observations, each a real vector of the same width, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    width: usize,
}

impl Dataset {
    pub fn new(values: Vec<f64>, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::data("observation width must be positive"));
        }
        if values.is_empty() {
            return Err(Error::data("a dataset needs at least one observation"));
        }
        if values.len() % width != 0 {
            return Err(Error::data(format!(
                "{} values cannot be split into rows of width {width}",
                values.len()
            )));
        }
        Ok(Self { values, width })
    }

    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1)
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A log-likelihood bound to one dataset, typically backed by sufficient
/// statistics.
pub type BoundLogLik<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// A parametric statistical model with a prior.
///
/// Parameters are always passed in the constrained space; [`Model::transform`]
/// describes the bijection the sampler uses.
pub trait Model: Send + Sync {
    fn name(&self) -> String;

    fn transform(&self) -> &Transform;

    fn dim(&self) -> usize {
        self.transform().dim()
    }

    /// Width of a single observation.
    fn data_width(&self) -> usize;

    /// `sum_i log p(x_i | params)`.
    fn log_lik(&self, params: &[f64], data: &Dataset) -> f64;

    /// Log prior density on the constrained space, up to a constant.
    fn log_prior(&self, params: &[f64]) -> f64;

    fn simulate(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Dataset;

    /// A starting point for chains: a prior draw for proper priors, a draw
    /// from a proper surrogate otherwise.
    fn initial_params(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Optional data-informed starting point, tried before prior draws.
    /// Only affects burn-in, never the stationary distribution.
    fn warm_start(&self, _data: &Dataset, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    /// Checks that `data` can be evaluated by this model.
    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.width() != self.data_width() {
            return Err(Error::data(format!(
                "model {} expects observations of width {}, got {}",
                self.name(),
                self.data_width(),
                data.width()
            )));
        }
        Ok(())
    }

    /// Log-likelihood specialised to `data`. The default re-reads the data on
    /// every call.
    fn bind<'a>(&'a self, data: &'a Dataset) -> BoundLogLik<'a> {
        Box::new(move |params| self.log_lik(params, data))
    }
}

/// `t * log_lik + log_prior`, or `None` when either term is not finite
/// (the sampler treats that as a rejected proposal).
pub fn log_joint_tempered(
    model: &dyn Model,
    data: &Dataset,
    params: &[f64],
    t: f64,
) -> Option<f64> {
    let lp = model.log_prior(params);
    if !lp.is_finite() {
        return None;
    }
    if t == 0.0 {
        return Some(lp);
    }
    let ll = model.log_lik(params, data);
    if !ll.is_finite() {
        return None;
    }
    Some(t * ll + lp)
}

pub fn to_unconstrained(model: &dyn Model, params: &[f64]) -> Result<(Vec<f64>, f64)> {
    model.transform().to_unconstrained(params)
}

/// Random stream used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Purpose of a stream within one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lane(pub u8);

impl Lane {
    pub const DATA: Lane = Lane(0);
    pub const CHAIN: Lane = Lane(1);
    pub const SHIFTED_CHAIN: Lane = Lane(2);
    pub const FULL_POSTERIOR: Lane = Lane(3);
    pub const EM: Lane = Lane(4);
    pub const AUX: Lane = Lane(5);
    pub const COUNT: u64 = 16;
}

/// Derives independent streams from one master seed.
///
/// Stream `(k, lane)` is the ChaCha8 stream number `k * 16 + lane` under the
/// key derived from `master_seed`, so distinct pairs never share a keystream
/// and no stream depends on how work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    pub master_seed: u64,
}

impl RngPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, replicate: u64, lane: Lane) -> StreamRng {
        assert!((lane.0 as u64) < Lane::COUNT, "lane out of range");
        assert!(replicate < u64::MAX / Lane::COUNT, "replicate index too large");
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(replicate * Lane::COUNT + lane.0 as u64);
        rng
    }

    /// A plan for a nested experiment (e.g. one simulation inside a suite).
    pub fn child(&self, index: u64) -> RngPlan {
        let mut rng = self.stream(index, Lane::AUX);
        RngPlan::new(rng.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::from_scalars(vec![]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let plan = RngPlan::new(42);
        let draw = |k, lane| {
            let mut r = plan.stream(k, lane);
            (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3, Lane::CHAIN), draw(3, Lane::CHAIN));
        assert_ne!(draw(3, Lane::CHAIN), draw(3, Lane::DATA));
        assert_ne!(draw(3, Lane::CHAIN), draw(4, Lane::CHAIN));
        let other: u64 = RngPlan::new(43).stream(0, Lane::DATA).random();
        assert_ne!(draw(0, Lane::DATA)[0], other);
    }

    #[test]
    fn child_plans_differ() {
        let plan = RngPlan::new(7);
        assert_ne!(plan.child(0), plan.child(1));
        assert_eq!(plan.child(5), plan.child(5));
    }
}
