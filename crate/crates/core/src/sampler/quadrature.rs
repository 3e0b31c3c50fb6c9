use crate::error::{Error, Result};
use crate::model::{Dataset, Model};

/// Tensor grid over unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    /// Points per axis, including both end points.
    pub resolution: usize,
    /// `(lower, upper)` per unconstrained coordinate.
    pub bounds: Vec<(f64, f64)>,
}

impl QuadratureGrid {
    pub fn new(resolution: usize, bounds: Vec<(f64, f64)>) -> Self {
        Self { resolution, bounds }
    }

    /// Symmetric box `centre +- half_width` on every axis.
    pub fn centred(resolution: usize, centre: &[f64], half_width: f64) -> Self {
        Self {
            resolution,
            bounds: centre.iter().map(|&c| (c - half_width, c + half_width)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    /// `E^t[loglik]`
    pub mean: f64,
    /// `V^t[loglik]`
    pub variance: f64,
    /// Share of the normalised mass in the outer band of the grid.
    pub tail_mass: f64,
    /// Log of the grid estimate of the normalising constant.
    pub log_normalizer: f64,
}

pub const MAX_TAIL_MASS: f64 = 1e-10;

/// Weighted mean and variance accumulated in a single pass, with weights
/// kept relative to the running maximum log weight.
struct LogWeighted {
    max: f64,
    sum: f64,
    tail: f64,
    mean: f64,
    m2: f64,
}

impl LogWeighted {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0, tail: 0.0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, log_w: f64, x: f64, in_tail: bool) {
        if log_w > self.max {
            let r = (self.max - log_w).exp();
            self.sum *= r;
            self.tail *= r;
            self.m2 *= r;
            self.max = log_w;
        }
        let w = (log_w - self.max).exp();
        if w == 0.0 {
            return;
        }
        self.sum += w;
        if in_tail {
            self.tail += w;
        }
        let delta = x - self.mean;
        self.mean += w / self.sum * delta;
        self.m2 += w * delta * (x - self.mean);
    }
}

/// Tempered posterior moments of the log-likelihood by trapezoidal
/// integration on a grid over unconstrained coordinates.
pub fn quadrature_tempered_moments(
    model: &dyn Model,
    data: &Dataset,
    t: f64,
    grid: &QuadratureGrid,
) -> Result<QuadratureMoments> {
    let dim = model.dim();
    if dim == 0 || dim > 2 {
        return Err(Error::config(format!("quadrature supports dimension 1 or 2, model has {dim}")));
    }
    if grid.bounds.len() != dim {
        return Err(Error::config(format!("grid has {} axes, model has {dim}", grid.bounds.len())));
    }
    if grid.resolution < 3 {
        return Err(Error::config("grid resolution must be at least 3"));
    }
    if grid.bounds.iter().any(|&(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
        return Err(Error::config("grid bounds must be finite with lower < upper"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::config("inverse temperature must be finite and >= 0"));
    }
    model.check_data(data)?;

    let res = grid.resolution;
    let band = (res / 50).max(1);
    let steps: Vec<f64> = grid.bounds.iter().map(|&(lo, hi)| (hi - lo) / (res - 1) as f64).collect();
    let transform = model.transform();
    let loglik = model.bind(data);
    let mut theta = vec![0.0; dim];
    let mut u = vec![0.0; dim];
    let mut acc = LogWeighted::new();

    let total = res.pow(dim as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut log_edge = 0.0;
        let mut in_tail = false;
        for (axis, ui) in u.iter_mut().enumerate() {
            let idx = rem % res;
            rem /= res;
            *ui = grid.bounds[axis].0 + idx as f64 * steps[axis];
            if idx == 0 || idx == res - 1 {
                log_edge -= std::f64::consts::LN_2;
            }
            if idx < band || idx >= res - band {
                in_tail = true;
            }
        }
        let log_jac = transform.from_unconstrained_into(&u, &mut theta);
        let lp = model.log_prior(&theta);
        if !(lp.is_finite() && log_jac.is_finite()) {
            continue;
        }
        let ll = loglik(&theta);
        if !ll.is_finite() {
            continue;
        }
        acc.push(t * ll + lp + log_jac + log_edge, ll, in_tail);
    }
    if !(acc.sum > 0.0) {
        return Err(Error::numeric("integrand is zero on the whole grid"));
    }
    let tail_mass = acc.tail / acc.sum;
    if tail_mass >= MAX_TAIL_MASS {
        return Err(Error::numeric(format!(
            "tail mass {tail_mass:.3e} on the grid boundary; widen the bounds"
        )));
    }
    Ok(QuadratureMoments {
        mean: acc.mean,
        variance: acc.m2 / acc.sum,
        tail_mass,
        log_normalizer: acc.max + acc.sum.ln() + steps.iter().map(|h| h.ln()).sum::<f64>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, RngPlan};
    use crate::sampler::{mcse_mean, mcse_variance, mean_var, sample_tempered, McmcConfig};
    use crate::zoo::{
        binom_mixture_model, cormorant_fixture, normal_location_model, rrr_model, ConjugateSummary,
    };
    use crate::model::Model;

    fn normal_data() -> Dataset {
        let model = normal_location_model();
        model.simulate(&[0.4], 100, &mut RngPlan::new(17).stream(0, Lane::DATA))
    }

    #[test]
    fn matches_conjugate_closed_form() {
        let model = normal_location_model();
        let data = normal_data();
        let summary = ConjugateSummary::new(&data);
        for t in [1.0 / 100f64.ln(), 0.5, 1.0] {
            let (m, v) = summary.tempered_posterior(t);
            let grid = QuadratureGrid::centred(4001, &[m], 14.0 * v.sqrt());
            let q = quadrature_tempered_moments(&model, &data, t, &grid).unwrap();
            let (e, var) = summary.tempered_loglik_moments(t);
            assert!((q.mean - e).abs() < 1e-8, "E {} vs {e}", q.mean);
            assert!((q.variance - var).abs() < 1e-8, "V {} vs {var}", q.variance);
        }
    }

    #[test]
    fn narrow_bounds_fail_the_tail_check() {
        let model = normal_location_model();
        let data = normal_data();
        let grid = QuadratureGrid::new(401, vec![(-0.5, 0.5)]);
        let err = quadrature_tempered_moments(&model, &data, 0.2, &grid);
        assert!(matches!(err, Err(Error::Numeric(_))));
        let grid = QuadratureGrid::new(401, vec![(-5.0, 5.0), (0.0, 1.0)]);
        assert!(matches!(quadrature_tempered_moments(&model, &data, 0.2, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn zero_temperature_reduces_to_prior_expectation() {
        let model = normal_location_model();
        let data = normal_data();
        let grid = QuadratureGrid::new(4001, vec![(-9.0, 9.0)]);
        let q = quadrature_tempered_moments(&model, &data, 0.0, &grid).unwrap();
        let mut rng = RngPlan::new(2).stream(0, Lane::AUX);
        let draws: Vec<f64> =
            (0..20_000).map(|_| model.log_lik(&model.initial_params(&mut rng), &data)).collect();
        let (mc, _) = mean_var(&draws);
        assert!((q.mean - mc).abs() < 3.0 * mcse_mean(&draws), "{} vs {mc}", q.mean);
    }

    #[test]
    fn cormorant_single_binomial_agrees_with_mcmc() {
        let model = binom_mixture_model(1, 30);
        let data = cormorant_fixture();
        let t = 1.0 / 128f64.ln();
        let grid = QuadratureGrid::new(4001, vec![(-4.0, 1.5)]);
        let q = quadrature_tempered_moments(&model, &data, t, &grid).unwrap();
        let cfg = McmcConfig::new(60_000, 10_000, 5);
        let chain = sample_tempered(&model, &data, t, &cfg, &mut RngPlan::new(9).stream(0, Lane::CHAIN)).unwrap();
        let (e, v) = mean_var(&chain.loglik_draws);
        assert!((e - q.mean).abs() < 3.0 * mcse_mean(&chain.loglik_draws), "E {e} vs {}", q.mean);
        assert!((v - q.variance).abs() < 3.0 * mcse_variance(&chain.loglik_draws), "V {v} vs {}", q.variance);
    }

    fn strictly_increasing(model: &dyn Model, data: &Dataset, grid: &QuadratureGrid) {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=10 {
            let t = k as f64 / 10.0;
            let q = quadrature_tempered_moments(model, data, t, grid).unwrap();
            assert!(q.mean > prev, "{} at t = {t}: {} <= {prev}", model.name(), q.mean);
            prev = q.mean;
        }
    }

    #[test]
    fn tempered_mean_increases_with_t() {
        let normal = normal_location_model();
        strictly_increasing(&normal, &normal_data(), &QuadratureGrid::new(2001, vec![(-3.0, 3.0)]));

        let binom = binom_mixture_model(1, 30);
        strictly_increasing(&binom, &cormorant_fixture(), &QuadratureGrid::new(2001, vec![(-4.0, 1.5)]));

        let rrr = rrr_model(1, 1, 1).unwrap();
        let data = rrr.simulate(&rrr.canonical_truth(), 100, &mut RngPlan::new(4).stream(0, Lane::DATA));
        strictly_increasing(&rrr, &data, &QuadratureGrid::new(1201, vec![(-30.0, 30.0); 2]));
    }
}
