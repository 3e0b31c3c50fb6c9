use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{BoundLogLik, Dataset, Model};
use crate::transform::{Block, Transform};
use crate::zoo::MleResult;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `Y ~ N(C X, I)` with `C = B A`, `B` of shape `outputs x rank` and `A` of
/// shape `rank x inputs`. Each factor entry has an independent
/// `N(0, prior_var)` prior.
///
/// Parameters are `B` then `A`, both row-major. An observation is the row
/// `[x_1 .. x_M, y_1 .. y_N]`.
#[derive(Debug, Clone)]
pub struct ReducedRankRegression {
    inputs: usize,
    outputs: usize,
    rank: usize,
    prior_var: f64,
    transform: Transform,
}

pub const DEFAULT_RRR_PRIOR_VAR: f64 = 10.0;

pub fn rrr_model(inputs: usize, outputs: usize, rank: usize) -> Result<ReducedRankRegression> {
    ReducedRankRegression::new(inputs, outputs, rank, DEFAULT_RRR_PRIOR_VAR)
}

/// Sufficient statistics of a regression dataset.
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub n: usize,
    /// `sum ||y||^2`
    pub syy: f64,
    /// `sum y x^T`, `outputs x inputs`, row-major.
    pub sxy: Vec<f64>,
    /// `sum x x^T`, `inputs x inputs`, row-major.
    pub sxx: Vec<f64>,
}

impl ReducedRankRegression {
    pub fn new(inputs: usize, outputs: usize, rank: usize, prior_var: f64) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::config("reduced-rank regression needs positive dimensions"));
        }
        if rank > inputs.min(outputs) {
            return Err(Error::config(format!(
                "rank {rank} exceeds min(inputs, outputs) = {}",
                inputs.min(outputs)
            )));
        }
        if !(prior_var > 0.0) {
            return Err(Error::config("prior variance must be positive"));
        }
        Ok(Self {
            inputs,
            outputs,
            rank,
            prior_var,
            transform: Transform::new(vec![Block::Real(rank * (inputs + outputs))]),
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `C = B A`, row-major `outputs x inputs`.
    pub fn coefficient(&self, params: &[f64]) -> Vec<f64> {
        let (m, n, h) = (self.inputs, self.outputs, self.rank);
        let (b, a) = params.split_at(n * h);
        let mut c = vec![0.0; n * m];
        for r in 0..n {
            for k in 0..h {
                let brk = b[r * h + k];
                if brk == 0.0 {
                    continue;
                }
                for col in 0..m {
                    c[r * m + col] += brk * a[k * m + col];
                }
            }
        }
        c
    }

    /// Truth with `C = sum_{h < rank} e_h e_h^T`.
    pub fn canonical_truth(&self) -> Vec<f64> {
        let (m, n, h) = (self.inputs, self.outputs, self.rank);
        let mut params = vec![0.0; h * (m + n)];
        for k in 0..h {
            params[k * h + k] = 1.0;
            params[n * h + k * m + k] = 1.0;
        }
        params
    }

    pub fn stats(&self, data: &Dataset) -> RegressionStats {
        let (m, n) = (self.inputs, self.outputs);
        let mut syy = 0.0;
        let mut sxy = vec![0.0; n * m];
        let mut sxx = vec![0.0; m * m];
        for row in data.rows() {
            let (x, y) = row.split_at(m);
            syy += y.iter().map(|v| v * v).sum::<f64>();
            for r in 0..n {
                for c in 0..m {
                    sxy[r * m + c] += y[r] * x[c];
                }
            }
            for r in 0..m {
                for c in 0..m {
                    sxx[r * m + c] += x[r] * x[c];
                }
            }
        }
        RegressionStats { n: data.n(), syy, sxy, sxx }
    }

    /// Log-likelihood of coefficient matrix `c` given sufficient statistics.
    pub fn log_lik_coefficient(&self, c: &[f64], stats: &RegressionStats) -> f64 {
        let m = self.inputs;
        let n_out = self.outputs;
        let cross: f64 = c.iter().zip(&stats.sxy).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for r in 0..n_out {
            let row = &c[r * m..(r + 1) * m];
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += stats.sxx[i * m + j] * row[j];
                }
                quad += row[i] * acc;
            }
        }
        let sse = stats.syy - 2.0 * cross + quad;
        -0.5 * (stats.n * n_out) as f64 * LN_2PI - 0.5 * sse
    }
}

impl Model for ReducedRankRegression {
    fn name(&self) -> String {
        format!("rrr(M={}, N={}, H={})", self.inputs, self.outputs, self.rank)
    }

    fn transform(&self) -> &Transform {
        &self.transform
    }

    fn data_width(&self) -> usize {
        self.inputs + self.outputs
    }

    fn log_lik(&self, params: &[f64], data: &Dataset) -> f64 {
        let c = self.coefficient(params);
        let m = self.inputs;
        let mut sse = 0.0;
        for row in data.rows() {
            let (x, y) = row.split_at(m);
            for (r, yr) in y.iter().enumerate() {
                let fit: f64 = c[r * m..(r + 1) * m].iter().zip(x).map(|(a, b)| a * b).sum();
                sse += (yr - fit) * (yr - fit);
            }
        }
        -0.5 * (data.n() * self.outputs) as f64 * LN_2PI - 0.5 * sse
    }

    fn bind<'a>(&'a self, data: &'a Dataset) -> BoundLogLik<'a> {
        let stats = self.stats(data);
        Box::new(move |params| {
            let c = self.coefficient(params);
            self.log_lik_coefficient(&c, &stats)
        })
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        let norm = -0.5 * (2.0 * std::f64::consts::PI * self.prior_var).ln();
        params
            .iter()
            .map(|v| norm - 0.5 * v * v / self.prior_var)
            .sum()
    }

    fn simulate(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Dataset {
        let (m, n_out) = (self.inputs, self.outputs);
        let c = self.coefficient(params);
        let mut values = Vec::with_capacity(n * (m + n_out));
        for _ in 0..n {
            let x: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
            values.extend_from_slice(&x);
            for r in 0..n_out {
                let fit: f64 = c[r * m..(r + 1) * m].iter().zip(&x).map(|(a, b)| a * b).sum();
                let eps: f64 = StandardNormal.sample(rng);
                values.push(fit + eps);
            }
        }
        Dataset::new(values, m + n_out).expect("n >= 1")
    }

    fn initial_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let sd = self.prior_var.sqrt();
        (0..self.dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    }

    /// Rank-`H` least-squares factors with a small perturbation, so that
    /// chains start on the ridge `B A = C_hat` instead of crawling to it.
    fn warm_start(&self, data: &Dataset, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mut params = mle_rrr(self, data).ok()?.params_hat;
        for p in &mut params {
            let z: f64 = StandardNormal.sample(rng);
            *p += 0.01 * z;
        }
        Some(params)
    }
}

/// Maximum likelihood under `rank(C) <= H`: OLS followed by projection onto
/// the top-`H` principal directions of the fitted values.
pub fn mle_rrr(model: &ReducedRankRegression, data: &Dataset) -> Result<MleResult> {
    model.check_data(data)?;
    let (m, n_out, h) = (model.inputs, model.outputs, model.rank);
    let stats = model.stats(data);
    let sxx = DMatrix::from_row_slice(m, m, &stats.sxx);
    let sxy = DMatrix::from_row_slice(n_out, m, &stats.sxy);
    let chol = sxx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::data("design matrix does not have full column rank"))?;
    // a numerically singular Gram matrix can still factor; check conditioning
    let diag_min = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let diag_max = chol.l().diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    if !(diag_min > 1e-10 * diag_max.max(1.0)) {
        return Err(Error::data("design matrix does not have full column rank"));
    }
    // C_ols = Sxy Sxx^{-1}  <=>  Sxx C_ols^T = Sxy^T
    let c_ols = chol.solve(&sxy.transpose()).transpose();
    let fitted_cov = &c_ols * &sxx * c_ols.transpose();
    let eig = nalgebra::SymmetricEigen::new(fitted_cov);
    let mut order: Vec<usize> = (0..n_out).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut v = DMatrix::zeros(n_out, h);
    for (col, &idx) in order.iter().take(h).enumerate() {
        v.set_column(col, &eig.eigenvectors.column(idx));
    }
    let a = v.transpose() * &c_ols;
    let mut params = Vec::with_capacity(h * (m + n_out));
    for r in 0..n_out {
        for k in 0..h {
            params.push(v[(r, k)]);
        }
    }
    for k in 0..h {
        for c in 0..m {
            params.push(a[(k, c)]);
        }
    }
    let coef = model.coefficient(&params);
    let max_loglik = model.log_lik_coefficient(&coef, &stats);
    Ok(MleResult {
        params_hat: params,
        max_loglik,
        converged: true,
        restarts_used: 1,
        loglik_trace: vec![max_loglik],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, RngPlan};
    use rand::Rng;

    #[test]
    fn rank_above_min_dimension_is_rejected() {
        assert!(rrr_model(3, 2, 3).is_err());
        assert!(rrr_model(3, 2, 2).is_ok());
    }

    #[test]
    fn rank_zero_has_fixed_noise_likelihood() {
        let m = rrr_model(2, 2, 0).unwrap();
        assert_eq!(m.dim(), 0);
        let data = Dataset::new(vec![1.0, 2.0, 0.5, -0.5], 4).unwrap();
        let expected = -LN_2PI - 0.5 * (0.25 + 0.25);
        assert!((m.log_lik(&[], &data) - expected).abs() < 1e-12);
    }

    #[test]
    fn bound_likelihood_matches_direct() {
        let m = rrr_model(3, 4, 2).unwrap();
        let mut rng = RngPlan::new(5).stream(0, Lane::DATA);
        let truth: Vec<f64> = (0..m.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let data = m.simulate(&truth, 50, &mut rng);
        let probe: Vec<f64> = (0..m.dim()).map(|_| rng.random::<f64>()).collect();
        let bound = m.bind(&data);
        assert!((bound(&probe) - m.log_lik(&probe, &data)).abs() < 1e-8);
    }

    #[test]
    fn full_rank_mle_equals_ols() {
        let m = rrr_model(3, 2, 2).unwrap();
        let mut rng = RngPlan::new(6).stream(0, Lane::DATA);
        let truth: Vec<f64> = (0..m.dim()).map(|_| rng.random::<f64>()).collect();
        let data = m.simulate(&truth, 40, &mut rng);
        let fit = mle_rrr(&m, &data).unwrap();
        let stats = m.stats(&data);
        let sxx = DMatrix::from_row_slice(3, 3, &stats.sxx);
        let sxy = DMatrix::from_row_slice(2, 3, &stats.sxy);
        let ols = &sxy * sxx.try_inverse().unwrap();
        let c = m.coefficient(&fit.params_hat);
        for r in 0..2 {
            for col in 0..3 {
                assert!((c[r * 3 + col] - ols[(r, col)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_zero_mle_is_noise_density() {
        let m = rrr_model(2, 2, 0).unwrap();
        let data = Dataset::new(vec![1.0, 0.0, 0.3, -0.2, 0.0, 1.0, 0.1, 0.4], 4).unwrap();
        let fit = mle_rrr(&m, &data).unwrap();
        let expected = -2.0 * LN_2PI - 0.5 * (0.09 + 0.04 + 0.01 + 0.16);
        assert!((fit.max_loglik - expected).abs() < 1e-12);
    }

    #[test]
    fn noiseless_rank_two_is_recovered() {
        let (mi, no) = (5, 4);
        let m = rrr_model(mi, no, 2).unwrap();
        let mut rng = RngPlan::new(8).stream(0, Lane::DATA);
        let truth: Vec<f64> = (0..m.dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let c_true = m.coefficient(&truth);
        let mut values = Vec::new();
        for _ in 0..60 {
            let x: Vec<f64> = (0..mi).map(|_| StandardNormal.sample(&mut rng)).collect();
            values.extend_from_slice(&x);
            for r in 0..no {
                values.push((0..mi).map(|c| c_true[r * mi + c] * x[c]).sum());
            }
        }
        let data = Dataset::new(values, mi + no).unwrap();
        let fit = mle_rrr(&m, &data).unwrap();
        let c = m.coefficient(&fit.params_hat);
        let frob: f64 = c.iter().zip(&c_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(frob < 1e-8, "{frob}");
    }

    #[test]
    fn collinear_design_is_rejected() {
        let m = rrr_model(2, 1, 1).unwrap();
        let data = Dataset::new(vec![1.0, 2.0, 0.1, 2.0, 4.0, 0.3, -1.0, -2.0, 0.0], 3).unwrap();
        assert!(matches!(mle_rrr(&m, &data), Err(Error::Data(_))));
    }

    #[test]
    fn mle_is_a_local_maximum() {
        let m = rrr_model(4, 3, 2).unwrap();
        let mut rng = RngPlan::new(9).stream(0, Lane::DATA);
        let data = m.simulate(&m.canonical_truth(), 200, &mut rng);
        let fit = mle_rrr(&m, &data).unwrap();
        for _ in 0..100 {
            let dir: Vec<f64> = (0..m.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let moved: Vec<f64> = fit
                .params_hat
                .iter()
                .zip(&dir)
                .map(|(p, d)| p + 1e-3 * d / norm)
                .collect();
            assert!(m.log_lik(&moved, &data) <= fit.max_loglik + 1e-9);
        }
    }
}
