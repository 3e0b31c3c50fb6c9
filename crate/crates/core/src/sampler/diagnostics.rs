//! Summary statistics for scalar draw series.

/// Mean and variance with denominator `n`. Two passes for accuracy.
pub fn mean_var(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Effective sample size via Geyer's initial monotone sequence estimator.
///
/// Capped at the series length; a constant series returns its length.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let (mean, c0) = mean_var(series);
    if !(c0 > 0.0) {
        return n as f64;
    }
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let autocorr = |lag: usize| -> f64 {
        let s: f64 = centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum();
        s / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// Monte Carlo standard error of the series mean.
pub fn mcse_mean(series: &[f64]) -> f64 {
    let (_, var) = mean_var(series);
    (var / effective_sample_size(series)).sqrt()
}

/// Monte Carlo standard error of the plug-in variance, from the series of
/// squared deviations.
pub fn mcse_variance(series: &[f64]) -> f64 {
    let (mean, _) = mean_var(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - mean) * (x - mean)).collect();
    mcse_mean(&sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_point_series() {
        assert_eq!(mean_var(&[0.0, 2.0]), (1.0, 1.0));
        assert_eq!(mean_var(&[3.0; 10]).1, 0.0);
    }

    #[test]
    fn iid_series_has_near_full_ess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&x);
        assert!(ess > 4000.0, "{ess}");
    }

    #[test]
    fn ar1_series_matches_theory() {
        // AR(1) with phi = 0.9: tau = (1 + phi) / (1 - phi) = 19
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.0; 200_000];
        for i in 1..x.len() {
            let e: f64 = rng.random::<f64>() - 0.5;
            x[i] = 0.9 * x[i - 1] + e;
        }
        let tau = x.len() as f64 / effective_sample_size(&x);
        assert!((tau - 19.0).abs() < 2.0, "{tau}");
    }
}
