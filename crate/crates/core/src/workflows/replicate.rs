//! Replication suites for the simulation tables and selection figures.
//!
//! `scale` shrinks the full-size studies: simulation counts scale linearly
//! and `m` is `round(100 * min(1, 2.5 * scale))`, so the default scale of
//! 0.1 gives 100 simulations with `m = 25`.

use crate::error::{Error, Result};
use crate::estimators::{
    lambda_e_tilde, lambda_v1, lambda_vm, p_v_half, run_indexed, EEstimatorConfig, ReplicationPlan,
};
use crate::model::{Lane, Model, RngPlan};
use crate::sampler::{mean_var, sample_tempered, McmcConfig, TemperingConfig};
use crate::sbic::csv_err;
use crate::zoo::reference::{
    binomial_bound_half, binomial_bound_one, binomial_half_dim, rrr_exact_table,
};
use crate::zoo::{gmm2_model, gmm2_standard_normal_truth, BinomialMixture, ModelFamily};

use super::{
    csv_writer, finish, published_lambdas, select_models, selection_summary, ExperimentConfig, LambdaInput,
    Report, ReplicateSection, SelectOptions, Target,
};

pub const DEFAULT_SCALE: f64 = 0.1;

const TABLE1_N_S: [usize; 5] = [50, 100, 200, 500, 1000];
const TABLE1_D: [f64; 3] = [0.1, 1.0, 10.0];
const FIGURE_SAMPLE_SIZES: [usize; 3] = [10, 20, 50];
/// True rank in the reduced-rank selection study.
pub const FIG2_TRUE_RANK: usize = 2;
/// True component count in the binomial selection study.
pub const FIG3_TRUE_COMPONENTS: usize = 2;
/// Success probabilities of the two true components in the binomial study.
pub const FIG3_TRUE_PROBS: [f64; 2] = [0.4, 0.6];

fn scaled(full: usize, scale: f64) -> usize {
    ((full as f64 * scale).round() as usize).max(1)
}

fn scaled_m(scale: f64) -> usize {
    ((100.0 * (2.5 * scale).min(1.0)).round() as usize).max(1)
}

/// Fills the counts `target` uses and clears the rest.
pub fn resolve_section(target: Target, rep: &mut ReplicateSection) -> Result<()> {
    let scale = rep.scale.unwrap_or(DEFAULT_SCALE);
    let positive = |v: &Option<usize>, name: &str| -> Result<()> {
        if *v == Some(0) {
            return Err(Error::config(format!("replicate {name} must be positive")));
        }
        Ok(())
    };
    positive(&rep.sims, "sims")?;
    positive(&rep.m, "m")?;
    for list in [&rep.n_s, &rep.sample_sizes].into_iter().flatten() {
        if list.is_empty() || list.iter().any(|&n| n < 2) {
            return Err(Error::config("sample size lists must be non-empty with entries >= 2"));
        }
    }
    let (sims, m, n_s, sizes) = match target {
        Target::Table1 => (Some(scaled(1000, scale)), Some(scaled_m(scale)), Some(TABLE1_N_S.to_vec()), None),
        Target::Table2 => (None, Some(scaled_m(scale)), Some(vec![2000]), None),
        Target::Table3 => (None, Some(scaled_m(scale)), Some(vec![10_000]), None),
        Target::Fig2 | Target::Fig3 => (Some(scaled(200, scale)), None, None, Some(FIGURE_SAMPLE_SIZES.to_vec())),
        Target::Fig4 => (None, None, None, None),
    };
    let pick = |given: &mut Option<usize>, default: Option<usize>| {
        *given = default.and(given.or(default));
    };
    pick(&mut rep.sims, sims);
    pick(&mut rep.m, m);
    rep.n_s = n_s.map(|d| rep.n_s.clone().unwrap_or(d));
    rep.sample_sizes = sizes.map(|d| rep.sample_sizes.clone().unwrap_or(d));
    if matches!(target, Target::Table2 | Target::Table3) && rep.n_s.as_ref().is_some_and(|v| v.len() != 1) {
        return Err(Error::config("table2 and table3 take a single n_s"));
    }
    Ok(())
}

/// Chain settings used when the configuration has no `[mcmc]` section.
pub fn default_mcmc(target: Target) -> McmcConfig {
    match target {
        Target::Table2 => McmcConfig::new(2_000_000, 200_000, 50),
        Target::Fig2 => McmcConfig::new(200_000, 20_000, 20),
        _ => McmcConfig::default(),
    }
}

pub fn run(cfg: ExperimentConfig) -> Result<Report> {
    let rep = cfg.replicate();
    match rep.target {
        Some(Target::Table1) => table1(cfg),
        Some(Target::Table2) => table2(cfg),
        Some(Target::Table3) => table3(cfg),
        Some(Target::Fig2) => selection_study(cfg, Target::Fig2),
        Some(Target::Fig3) => selection_study(cfg, Target::Fig3),
        Some(Target::Fig4) => fig4(cfg),
        None => Err(Error::config("replicate needs a target")),
    }
}

/// Row labels of the Gaussian mixture table, in output order, for the
/// largest `m`.
pub fn table1_methods(m: usize) -> Vec<String> {
    let mut rows = vec!["lambda_V_1".to_string(), "p_V/2".to_string()];
    for d in TABLE1_D {
        rows.push(format!("lambda_E_tilde(d={d})"));
    }
    for d in TABLE1_D {
        rows.push(format!("lambda_E_hat(d={d})"));
    }
    for mm in table1_ms(m) {
        rows.push(format!("lambda_V_{mm}"));
    }
    rows
}

fn table1_ms(m: usize) -> Vec<usize> {
    let small = m.div_ceil(10);
    let mut out: Vec<usize> = [small, m].into_iter().filter(|&v| v > 1).collect();
    out.dedup();
    out
}

/// One simulation of every estimator in the Gaussian mixture table, in the
/// order of [`table1_methods`].
fn table1_sim(
    n_s: usize,
    m: usize,
    c: f64,
    mcmc: &McmcConfig,
    rngs: &RngPlan,
    sim: usize,
) -> Result<(Vec<f64>, Vec<String>)> {
    let model = gmm2_model();
    let truth = gmm2_standard_normal_truth();
    let t = TemperingConfig::with_c(c).resolve(n_s)?;
    let mut warnings = Vec::new();
    let mut lambda_v = Vec::with_capacity(m);
    let mut first = None;
    for r in 0..m {
        let idx = (sim * m + r) as u64;
        let data = model.simulate(&truth, n_s, &mut rngs.stream(idx, Lane::DATA));
        let chain = sample_tempered(&model, &data, t, mcmc, &mut rngs.stream(idx, Lane::CHAIN))?;
        warnings.extend(chain.warnings.iter().cloned());
        lambda_v.push(lambda_v1(&chain)?);
        if r == 0 {
            first = Some((data, chain));
        }
    }
    let (data, chain) = first.expect("m >= 1");
    let idx = (sim * m) as u64;
    let mut row = vec![lambda_v[0]];
    let full = sample_tempered(&model, &data, 1.0, mcmc, &mut rngs.stream(idx, Lane::FULL_POSTERIOR))?;
    warnings.extend(full.warnings.iter().cloned());
    row.push(p_v_half(&full)?);
    let mut hats = Vec::new();
    for (k, d) in TABLE1_D.into_iter().enumerate() {
        let (_, delta) = EEstimatorConfig { c, d }.resolve(n_s)?;
        let tilde = lambda_e_tilde(&chain, delta)?;
        warnings.extend(tilde.warnings);
        row.push(tilde.value);
        let shifted =
            sample_tempered(&model, &data, t + delta, mcmc, &mut rngs.stream(idx, Lane(6 + k as u8)))?;
        warnings.extend(shifted.warnings.iter().cloned());
        let diff = mean_var(&shifted.loglik_draws).0 - mean_var(&chain.loglik_draws).0;
        hats.push(t * (t + delta) * diff / delta);
    }
    row.extend(hats);
    for mm in table1_ms(m) {
        row.push(lambda_v[..mm].iter().sum::<f64>() / mm as f64);
    }
    Ok((row, warnings))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_var(values);
    let n = values.len() as f64;
    let sd = if values.len() > 1 { (var * n / (n - 1.0)).sqrt() } else { f64::NAN };
    (mean, sd)
}

/// Gaussian mixture estimator comparison: one row per estimator, a mean
/// and s.d. column pair per `n_s`.
fn table1(cfg: ExperimentConfig) -> Result<Report> {
    let rep = cfg.replicate();
    let sims = rep.sims.unwrap_or(1);
    let m = rep.m.unwrap_or(1);
    let sizes = rep.n_s.clone().unwrap_or_default();
    let mcmc = cfg.mcmc();
    let c = cfg.plan().c;
    let root = RngPlan::new(cfg.seed());
    let jobs: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|a| (0..sims).map(move |s| (a, s))).collect();
    let results = run_indexed(jobs.len(), cfg.workers, |k| {
        let (a, s) = jobs[k];
        table1_sim(sizes[a], m, c, &mcmc, &root.child(a as u64), s)
    })?;
    let methods = table1_methods(m);
    let mut w = csv_writer();
    let mut head = vec!["method".to_string()];
    for n in &sizes {
        head.push(format!("mean_n{n}"));
        head.push(format!("sd_n{n}"));
    }
    w.write_record(&head).map_err(csv_err)?;
    let mut summary = format!("{:24}", "method");
    for n in &sizes {
        summary.push_str(&format!(" {:>17}", format!("n_s = {n}")));
    }
    summary.push('\n');
    for (row_idx, method) in methods.iter().enumerate() {
        let mut rec = vec![method.clone()];
        summary.push_str(&format!("{method:24}"));
        for a in 0..sizes.len() {
            let vals: Vec<f64> = (0..sims).map(|s| results[a * sims + s].0[row_idx]).collect();
            let (mean, sd) = mean_sd(&vals);
            rec.push(mean.to_string());
            rec.push(sd.to_string());
            summary.push_str(&format!(" {mean:>8.3} ({sd:>6.3})"));
        }
        summary.push('\n');
        w.write_record(&rec).map_err(csv_err)?;
    }
    let warnings = dedup_warnings(results.into_iter().flat_map(|r| r.1));
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings })
}

/// Counts repeated warnings instead of listing each one.
fn dedup_warnings(all: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for w in all {
        *counts.entry(w).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(w, k)| if k > 1 { format!("{w} (x{k})") } else { w })
        .collect()
}

struct Cell {
    i: usize,
    j: usize,
    lambda_hat: f64,
    std_error: f64,
    warnings: Vec<String>,
}

/// `lambda_vm(i, j)` for all `1 <= j <= i <= max`, truths at the family's
/// default parameters.
fn lambda_cells(
    cfg: &ExperimentConfig,
    max: usize,
    family: impl Fn(usize) -> ModelFamily,
) -> Result<Vec<Cell>> {
    let rep = cfg.replicate();
    let m = rep.m.unwrap_or(1);
    let n_s = rep.n_s.as_ref().and_then(|v| v.first().copied()).unwrap_or(1000);
    let mcmc = cfg.mcmc();
    let root = RngPlan::new(cfg.seed());
    let mut cells = Vec::new();
    for i in 1..=max {
        for j in 1..=i {
            let fit = family(i).build()?;
            let truth_family = family(j);
            let truth = truth_family.build()?;
            let plan = ReplicationPlan::new(n_s, m, cfg.plan().c, truth_family.default_truth()?);
            let est = lambda_vm(
                fit.as_ref(),
                truth.as_ref(),
                &plan,
                &mcmc,
                &root.child((i * 16 + j) as u64),
                cfg.workers,
            )?;
            let warnings = est.warnings.iter().map(|w| format!("({i}, {j}): {w}")).collect();
            cells.push(Cell { i, j, lambda_hat: est.lambda_hat, std_error: est.std_error, warnings });
        }
    }
    Ok(cells)
}

fn rrr_family(rank: usize) -> ModelFamily {
    ModelFamily::by_name(&format!("rrr:{rank}")).expect("valid rank")
}

fn binomial_family(components: usize) -> ModelFamily {
    ModelFamily::by_name(&format!("binomial_mixture:{components}")).expect("valid component count")
}

/// Reduced-rank regression, `M = N = 6`: exact and estimated coefficients.
fn table2(cfg: ExperimentConfig) -> Result<Report> {
    let cells = lambda_cells(&cfg, 5, rrr_family)?;
    let mut w = csv_writer();
    let mut head = vec!["i".to_string()];
    for j in 1..=5 {
        head.extend([format!("lambda_j{j}"), format!("lambda_hat_j{j}"), format!("se_j{j}")]);
    }
    w.write_record(&head).map_err(csv_err)?;
    let mut summary = String::from("  i   (j: exact / estimate)\n");
    for i in 1..=5 {
        let mut rec = vec![i.to_string()];
        summary.push_str(&format!("{i:3}"));
        for j in 1..=5 {
            match cells.iter().find(|c| c.i == i && c.j == j) {
                Some(c) => {
                    let exact = rrr_exact_table(i, j).expect("covered");
                    rec.extend([exact.to_string(), c.lambda_hat.to_string(), c.std_error.to_string()]);
                    summary.push_str(&format!("  {exact:5.1} / {:6.2}", c.lambda_hat));
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        summary.push('\n');
        w.write_record(&rec).map_err(csv_err)?;
    }
    let warnings = dedup_warnings(cells.into_iter().flat_map(|c| c.warnings));
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings })
}

/// Binomial mixtures, `k = 30`: regular value, the two upper bounds and the
/// estimate.
fn table3(cfg: ExperimentConfig) -> Result<Report> {
    let cells = lambda_cells(&cfg, 4, binomial_family)?;
    let mut w = csv_writer();
    let mut head = vec!["i".to_string()];
    for j in 1..=4 {
        head.extend([
            format!("half_dim_j{j}"),
            format!("bound_1_j{j}"),
            format!("bound_0.5_j{j}"),
            format!("lambda_hat_j{j}"),
            format!("se_j{j}"),
        ]);
    }
    w.write_record(&head).map_err(csv_err)?;
    let mut summary = String::from("  i   (j: bound_1 / bound_0.5 / estimate)\n");
    for i in 1..=4 {
        let mut rec = vec![i.to_string()];
        summary.push_str(&format!("{i:3}"));
        for j in 1..=4 {
            match cells.iter().find(|c| c.i == i && c.j == j) {
                Some(c) => {
                    rec.extend([
                        binomial_half_dim(i).to_string(),
                        binomial_bound_one(i, j).to_string(),
                        binomial_bound_half(i, j).to_string(),
                        c.lambda_hat.to_string(),
                        c.std_error.to_string(),
                    ]);
                    summary.push_str(&format!(
                        "  {:4.2} / {:4.2} / {:5.2}",
                        binomial_bound_one(i, j),
                        binomial_bound_half(i, j),
                        c.lambda_hat
                    ));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        summary.push('\n');
        w.write_record(&rec).map_err(csv_err)?;
    }
    let warnings = dedup_warnings(cells.into_iter().flat_map(|c| c.warnings));
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings })
}

/// Selection frequencies by criterion and sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFrequencies {
    pub n: usize,
    pub criterion: String,
    /// `counts[k]` simulations selected candidate `k`.
    pub counts: Vec<usize>,
    pub sims: usize,
}

impl SelectionFrequencies {
    pub fn rate(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.sims as f64
    }
}

/// Truth, candidate chain and truth parameters for a selection figure.
pub fn figure_setup(target: Target) -> Result<(Vec<ModelFamily>, ModelFamily, Vec<f64>)> {
    match target {
        Target::Fig2 => {
            let truth = rrr_family(FIG2_TRUE_RANK);
            let params = truth.default_truth()?;
            Ok(((1..=5).map(rrr_family).collect(), truth, params))
        }
        Target::Fig3 => {
            let truth = binomial_family(FIG3_TRUE_COMPONENTS);
            let params = BinomialMixture::pack(&[0.5, 0.5], &FIG3_TRUE_PROBS);
            Ok(((1..=4).map(binomial_family).collect(), truth, params))
        }
        _ => Err(Error::config("not a selection study")),
    }
}

/// Repeated selection on data simulated from the figure's truth.
pub fn selection_frequencies(
    target: Target,
    sample_sizes: &[usize],
    sims: usize,
    mcmc: &McmcConfig,
    em: &crate::zoo::EmConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<(Vec<SelectionFrequencies>, Vec<String>)> {
    let (candidates, truth_family, params) = figure_setup(target)?;
    let truth = truth_family.build()?;
    let table = published_lambdas(&candidates).ok_or_else(|| Error::config("no published table"))?;
    let opts = SelectOptions {
        lambdas: LambdaInput::Table(table),
        wbic: true,
        strict: false,
        mcmc: mcmc.clone(),
        em: *em,
    };
    let root = RngPlan::new(seed);
    let jobs: Vec<(usize, usize)> = (0..sample_sizes.len()).flat_map(|a| (0..sims).map(move |s| (a, s))).collect();
    let results = run_indexed(jobs.len(), workers, |k| {
        let (a, s) = jobs[k];
        let rngs = root.child(a as u64).child(s as u64);
        let data = truth.simulate(&params, sample_sizes[a], &mut rngs.stream(0, Lane::DATA));
        select_models(&candidates, &data, &opts, &rngs.child(1), None)
    })?;
    let names: Vec<String> = results[0].criteria.iter().map(|c| c.name.clone()).collect();
    let mut out = Vec::new();
    for (a, &n) in sample_sizes.iter().enumerate() {
        for (ci, name) in names.iter().enumerate() {
            let mut counts = vec![0; candidates.len()];
            for s in 0..sims {
                counts[results[a * sims + s].criteria[ci].argmax()] += 1;
            }
            out.push(SelectionFrequencies { n, criterion: name.clone(), counts, sims });
        }
    }
    let warnings = dedup_warnings(results.into_iter().flat_map(|r| r.warnings));
    Ok((out, warnings))
}

fn selection_study(cfg: ExperimentConfig, target: Target) -> Result<Report> {
    let rep = cfg.replicate();
    let sizes = rep.sample_sizes.clone().unwrap_or_default();
    let sims = rep.sims.unwrap_or(1);
    let (freqs, warnings) =
        selection_frequencies(target, &sizes, sims, &cfg.mcmc(), &cfg.em(), cfg.seed(), cfg.workers)?;
    let k = freqs.first().map(|f| f.counts.len()).unwrap_or(0);
    let mut w = csv_writer();
    let mut head = vec!["n".to_string(), "criterion".to_string()];
    head.extend((1..=k).map(|c| format!("select_{c}")));
    w.write_record(&head).map_err(csv_err)?;
    let mut summary = format!("{:>4} {:>9}", "n", "criterion");
    for c in 1..=k {
        summary.push_str(&format!(" {c:>6}"));
    }
    summary.push('\n');
    for f in &freqs {
        let mut rec = vec![f.n.to_string(), f.criterion.clone()];
        summary.push_str(&format!("{:>4} {:>9}", f.n, f.criterion));
        for c in 0..k {
            rec.push(f.rate(c).to_string());
            summary.push_str(&format!(" {:>6.3}", f.rate(c)));
        }
        summary.push('\n');
        w.write_record(&rec).map_err(csv_err)?;
    }
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings })
}

/// Posterior model probabilities on the cormorant data with the published
/// binomial coefficients.
fn fig4(cfg: ExperimentConfig) -> Result<Report> {
    let candidates: Vec<ModelFamily> = (1..=4).map(binomial_family).collect();
    let table = published_lambdas(&candidates).ok_or_else(|| Error::config("no published table"))?;
    let opts = SelectOptions {
        lambdas: LambdaInput::Table(table),
        wbic: true,
        strict: false,
        mcmc: cfg.mcmc(),
        em: cfg.em(),
    };
    let data = crate::zoo::cormorant_fixture();
    let result = select_models(&candidates, &data, &opts, &RngPlan::new(cfg.seed()), cfg.workers)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let summary = selection_summary(&result);
    let warnings = result.warnings.clone();
    Ok(Report { config: cfg, csv, summary, warnings })
}
