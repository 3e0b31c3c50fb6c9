//! Command implementations behind the `rlct` binary.
//!
//! Each command takes a resolved [`ExperimentConfig`] and returns CSV text
//! that starts with the configuration echoed as `#` comment lines.

mod config;
pub mod replicate;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

pub use config::{
    Command, DataSection, ExperimentConfig, Fixture, LambdaSource, OracleSection, PlanSection,
    ReplicateSection, SampleSection, SelectSection, Target, DEFAULT_SEED,
};

use crate::error::{Error, Result};
use crate::estimators::{lambda_vm, run_indexed, wbic, ReplicationPlan, RlctEstimate};
use crate::model::{to_unconstrained, Dataset, Lane, Model, RngPlan};
use crate::sampler::{
    mcse_mean, mcse_variance, mean_var, quadrature_tempered_moments, sample_tempered, McmcConfig,
    QuadratureGrid, TemperingConfig,
};
use crate::sbic::{
    assemble_wsbic_table, bic, csv_err, solve_sbic, Criterion, ModelPoset, RlctTable, SelectionResult,
};
use crate::zoo::reference::{
    binomial_bound_half, binomial_bound_one, binomial_published_estimate, rrr_exact_table,
    rrr_published_estimate,
};
use crate::zoo::{cormorant_fixture, EmConfig, ModelFamily};

/// Dimension used by BIC: the parameter count, except for reduced-rank
/// regression where it is the dimension `H (M + N - H)` of the rank-`H`
/// matrices.
pub fn bic_dim(family: &ModelFamily, model: &dyn Model) -> usize {
    match *family {
        ModelFamily::Rrr { inputs, outputs, rank, .. } => rank * (inputs + outputs - rank),
        _ => model.dim(),
    }
}

fn is_standard_rrr(c: &ModelFamily) -> bool {
    matches!(*c, ModelFamily::Rrr { inputs: 6, outputs: 6, rank, .. } if (1..=5).contains(&rank))
}

fn is_cormorant_binomial(c: &ModelFamily) -> bool {
    matches!(*c, ModelFamily::BinomialMixture { trials: 30, components, .. } if (1..=4).contains(&components))
}

fn chain_table(candidates: &[ModelFamily], f: impl Fn(usize, usize) -> Option<f64>) -> Option<RlctTable> {
    let mut table = RlctTable::new();
    for (i, ci) in candidates.iter().enumerate() {
        for (j, cj) in candidates.iter().enumerate().take(i + 1) {
            table.insert(i, j, f(ci.order(), cj.order())?);
        }
    }
    Some(table)
}

/// Published learning-coefficient estimates for a chain of candidates, when
/// every pair is covered.
pub fn published_lambdas(candidates: &[ModelFamily]) -> Option<RlctTable> {
    if candidates.iter().all(is_cormorant_binomial) {
        chain_table(candidates, binomial_published_estimate)
    } else if candidates.iter().all(is_standard_rrr) {
        chain_table(candidates, rrr_published_estimate)
    } else {
        None
    }
}

/// Exact coefficients, available for reduced-rank regression with
/// `M = N = 6`.
pub fn exact_lambdas(candidates: &[ModelFamily]) -> Option<RlctTable> {
    if candidates.iter().all(is_standard_rrr) {
        chain_table(candidates, rrr_exact_table)
    } else {
        None
    }
}

/// The two upper-bound tables for binomial mixtures with a common `k`.
pub fn binomial_bounds(candidates: &[ModelFamily]) -> Option<(RlctTable, RlctTable)> {
    let trials = match candidates.first()? {
        ModelFamily::BinomialMixture { trials, .. } => *trials,
        _ => return None,
    };
    if !candidates
        .iter()
        .all(|c| matches!(c, ModelFamily::BinomialMixture { trials: k, .. } if *k == trials))
    {
        return None;
    }
    let one = chain_table(candidates, |i, j| Some(binomial_bound_one(i, j)))?;
    let half = chain_table(candidates, |i, j| Some(binomial_bound_half(i, j)))?;
    Some((one, half))
}

/// Reads whitespace- or comma-separated numbers, one observation per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_data_file(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read data file {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::data(format!("{}:{}: {s:?} is not a number", path.display(), lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::data(format!(
                    "{}:{}: expected {w} values, found {}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
    }
    let width = width.ok_or_else(|| Error::data(format!("{} holds no observations", path.display())))?;
    Dataset::new(values, width)
}

/// Loads or simulates the observations described by `section`.
pub fn load_dataset(
    section: &DataSection,
    truth: Option<(&dyn Model, &[f64])>,
    rngs: &RngPlan,
) -> Result<Dataset> {
    if let Some(Fixture::Cormorant) = section.fixture {
        return Ok(cormorant_fixture());
    }
    if let Some(path) = &section.path {
        return read_data_file(path);
    }
    match (section.n, truth) {
        (Some(n), Some((model, params))) => Ok(model.simulate(params, n, &mut rngs.stream(0, Lane::DATA))),
        _ => Err(Error::config("no data source configured")),
    }
}

/// How WsBIC obtains its learning coefficients.
#[derive(Debug, Clone)]
pub enum LambdaInput {
    Table(RlctTable),
    /// `lambda_vm(i, j)` with the truth at model `j`'s MLE on the data.
    Estimate(PlanSection),
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub lambdas: LambdaInput,
    pub wbic: bool,
    pub strict: bool,
    pub mcmc: McmcConfig,
    pub em: EmConfig,
}

/// Fits every candidate and scores them with BIC, WBIC, WsBIC and, where
/// reference coefficients exist, sBIC (exact) or the binomial upper-bound
/// variants `sBIC_1` and `sBIC_0.5`.
pub fn select_models(
    candidates: &[ModelFamily],
    data: &Dataset,
    opts: &SelectOptions,
    rngs: &RngPlan,
    workers: Option<usize>,
) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::config("no candidate models"));
    }
    let models: Vec<Arc<dyn Model>> = candidates.iter().map(|c| c.build()).collect::<Result<_>>()?;
    for m in &models {
        m.check_data(data)?;
    }
    let names: Vec<String> = models.iter().map(|m| m.name()).collect();
    let poset = ModelPoset::chain(names.clone())?;
    let n = data.n();

    let fits = run_indexed(candidates.len(), workers, |i| {
        let mle = candidates[i].mle(data, &opts.em, &mut rngs.stream(i as u64, Lane::EM))?;
        let w = if opts.wbic {
            Some(wbic(models[i].as_ref(), data, &opts.mcmc, &mut rngs.stream(i as u64, Lane::CHAIN))?)
        } else {
            None
        };
        Ok((mle, w))
    })?;
    let mut warnings = Vec::new();
    for (name, (mle, w)) in names.iter().zip(&fits) {
        if !mle.converged {
            warnings.push(format!("{name}: maximum-likelihood fit did not converge"));
        }
        if let Some(w) = w {
            warnings.extend(w.warnings.iter().map(|x| format!("{name}: WBIC chain: {x}")));
        }
    }
    let max_logliks: Vec<f64> = fits.iter().map(|f| f.0.max_loglik).collect();
    let priors = poset.priors().to_vec();

    let mut criteria = Vec::new();
    let bic_scores = candidates
        .iter()
        .zip(&models)
        .zip(&max_logliks)
        .map(|((c, m), &ll)| bic(ll, bic_dim(c, m.as_ref()), n))
        .collect();
    criteria.push(Criterion::new("BIC", bic_scores, &priors)?);

    let sbic_with = |lambdas: &RlctTable| -> Result<Vec<f64>> {
        let (table, _) = assemble_wsbic_table(&poset, &max_logliks, lambdas, n, false)?;
        solve_sbic(&poset, &table)
    };
    if let Some(exact) = exact_lambdas(candidates) {
        criteria.push(Criterion::new("sBIC", sbic_with(&exact)?, &priors)?);
    }
    if let Some((one, half)) = binomial_bounds(candidates) {
        criteria.push(Criterion::new("sBIC_1", sbic_with(&one)?, &priors)?);
        criteria.push(Criterion::new("sBIC_0.5", sbic_with(&half)?, &priors)?);
    }
    if opts.wbic {
        let scores = fits.iter().map(|f| f.1.as_ref().map(|w| w.value).unwrap_or(f64::NAN)).collect();
        criteria.push(Criterion::new("WBIC", scores, &priors)?);
    }

    let lambdas = match &opts.lambdas {
        LambdaInput::Table(t) => t.clone(),
        LambdaInput::Estimate(plan) => {
            let (table, w) = estimate_lambda_table(candidates, &models, &fits, plan, &opts.mcmc, rngs, workers)?;
            warnings.extend(w);
            table
        }
    };
    let (table, w) = assemble_wsbic_table(&poset, &max_logliks, &lambdas, n, opts.strict)?;
    warnings.extend(w);
    criteria.push(Criterion::new("WsBIC", solve_sbic(&poset, &table)?, &priors)?);

    Ok(SelectionResult { models: names, criteria, warnings })
}

fn estimate_lambda_table(
    candidates: &[ModelFamily],
    models: &[Arc<dyn Model>],
    fits: &[(crate::zoo::MleResult, Option<crate::estimators::WbicValue>)],
    plan: &PlanSection,
    mcmc: &McmcConfig,
    rngs: &RngPlan,
    workers: Option<usize>,
) -> Result<(RlctTable, Vec<String>)> {
    let mut table = RlctTable::new();
    let mut warnings = Vec::new();
    for i in 0..candidates.len() {
        for j in 0..=i {
            let params = fits[j].0.params_hat.clone();
            to_unconstrained(models[j].as_ref(), &params).map_err(|e| {
                Error::numeric(format!(
                    "MLE of {} is on the boundary and cannot generate data: {e}",
                    models[j].name()
                ))
            })?;
            let rp = ReplicationPlan::new(plan.n_s, plan.m, plan.c, params);
            let est = lambda_vm(
                models[i].as_ref(),
                models[j].as_ref(),
                &rp,
                mcmc,
                &rngs.child(1000 + (i * candidates.len() + j) as u64),
                workers,
            )?;
            warnings.extend(est.warnings.iter().map(|w| format!("lambda({}, {}): {w}", i + 1, j + 1)));
            table.insert(i, j, est.lambda_hat);
        }
    }
    Ok((table, warnings))
}

/// Writes `bytes` to `out`, or to stdout.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = fs::File::create(path)
                .map_err(|e| Error::config(format!("cannot create {}: {e}", path.display())))?;
            f.write_all(bytes)?;
        }
        None => {
            let mut lock = std::io::stdout().lock();
            lock.write_all(bytes)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// Output of one command: the resolved configuration, CSV rows and
/// warnings for stderr.
#[derive(Debug, Clone)]
pub struct Report {
    pub config: ExperimentConfig,
    pub csv: Vec<u8>,
    pub summary: String,
    pub warnings: Vec<String>,
}

impl Report {
    /// Header plus CSV, exactly as written to disk.
    pub fn render(&self) -> Result<Vec<u8>> {
        let mut out = self.config.header()?.into_bytes();
        out.extend_from_slice(&self.csv);
        Ok(out)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::numeric(format!("csv buffer: {e}")))
}

/// Runs `command` on an unresolved configuration.
pub fn run(command: Command, cfg: ExperimentConfig) -> Result<Report> {
    let cfg = cfg.resolve(command)?;
    match command {
        Command::EstimateRlct => estimate_rlct(cfg),
        Command::Select => select(cfg),
        Command::Replicate => replicate::run(cfg),
        Command::Sample => sample(cfg),
        Command::Oracle => oracle(cfg),
    }
}

fn pair(cfg: &ExperimentConfig) -> Result<(Arc<dyn Model>, Arc<dyn Model>, Vec<f64>)> {
    let fit = cfg.fit()?.build()?;
    let truth = cfg.truth()?.build()?;
    let params = cfg.truth_params.clone().ok_or_else(|| Error::config("truth_params unresolved"))?;
    Ok((fit, truth, params))
}

fn estimate_rlct(cfg: ExperimentConfig) -> Result<Report> {
    let (fit, truth, params) = pair(&cfg)?;
    let plan = cfg.plan();
    let rp = ReplicationPlan::new(plan.n_s, plan.m, plan.c, params);
    let est = lambda_vm(fit.as_ref(), truth.as_ref(), &rp, &cfg.mcmc(), &RngPlan::new(cfg.seed()), cfg.workers)?;
    let mut w = csv_writer();
    w.write_record(RlctEstimate::CSV_HEADER).map_err(csv_err)?;
    w.write_record(est.csv_record()).map_err(csv_err)?;
    let summary = format!(
        "lambda_hat({}, {}) = {:.4} (s.e. {:.4}, m = {}, n_s = {})\n",
        est.model, est.truth, est.lambda_hat, est.std_error, est.m, est.n_s
    );
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings: est.warnings })
}

fn select(cfg: ExperimentConfig) -> Result<Report> {
    let sel = cfg.select();
    let rngs = RngPlan::new(cfg.seed());
    let data = load_dataset(&cfg.data(), None, &rngs)?;
    let lambdas = match sel.lambda_source {
        Some(LambdaSource::Published) => LambdaInput::Table(
            published_lambdas(&sel.candidates)
                .ok_or_else(|| Error::config("no published learning coefficients for these candidates"))?,
        ),
        Some(LambdaSource::Table) => {
            let path = sel.rlct_table.as_ref().ok_or_else(|| Error::config("rlct_table missing"))?;
            let file = fs::File::open(path)
                .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
            LambdaInput::Table(RlctTable::read_csv(file)?)
        }
        _ => LambdaInput::Estimate(cfg.plan()),
    };
    let opts = SelectOptions {
        lambdas,
        wbic: sel.wbic.unwrap_or(true),
        strict: sel.strict_monotonicity,
        mcmc: cfg.mcmc(),
        em: cfg.em(),
    };
    let result = select_models(&sel.candidates, &data, &opts, &rngs, cfg.workers)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let summary = selection_summary(&result);
    let warnings = result.warnings.clone();
    Ok(Report { config: cfg, csv, summary, warnings })
}

/// Human-readable table of posterior model probabilities.
pub fn selection_summary(result: &SelectionResult) -> String {
    let width = result.models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:width$}", "model");
    for c in &result.criteria {
        s.push_str(&format!(" {:>9}", c.name));
    }
    s.push('\n');
    for (k, name) in result.models.iter().enumerate() {
        s.push_str(&format!("{name:width$}"));
        for c in &result.criteria {
            s.push_str(&format!(" {:>9.4}", c.probs[k]));
        }
        s.push('\n');
    }
    s.push_str(&format!("{:width$}", "selected"));
    for c in &result.criteria {
        s.push_str(&format!(" {:>9}", c.argmax() + 1));
    }
    s.push('\n');
    s
}

fn resolved_t(explicit: Option<f64>, cfg: &ExperimentConfig, n: usize) -> Result<f64> {
    let tc = TemperingConfig { c: cfg.plan().c, t: explicit };
    tc.resolve(n)
}

fn sample(cfg: ExperimentConfig) -> Result<Report> {
    let (fit, truth, params) = pair(&cfg)?;
    let rngs = RngPlan::new(cfg.seed());
    let data = load_dataset(&cfg.data(), Some((truth.as_ref(), &params)), &rngs)?;
    let t = resolved_t(cfg.sample.and_then(|s| s.t), &cfg, data.n())?;
    let mcmc = cfg.mcmc();
    let chain = sample_tempered(fit.as_ref(), &data, t, &mcmc, &mut rngs.stream(0, Lane::CHAIN))?;
    let mut w = csv_writer();
    let mut head = vec!["draw".to_string(), "loglik".to_string()];
    if mcmc.keep_params {
        head.extend((1..=fit.dim()).map(|k| format!("theta_{k}")));
    }
    w.write_record(&head).map_err(csv_err)?;
    for (k, ll) in chain.loglik_draws.iter().enumerate() {
        let mut row = vec![k.to_string(), ll.to_string()];
        if let Some(p) = &chain.param_draws {
            row.extend(p[k].iter().map(|x| x.to_string()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let (e, v) = mean_var(&chain.loglik_draws);
    let summary = format!(
        "t = {t:.6}, draws = {}, acceptance = {:.3}, ESS = {:.1}, E[loglik] = {e:.6}, V[loglik] = {v:.6}\n",
        chain.len(),
        chain.acceptance_rate,
        chain.ess_loglik
    );
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings: chain.warnings })
}

/// Compares MCMC moments of the log-likelihood with grid quadrature for a
/// one- or two-parameter model.
fn oracle(cfg: ExperimentConfig) -> Result<Report> {
    let (fit, truth, params) = pair(&cfg)?;
    let o = cfg.oracle.unwrap_or_default();
    let rngs = RngPlan::new(cfg.seed());
    let data = load_dataset(&cfg.data(), Some((truth.as_ref(), &params)), &rngs)?;
    let t = resolved_t(o.t, &cfg, data.n())?;
    let mle = cfg.fit()?.mle(&data, &cfg.em(), &mut rngs.stream(0, Lane::EM))?;
    let (centre, _) = to_unconstrained(fit.as_ref(), &mle.params_hat)
        .map_err(|e| Error::numeric(format!("MLE is on the boundary, no grid centre: {e}")))?;
    let grid = QuadratureGrid::centred(o.resolution, &centre, o.half_width);
    let q = quadrature_tempered_moments(fit.as_ref(), &data, t, &grid)?;
    let chain = sample_tempered(fit.as_ref(), &data, t, &cfg.mcmc(), &mut rngs.stream(0, Lane::CHAIN))?;
    let (e, v) = mean_var(&chain.loglik_draws);
    let (se_e, se_v) = (mcse_mean(&chain.loglik_draws), mcse_variance(&chain.loglik_draws));
    let mut w = csv_writer();
    w.write_record(["moment", "quadrature", "mcmc", "mcse", "z"]).map_err(csv_err)?;
    for (name, qv, mv, se) in [("mean", q.mean, e, se_e), ("variance", q.variance, v, se_v)] {
        w.write_record([name.to_string(), qv.to_string(), mv.to_string(), se.to_string(), ((mv - qv) / se).to_string()])
            .map_err(csv_err)?;
    }
    let summary = format!(
        "t = {t:.6}: E quadrature {:.6} mcmc {e:.6} (z = {:.2}); V quadrature {:.6} mcmc {v:.6} (z = {:.2}); tail mass {:.2e}\n",
        q.mean,
        (e - q.mean) / se_e,
        q.variance,
        (v - q.variance) / se_v,
        q.tail_mass
    );
    Ok(Report { config: cfg, csv: finish(w)?, summary, warnings: chain.warnings })
}
