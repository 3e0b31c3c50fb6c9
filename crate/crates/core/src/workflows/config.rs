//! Experiment configuration, read from TOML or from the comment header of a
//! previous run's CSV output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::McmcConfig;
use crate::zoo::{EmConfig, ModelFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EstimateRlct,
    Select,
    Replicate,
    Sample,
    Oracle,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::EstimateRlct => "estimate-rlct",
            Command::Select => "select",
            Command::Replicate => "replicate",
            Command::Sample => "sample",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub n_s: usize,
    pub m: usize,
    pub c: f64,
    /// Step multiplier for the finite-difference estimators.
    pub d: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self { n_s: 1000, m: 25, c: 1.0, d: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Cormorant,
}

/// Where the observations come from: a bundled fixture, a file, or a
/// simulation of `n` points from the truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    /// Values printed alongside the zoo references.
    Published,
    /// A CSV table with columns `i, j, lambda`.
    Table,
    /// Fresh variance-based estimates with truths at the fitted MLEs.
    Estimate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    /// Candidate models, smallest first; each must be nested in the next.
    pub candidates: Vec<ModelFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_source: Option<LambdaSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rlct_table: Option<PathBuf>,
    pub strict_monotonicity: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wbic: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Table1,
    Table2,
    Table3,
    Fig2,
    Fig3,
    Fig4,
}

impl Target {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "table1" => Target::Table1,
            "table2" => Target::Table2,
            "table3" => Target::Table3,
            "fig2" => Target::Fig2,
            "fig3" => Target::Fig3,
            "fig4" => Target::Fig4,
            other => {
                return Err(Error::config(format!(
                    "unknown target {other:?}; expected table1, table2, table3, fig2, fig3 or fig4"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    /// Multiplies simulation counts and `m`; 1 is the full-size study.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sims: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_s: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Inverse temperature; `c / log n` with the plan's `c` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub resolution: usize,
    /// Grid half-width around the MLE in unconstrained coordinates.
    pub half_width: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { t: None, resolution: 2001, half_width: 10.0 }
    }
}

/// Everything a run needs. Sections that a command does not read are
/// dropped by [`ExperimentConfig::resolve`], so the echoed header lists
/// only the settings that shaped the output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_params: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<ModelFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<ModelFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicate: Option<ReplicateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<EmConfig>,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Parses TOML text. A leading block of `#` lines (a previous run's
    /// header) is taken as the configuration when present.
    pub fn parse(text: &str) -> Result<Self> {
        let body = if text.starts_with('#') { extract_header(text) } else { text.to_string() };
        toml::from_str(&body).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn plan(&self) -> PlanSection {
        self.plan.unwrap_or_default()
    }

    pub fn mcmc(&self) -> McmcConfig {
        self.mcmc.clone().unwrap_or_default()
    }

    pub fn em(&self) -> EmConfig {
        self.em.unwrap_or_default()
    }

    pub fn data(&self) -> DataSection {
        self.data.clone().unwrap_or_default()
    }

    pub fn select(&self) -> SelectSection {
        self.select.clone().unwrap_or_default()
    }

    pub fn replicate(&self) -> ReplicateSection {
        self.replicate.clone().unwrap_or_default()
    }

    pub fn fit(&self) -> Result<&ModelFamily> {
        self.fit.as_ref().ok_or_else(|| Error::config("missing [fit] section"))
    }

    /// The truth model; defaults to the fitted model itself.
    pub fn truth(&self) -> Result<&ModelFamily> {
        match &self.truth {
            Some(t) => Ok(t),
            None => self.fit(),
        }
    }

    /// Checks the configuration for `command` and fills in every default it
    /// relies on. Unused sections are removed.
    pub fn resolve(self, command: Command) -> Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::config(format!(
                    "configuration was written for `{}`, not `{}`",
                    c.as_str(),
                    command.as_str()
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("worker count must be at least 1"));
        }
        let mut out = ExperimentConfig {
            command: Some(command),
            seed: Some(self.seed()),
            workers: self.workers,
            ..Default::default()
        };
        let mcmc = self.mcmc();
        match command {
            Command::EstimateRlct => {
                self.resolve_pair(&mut out)?;
                let plan = self.plan();
                crate::estimators::ReplicationPlan::new(plan.n_s, plan.m, plan.c, vec![]).validate()?;
                mcmc.validate()?;
                out.plan = Some(plan);
                out.mcmc = Some(mcmc);
            }
            Command::Sample | Command::Oracle => {
                self.resolve_pair(&mut out)?;
                let data = self.data();
                check_data_section(&data, true)?;
                out.data = Some(data);
                mcmc.validate()?;
                out.mcmc = Some(mcmc);
                if command == Command::Sample {
                    let s = self.sample.unwrap_or_default();
                    if s.t.is_none() {
                        let plan = self.plan();
                        out.plan = Some(PlanSection { c: plan.c, ..Default::default() });
                    }
                    out.sample = Some(s);
                } else {
                    let o = self.oracle.unwrap_or_default();
                    if o.resolution < 3 || !(o.half_width > 0.0) {
                        return Err(Error::config("oracle needs resolution >= 3 and a positive half_width"));
                    }
                    if o.t.is_none() {
                        let plan = self.plan();
                        out.plan = Some(PlanSection { c: plan.c, ..Default::default() });
                    }
                    out.oracle = Some(o);
                }
            }
            Command::Select => {
                let data = self.data();
                check_data_section(&data, false)?;
                let mut sel = self.select();
                if sel.candidates.is_empty() {
                    if data.fixture == Some(Fixture::Cormorant) {
                        sel.candidates = (1..=4)
                            .map(|c| ModelFamily::by_name(&format!("binomial_mixture:{c}")))
                            .collect::<Result<_>>()?;
                    } else {
                        return Err(Error::config("select needs [select] candidates"));
                    }
                }
                for w in sel.candidates.windows(2) {
                    if !w[0].nested_in(&w[1]) || w[0] == w[1] {
                        return Err(Error::config(format!(
                            "candidates must form an increasing nested chain; {:?} is not below {:?}",
                            w[0], w[1]
                        )));
                    }
                }
                for c in &sel.candidates {
                    c.build()?;
                }
                let source = match (sel.lambda_source, &sel.rlct_table) {
                    (Some(LambdaSource::Table), None) => {
                        return Err(Error::config("lambda_source = \"table\" needs rlct_table"))
                    }
                    (Some(s), Some(_)) if s != LambdaSource::Table => {
                        return Err(Error::config("rlct_table given but lambda_source is not \"table\""))
                    }
                    (Some(s), _) => s,
                    (None, Some(_)) => LambdaSource::Table,
                    (None, None) => {
                        if super::published_lambdas(&sel.candidates).is_some() {
                            LambdaSource::Published
                        } else {
                            LambdaSource::Estimate
                        }
                    }
                };
                if source == LambdaSource::Published && super::published_lambdas(&sel.candidates).is_none() {
                    return Err(Error::config("no published learning coefficients for these candidates"));
                }
                sel.lambda_source = Some(source);
                let wbic = sel.wbic.unwrap_or(true);
                sel.wbic = Some(wbic);
                if source == LambdaSource::Estimate {
                    let plan = self.plan();
                    crate::estimators::ReplicationPlan::new(plan.n_s, plan.m, plan.c, vec![]).validate()?;
                    out.plan = Some(plan);
                }
                if source == LambdaSource::Estimate || wbic {
                    mcmc.validate()?;
                    out.mcmc = Some(mcmc);
                }
                out.em = Some(self.em());
                out.data = Some(data);
                out.select = Some(sel);
            }
            Command::Replicate => {
                let mut rep = self.replicate();
                let target = rep.target.ok_or_else(|| Error::config("replicate needs a target"))?;
                let scale = rep.scale.unwrap_or(super::replicate::DEFAULT_SCALE);
                if !(scale > 0.0 && scale <= 1.0) {
                    return Err(Error::config(format!("scale must lie in (0, 1], got {scale}")));
                }
                rep.scale = Some(scale);
                super::replicate::resolve_section(target, &mut rep)?;
                let mcmc = self.mcmc.clone().unwrap_or_else(|| super::replicate::default_mcmc(target));
                mcmc.validate()?;
                let plan = self.plan();
                if !(plan.c > 0.0) {
                    return Err(Error::config("c must be positive"));
                }
                out.plan = Some(PlanSection { c: plan.c, ..Default::default() });
                out.mcmc = Some(mcmc);
                if matches!(target, Target::Fig3 | Target::Fig4) {
                    out.em = Some(self.em());
                }
                out.replicate = Some(rep);
            }
        }
        Ok(out)
    }

    fn resolve_pair(&self, out: &mut ExperimentConfig) -> Result<()> {
        let fit = self.fit()?.clone();
        let truth = self.truth()?.clone();
        if !truth.nested_in(&fit) {
            return Err(Error::config(format!(
                "truth {truth:?} is not nested in the fitted model {fit:?}"
            )));
        }
        fit.build()?;
        let truth_model = truth.build()?;
        let params = match &self.truth_params {
            Some(p) => p.clone(),
            None => truth.default_truth()?,
        };
        if params.len() != truth_model.dim() {
            return Err(Error::config(format!(
                "truth takes {} parameters, truth_params has {}",
                truth_model.dim(),
                params.len()
            )));
        }
        truth_model
            .transform()
            .to_unconstrained(&params)
            .map_err(|e| Error::config(format!("truth_params: {e}")))?;
        out.fit = Some(fit);
        out.truth = Some(truth);
        out.truth_params = Some(params);
        Ok(())
    }

    /// TOML rendering used for the provenance header.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise configuration: {e}")))
    }

    /// The provenance header: every line of [`Self::to_toml`] prefixed
    /// with `# `.
    pub fn header(&self) -> Result<String> {
        let mut out = String::new();
        for line in self.to_toml()?.lines() {
            if line.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

fn check_data_section(data: &DataSection, allow_simulation: bool) -> Result<()> {
    let given = data.fixture.is_some() as usize + data.path.is_some() as usize + data.n.is_some() as usize;
    if given > 1 {
        return Err(Error::config("[data] takes only one of fixture, path and n"));
    }
    if given == 0 {
        return Err(Error::config(if allow_simulation {
            "[data] needs fixture, path or n"
        } else {
            "select needs data: --fixture, --data or [data] path"
        }));
    }
    if data.n.is_some() && !allow_simulation {
        return Err(Error::config("select does not simulate data; give a fixture or a path"));
    }
    if data.n == Some(0) {
        return Err(Error::config("[data] n must be positive"));
    }
    Ok(())
}

fn extract_header(text: &str) -> String {
    let mut body = String::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        body.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        body.push('\n');
    }
    body
}

#[cfg(test)]
mod tests {
    use super::*;

    const ESTIMATE: &str = r#"
seed = 7
[fit]
family = "binomial_mixture"
components = 2
[truth]
family = "binomial_mixture"
components = 1
[plan]
n_s = 300
m = 2
"#;

    #[test]
    fn resolves_defaults_for_estimate() {
        let cfg = ExperimentConfig::parse(ESTIMATE).unwrap().resolve(Command::EstimateRlct).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.truth_params.as_deref(), Some(&[0.5][..]));
        assert_eq!(cfg.plan.unwrap().c, 1.0);
        assert!(cfg.mcmc.is_some());
        assert!(cfg.select.is_none());
    }

    #[test]
    fn header_round_trips() {
        let cfg = ExperimentConfig::parse(ESTIMATE).unwrap().resolve(Command::EstimateRlct).unwrap();
        let text = format!("{}model_i,truth_j\n1,2\n", cfg.header().unwrap());
        let again = ExperimentConfig::parse(&text).unwrap().resolve(Command::EstimateRlct).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.header().unwrap(), again.header().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("sed = 3").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::parse("[plan]\nns = 3").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::parse("[fit]\nfamily = \"gmm2\"\nrank = 2").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn reversed_pair_is_a_config_error() {
        let text = ESTIMATE.replace("components = 1", "components = 3");
        let err = ExperimentConfig::parse(&text).unwrap().resolve(Command::EstimateRlct).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn command_mismatch_is_rejected() {
        let cfg = ExperimentConfig::parse(ESTIMATE).unwrap().resolve(Command::EstimateRlct).unwrap();
        let err = ExperimentConfig::parse(&cfg.header().unwrap()).unwrap().resolve(Command::Sample);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn workers_are_not_echoed() {
        let mut cfg = ExperimentConfig::parse(ESTIMATE).unwrap();
        cfg.workers = Some(3);
        let cfg = cfg.resolve(Command::EstimateRlct).unwrap();
        assert!(!cfg.header().unwrap().contains("workers"));
    }

    #[test]
    fn cormorant_selection_defaults() {
        let cfg = ExperimentConfig::parse("[data]\nfixture = \"cormorant\"").unwrap().resolve(Command::Select).unwrap();
        let sel = cfg.select.unwrap();
        assert_eq!(sel.candidates.len(), 4);
        assert_eq!(sel.lambda_source, Some(LambdaSource::Published));
    }

    #[test]
    fn data_sources_are_exclusive() {
        let err = ExperimentConfig::parse("[data]\nfixture = \"cormorant\"\nn = 4\n[fit]\nfamily = \"normal_location\"")
            .unwrap()
            .resolve(Command::Sample);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
