use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlct_core::workflows::{self, Command, DataSection, ExperimentConfig, Fixture, LambdaSource, Target};
use rlct_core::Result;

/// Learning-coefficient estimation and singular-BIC model selection.
#[derive(Parser, Debug)]
#[command(name = "rlct", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration, or a CSV written by an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RLCT_WORKERS")]
    workers: Option<usize>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Variance-based learning-coefficient estimate for one (fit, truth) pair.
    EstimateRlct,
    /// Score candidate models on a dataset.
    Select {
        /// Bundled dataset.
        #[arg(long, value_parser = ["cormorant"], conflicts_with = "data")]
        fixture: Option<String>,
        /// Observations, one per line.
        #[arg(long)]
        data: Option<PathBuf>,
        /// CSV of learning coefficients with columns i, j, lambda.
        #[arg(long)]
        rlct_table: Option<PathBuf>,
        /// Fail when a larger model has a smaller coefficient.
        #[arg(long)]
        strict_monotonicity: bool,
    },
    /// Re-run a simulation table or selection study.
    Replicate {
        /// table1, table2, table3, fig2, fig3 or fig4.
        target: Option<String>,
        /// Fraction of the full study size, in (0, 1].
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Dump one tempered chain.
    Sample,
    /// Check MCMC moments against grid quadrature.
    Oracle,
}

fn build_config(cli: &Cli) -> Result<(Command, ExperimentConfig)> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(w) = cli.common.workers {
        cfg.workers = Some(w);
    }
    let command = match &cli.command {
        Cmd::EstimateRlct => Command::EstimateRlct,
        Cmd::Sample => Command::Sample,
        Cmd::Oracle => Command::Oracle,
        Cmd::Select { fixture, data, rlct_table, strict_monotonicity } => {
            if fixture.is_some() {
                cfg.data = Some(DataSection { fixture: Some(Fixture::Cormorant), ..Default::default() });
            }
            if let Some(path) = data {
                cfg.data = Some(DataSection { path: Some(path.clone()), ..Default::default() });
            }
            let mut sel = cfg.select();
            if let Some(path) = rlct_table {
                sel.rlct_table = Some(path.clone());
                sel.lambda_source = Some(LambdaSource::Table);
            }
            sel.strict_monotonicity |= strict_monotonicity;
            cfg.select = Some(sel);
            Command::Select
        }
        Cmd::Replicate { target, scale } => {
            let mut rep = cfg.replicate();
            if let Some(t) = target {
                rep.target = Some(Target::parse(t)?);
            }
            if scale.is_some() {
                rep.scale = *scale;
            }
            cfg.replicate = Some(rep);
            Command::Replicate
        }
    };
    Ok((command, cfg))
}

fn run(cli: &Cli) -> Result<()> {
    let (command, cfg) = build_config(cli)?;
    let report = workflows::run(command, cfg)?;
    let body = report.render()?;
    workflows::emit(cli.common.out.as_deref(), &body)?;
    if cli.common.out.is_some() {
        eprint!("{}", report.summary);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rlct: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
