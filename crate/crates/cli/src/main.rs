//! `orderinfo`: the word-order informativeness pipeline, one subcommand per
//! stage.
//!
//! Every command prints a one-line JSON summary on success. Failures print
//! one JSON error record on stderr and exit with 1 (usage), 2 (data),
//! 3 (convergence) or 4 (scorer protocol).

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use commands::{cfg, data, metrics, models, pipeline, regress, report, serve};
use config::{Overrides, RunConfig, CONFIG_ENV};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "orderinfo", version, about = "Word-order informativeness: scrambling, PMI, probes and consistency regression")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scrambles per sentence.
    #[arg(long, global = true)]
    k_scrambles: Option<usize>,
    /// Beam width for reordering.
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// n-gram order.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// MCMC chains.
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read, tokenize and merge corpus files into the canonical sentence file.
    Ingest(data::IngestArgs),
    /// K seeded scrambles per sentence.
    Scramble(data::ScrambleArgs),
    /// Train the Kneser-Ney n-gram model.
    TrainLm(models::TrainLmArgs),
    /// Fit the reordering model's temperature.
    FitReorder(models::FitReorderArgs),
    /// Per-pair and per-sentence PMI in bits.
    Pmi(metrics::PmiArgs),
    /// Mutual information lower bound from PMI records.
    Mi(metrics::MiArgs),
    /// Probe and control accuracy of reconstructed scrambles.
    Probe(metrics::ProbeArgs),
    /// Sentences from a shipped or given grammar.
    CfgGen(cfg::CfgGenArgs),
    /// Reordering accuracy on type A and type B grammar sentences.
    CfgEval(cfg::CfgEvalArgs),
    /// Predictions of the synthetic classifier.
    SimulatePredictions(regress::SimulatePredictionsArgs),
    /// Join predictions and PMI into the consistency dataset.
    BuildConsistency(regress::BuildConsistencyArgs),
    /// Consistency rows drawn from the mixed model with known coefficients.
    SimulateConsistency(regress::SimulateConsistencyArgs),
    /// Fit the mixed logistic regression.
    Regress(regress::RegressArgs),
    /// Plot-ready tables and an overview.
    Report(report::ReportArgs),
    /// Every stage in order.
    Pipeline(pipeline::PipelineArgs),
    /// Answer scorer protocol requests.
    Serve(serve::ServeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Scramble(_) => "scramble",
            Command::TrainLm(_) => "train-lm",
            Command::FitReorder(_) => "fit-reorder",
            Command::Pmi(_) => "pmi",
            Command::Mi(_) => "mi",
            Command::Probe(_) => "probe",
            Command::CfgGen(_) => "cfg-gen",
            Command::CfgEval(_) => "cfg-eval",
            Command::SimulatePredictions(_) => "simulate-predictions",
            Command::BuildConsistency(_) => "build-consistency",
            Command::SimulateConsistency(_) => "simulate-consistency",
            Command::Regress(_) => "regress",
            Command::Report(_) => "report",
            Command::Pipeline(_) => "pipeline",
            Command::Serve(_) => "serve",
        }
    }
}

fn run(cli: &Cli) -> Result<Option<Value>> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        k_scrambles: cli.k_scrambles,
        beam: cli.beam,
        order: cli.order,
        chains: cli.chains,
    });
    let cfg = &cfg;
    let summary = match &cli.command {
        Command::Ingest(a) => data::ingest(cfg, a)?,
        Command::Scramble(a) => data::scramble(cfg, a)?,
        Command::TrainLm(a) => models::train_lm(cfg, a)?,
        Command::FitReorder(a) => models::fit_reorder(cfg, a)?,
        Command::Pmi(a) => metrics::pmi(cfg, a)?,
        Command::Mi(a) => metrics::mi(cfg, a)?,
        Command::Probe(a) => metrics::probe(cfg, a)?,
        Command::CfgGen(a) => cfg::cfg_gen(cfg, a)?,
        Command::CfgEval(a) => cfg::cfg_eval(cfg, a)?,
        Command::SimulatePredictions(a) => regress::simulate_predictions(cfg, a)?,
        Command::BuildConsistency(a) => regress::build_consistency(cfg, a)?,
        Command::SimulateConsistency(a) => regress::simulate_consistency(cfg, a)?,
        Command::Regress(a) => regress::regress(cfg, a)?,
        Command::Report(a) => report::report(cfg, a)?,
        Command::Pipeline(a) => pipeline::pipeline(cfg, a)?,
        Command::Serve(a) => {
            serve::serve(a)?;
            return Ok(None);
        }
    };
    Ok(Some(summary))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.kind().to_string()).with_details(Value::String(e.render().to_string()));
            eprintln!("{}", err.record(""));
            return ExitCode::from(err.kind.code());
        }
    };
    match run(&cli) {
        Ok(Some(summary)) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record(cli.command.name()));
            ExitCode::from(e.kind.code())
        }
    }
}
