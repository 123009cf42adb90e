//! `cfg-gen` and `cfg-eval`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use orderinfo::cfgbench::{
    generate, run_diagnostic, DiagnosticConfig, GenerateOptions, Grammar, TypeTag, TYPE_A_GRAMMAR, TYPE_B_GRAMMAR,
};
use serde_json::{json, Value};

use super::data::write_corpus;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrammarType {
    A,
    B,
}

impl GrammarType {
    fn tag(self) -> TypeTag {
        match self {
            GrammarType::A => TypeTag::A,
            GrammarType::B => TypeTag::B,
        }
    }
}

#[derive(Debug, Args)]
pub struct CfgGenArgs {
    #[arg(long = "type", value_enum)]
    pub kind: GrammarType,
    /// Grammar file; the shipped grammar of that type when absent.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    #[arg(short, long)]
    pub n: usize,
    /// Reject repeated sentences.
    #[arg(long)]
    pub dedupe: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CfgEvalArgs {
    #[arg(long)]
    pub grammar_a: Option<PathBuf>,
    #[arg(long)]
    pub grammar_b: Option<PathBuf>,
    /// Evaluation sentences per type.
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// Step language model training sentences per type.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Temperature fitting sentences per type.
    #[arg(long)]
    pub n_fit: Option<usize>,
    /// Accuracy report pair as JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_grammar(path: Option<&Path>, kind: GrammarType) -> Result<Grammar> {
    match path {
        Some(p) => {
            files::require_file(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| CliError::from(e).in_file(p))?;
            Grammar::parse(&text).map_err(|e| CliError::from(e).in_file(p))
        }
        None => Ok(Grammar::parse(match kind {
            GrammarType::A => TYPE_A_GRAMMAR,
            GrammarType::B => TYPE_B_GRAMMAR,
        })?),
    }
}

pub fn cfg_gen(cfg: &RunConfig, args: &CfgGenArgs) -> Result<Value> {
    let grammar = load_grammar(args.grammar.as_deref(), args.kind)?;
    let opts = GenerateOptions { dedupe: args.dedupe, ..Default::default() };
    let set = generate(&grammar, args.kind.tag(), args.n, cfg.seed, opts)?;
    write_corpus(&args.out, &set.sentences)?;
    Ok(json!({ "sentences": set.sentences.len() }))
}

pub fn diagnostic_config(cfg: &RunConfig) -> DiagnosticConfig {
    DiagnosticConfig {
        n_eval: cfg.cfg.n_eval,
        n_train: cfg.cfg.n_train,
        n_fit: cfg.cfg.n_fit,
        seeds: cfg.scramble.seeds(),
        order: cfg.lm.order,
        beam_width: cfg.reorder.beam,
        temperature_bounds: cfg.reorder.temperature_bounds,
        seed: cfg.seed,
    }
}

pub fn cfg_eval(cfg: &RunConfig, args: &CfgEvalArgs) -> Result<Value> {
    let mut cfg = cfg.clone();
    cfg.cfg.n_eval = args.n_eval.unwrap_or(cfg.cfg.n_eval);
    cfg.cfg.n_train = args.n_train.unwrap_or(cfg.cfg.n_train);
    cfg.cfg.n_fit = args.n_fit.unwrap_or(cfg.cfg.n_fit);
    cfg.validate()?;
    let a = load_grammar(args.grammar_a.as_deref().or(cfg.paths.grammar_a.as_deref()), GrammarType::A)?;
    let b = load_grammar(args.grammar_b.as_deref().or(cfg.paths.grammar_b.as_deref()), GrammarType::B)?;
    let d = run_diagnostic(&a, &b, &diagnostic_config(&cfg))?;
    files::write_json(&args.out, &d.result)?;
    Ok(json!({
        "temperature": d.result.temperature,
        "type_a": d.result.type_a.mean_exact_match,
        "type_b": d.result.type_b.mean_exact_match,
    }))
}
