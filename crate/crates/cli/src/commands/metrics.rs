//! `pmi`, `mi` and `probe`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use orderinfo::infometrics::{control_accuracy, mi_bound, pmi_records, probe_accuracy, PmiRecord, PmiSeed, ProbeScores};
use orderinfo::providers::{ConditionalScorer, SentenceScorer};
use orderinfo::reorder::ReorderModel;
use orderinfo::scorer::{fallback_resolve, BoxError, Capability, InternalProviders, Providers, Source};
use orderinfo::textdata::{ReadOptions, ScramblePair, SentenceRecord, Split};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::models::{load_lm, load_reorder};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct PmiArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub scrambles: PathBuf,
    /// n-gram model; needed unless the scorer serves both operations.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Temperature fit; needed unless the scorer serves `logp_cond`.
    #[arg(long)]
    pub reorder: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MiArgs {
    #[arg(long)]
    pub pmi: PathBuf,
    /// Sentence file, for a breakdown by task.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub scrambles: PathBuf,
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub reorder: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only probe sentences of this split (default from the config, `probe`).
    #[arg(long)]
    pub split: Option<Split>,
}

/// Model files the internal providers are built from.
pub struct ModelPaths<'a> {
    pub lm: Option<&'a Path>,
    pub reorder: Option<&'a Path>,
}

fn build_internal(paths: &ModelPaths, wanted: &BTreeSet<Capability>) -> Result<InternalProviders> {
    let needs_p = wanted.contains(&Capability::LogpSentence);
    let needs_q = wanted.contains(&Capability::LogpCond);
    let mut out = InternalProviders::default();
    if !(needs_p || needs_q) {
        return Ok(out);
    }
    let lm_path = paths.lm.ok_or_else(|| CliError::usage("--lm is required when p(s) or q(s|t) is computed internally"))?;
    let lm = Arc::new(load_lm(lm_path)?);
    if needs_q {
        let fit = paths
            .reorder
            .ok_or_else(|| CliError::usage("--reorder is required when q(s|t) is computed internally"))?;
        out.conditional = Some(Arc::new(load_reorder(lm.clone(), fit)?) as Arc<dyn ConditionalScorer>);
    }
    if needs_p {
        out.sentence = Some(lm as Arc<dyn SentenceScorer>);
    }
    Ok(out)
}

/// The scorers for `p(s)` and `q(s|t)`: external where a scorer is
/// configured and serves the operation, internal otherwise.
pub fn resolve_scorers(cfg: &RunConfig, paths: &ModelPaths) -> Result<Providers> {
    Ok(fallback_resolve(cfg.scorer.as_ref(), |wanted| {
        build_internal(paths, wanted).map_err(|e| Box::new(e) as BoxError)
    })?)
}

pub fn compute_pmi(
    providers: &Providers,
    corpus: &[SentenceRecord],
    pairs: &[ScramblePair],
) -> Result<Vec<PmiRecord>> {
    let p = providers.sentence.as_ref().ok_or_else(|| CliError::usage("no provider for logp_sentence"))?;
    let q = providers.conditional.as_ref().ok_or_else(|| CliError::usage("no provider for logp_cond"))?;
    Ok(pmi_records(corpus, pairs, p.as_ref(), q.as_ref())?)
}

fn plan_json(providers: &Providers) -> Value {
    let src = |op| match providers.source(op) {
        Some(Source::External) => "external",
        _ => "internal",
    };
    json!({ "logp_sentence": src(Capability::LogpSentence), "logp_cond": src(Capability::LogpCond) })
}

pub fn pmi(cfg: &RunConfig, args: &PmiArgs) -> Result<Value> {
    cfg.validate()?;
    for p in [&args.sentences, &args.scrambles].into_iter().chain(&args.lm).chain(&args.reorder) {
        files::require_file(p)?;
    }
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let pairs = files::read_scrambles(&args.scrambles)?;
    let providers = resolve_scorers(cfg, &ModelPaths { lm: args.lm.as_deref(), reorder: args.reorder.as_deref() })?;
    let records = compute_pmi(&providers, &corpus, &pairs)?;
    files::write_jsonl(&args.out, &records)?;
    let pair_rows = records.iter().filter(|r| r.seed != PmiSeed::Avg).count();
    Ok(json!({ "pair_rows": pair_rows, "avg_rows": records.len() - pair_rows, "providers": plan_json(&providers) }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiRow {
    pub task: String,
    pub n_pairs: usize,
    pub bound_bits: f64,
    pub std_err: f64,
}

/// MI bound per task (sorted) and over everything (`all`, last). Without
/// sentences every row falls under `all`.
pub fn mi_table(records: &[PmiRecord], corpus: Option<&[SentenceRecord]>) -> Result<Vec<MiRow>> {
    let task_of: HashMap<&str, &str> =
        corpus.unwrap_or_default().iter().map(|r| (r.id.as_str(), r.task.as_str())).collect();
    let mut by_task: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in records.iter().filter(|r| r.seed != PmiSeed::Avg) {
        if corpus.is_some() {
            let task = task_of
                .get(r.sentence_id.as_str())
                .ok_or_else(|| CliError::data(format!("PMI record for unknown sentence `{}`", r.sentence_id)))?;
            by_task.entry(task).or_default().push(r.pmi_bits);
        }
        all.push(r.pmi_bits);
    }
    let row = |task: &str, v: &[f64]| -> Result<MiRow> {
        let e = mi_bound(v)?;
        Ok(MiRow { task: task.to_string(), n_pairs: e.n_pairs, bound_bits: e.bound_bits, std_err: e.std_err })
    };
    let mut out: Vec<MiRow> = by_task.iter().map(|(t, v)| row(t, v)).collect::<Result<_>>()?;
    out.push(row("all", &all)?);
    Ok(out)
}

pub fn mi(cfg: &RunConfig, args: &MiArgs) -> Result<Value> {
    cfg.validate()?;
    files::require_file(&args.pmi)?;
    if let Some(s) = &args.sentences {
        files::require_file(s)?;
    }
    let records = files::read_pmi(&args.pmi)?;
    let corpus = args.sentences.as_deref().map(|p| files::read_sentences(p, ReadOptions::default())).transpose()?;
    let table = mi_table(&records, corpus.as_deref())?;
    files::write_csv(&args.out, &table)?;
    Ok(serde_json::to_value(table.last())?)
}

/// Reconstructs every scramble of a sentence in `split` and scores it
/// against the original (probe accuracy) alongside the scramble itself
/// (control accuracy). Rows follow the scramble file's order.
pub fn probe_scores(
    model: &ReorderModel,
    beam: usize,
    corpus: &[SentenceRecord],
    pairs: &[ScramblePair],
    split: Split,
) -> Result<Vec<ProbeScores>> {
    let by_id: HashMap<&str, &SentenceRecord> = corpus.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut chosen = Vec::new();
    for p in pairs {
        let s = by_id
            .get(p.sentence_id.as_str())
            .ok_or_else(|| CliError::data(format!("scramble refers to unknown sentence `{}`", p.sentence_id)))?;
        if s.split == split {
            chosen.push((*s, p));
        }
    }
    if chosen.is_empty() {
        return Err(CliError::data(format!("no scrambles of sentences in split `{split}`")));
    }
    chosen
        .par_iter()
        .map(|(s, p)| {
            let r = model.decode(&p.scrambled, beam)?;
            Ok(ProbeScores {
                sentence_id: s.id.clone(),
                seed: p.seed,
                pa: probe_accuracy(&s.tokens, &r.tokens)?,
                ca: control_accuracy(&s.tokens, &p.scrambled)?,
            })
        })
        .collect()
}

pub fn probe_summary(scores: &[ProbeScores]) -> Value {
    let n = scores.len() as f64;
    let pa = scores.iter().map(|s| s.pa).sum::<f64>() / n;
    let ca = scores.iter().map(|s| s.ca).sum::<f64>() / n;
    json!({ "pairs": scores.len(), "mean_pa": pa, "mean_ca": ca })
}

pub fn probe(cfg: &RunConfig, args: &ProbeArgs) -> Result<Value> {
    cfg.validate()?;
    for p in [&args.sentences, &args.scrambles, &args.lm, &args.reorder] {
        files::require_file(p)?;
    }
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let pairs = files::read_scrambles(&args.scrambles)?;
    let model = load_reorder(Arc::new(load_lm(&args.lm)?), &args.reorder)?;
    let scores = probe_scores(&model, cfg.reorder.beam, &corpus, &pairs, args.split.unwrap_or(cfg.probe.split))?;
    files::write_csv(&args.out, &scores)?;
    Ok(probe_summary(&scores))
}
