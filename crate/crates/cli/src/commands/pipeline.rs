//! `pipeline`: every stage in order, with a fixed file layout under the
//! output directory.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use orderinfo::consistency::build_dataset;
use orderinfo::providers::{ConditionalScorer, SentenceScorer};
use orderinfo::reorder::ReorderModel;
use orderinfo::scorer::{fallback_resolve, BoxError, Capability, InternalProviders};
use orderinfo::textdata::corpus_stats_by_task;
use serde_json::{json, Value};

use super::data::{load_corpus, scramble_corpus, write_corpus};
use super::metrics::{compute_pmi, mi_table, probe_scores, probe_summary};
use super::models::{fit_reorder_model, save_lm, train_lm_model};
use super::regress::{run_regression, simulate_predictions_for};
use super::report::{write_report, ReportInputs};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Corpus files; replaces `paths.corpus` from the config.
    #[arg(long = "corpus")]
    pub corpus: Vec<PathBuf>,
    /// Replaces `paths.out_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Skip the comparison against the model without length.
    #[arg(long)]
    pub no_compare: bool,
}

pub fn pipeline(cfg: &RunConfig, args: &PipelineArgs) -> Result<Value> {
    cfg.validate()?;
    let inputs = if args.corpus.is_empty() { cfg.paths.corpus.clone() } else { args.corpus.clone() };
    if inputs.is_empty() {
        return Err(CliError::usage("no corpus given (--corpus or paths.corpus)"));
    }
    for p in &inputs {
        files::require_file(p)?;
    }
    let out = args
        .out_dir
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory given (--out-dir or paths.out_dir)"))?;

    let corpus = load_corpus(cfg, &inputs)?;
    write_corpus(&out.join("sentences.jsonl"), &corpus)?;
    files::write_csv(&out.join("corpus_stats.csv"), &corpus_stats_by_task(&corpus))?;

    let lm = Arc::new(train_lm_model(cfg, &corpus, cfg.lm.split)?);
    save_lm(&out.join("lm.txt"), &lm)?;
    let fit = fit_reorder_model(cfg, &lm, &corpus, cfg.reorder.fit_split)?;
    files::write_json(&out.join("reorder.json"), &fit)?;
    let model = Arc::new(ReorderModel::new(lm.clone(), fit.temperature)?);

    let pairs = scramble_corpus(cfg, &corpus, Some(cfg.probe.split))?;
    files::write_jsonl(&out.join("scrambles.jsonl"), &pairs)?;

    let providers = fallback_resolve(cfg.scorer.as_ref(), |wanted| {
        let mut p = InternalProviders::default();
        if wanted.contains(&Capability::LogpSentence) {
            p.sentence = Some(lm.clone() as Arc<dyn SentenceScorer>);
        }
        if wanted.contains(&Capability::LogpCond) {
            p.conditional = Some(model.clone() as Arc<dyn ConditionalScorer>);
        }
        Ok::<_, BoxError>(p)
    })?;
    let pmi = compute_pmi(&providers, &corpus, &pairs)?;
    files::write_jsonl(&out.join("pmi.jsonl"), &pmi)?;
    let mi = mi_table(&pmi, Some(&corpus))?;
    files::write_csv(&out.join("mi.csv"), &mi)?;

    let probe = probe_scores(&model, cfg.reorder.beam, &corpus, &pairs, cfg.probe.split)?;
    files::write_csv(&out.join("probe.csv"), &probe)?;

    let preds = simulate_predictions_for(cfg, &corpus, &pmi, Some(cfg.probe.split))?;
    files::write_jsonl(&out.join("predictions.jsonl"), &preds)?;
    let rows = build_dataset(&preds, &pmi, cfg.consistency.granularity)?;
    files::write_csv(&out.join("consistency.csv"), &rows)?;

    let reg_dir = out.join("regression");
    let regression = run_regression(cfg, &rows, &reg_dir, cfg.regression.compare && !args.no_compare)?;

    let inputs = ReportInputs { corpus: &corpus, pmi: &pmi, probe: Some(&probe), regression_dir: Some(&reg_dir) };
    write_report(cfg, &inputs, &out.join("report"))?;

    Ok(json!({
        "sentences": corpus.len(),
        "pairs": pairs.len(),
        "temperature": fit.temperature,
        "mi": mi.last(),
        "probe": probe_summary(&probe),
        "consistency_rows": rows.len(),
        "regression": regression,
    }))
}
