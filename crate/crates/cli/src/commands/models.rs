//! `train-lm` and `fit-reorder`, and loading what they write.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use orderinfo::ngram::{load_model, save_model, NgramModel, TrainConfig};
use orderinfo::reorder::{fit_temperature, ReorderModel, TemperatureFit};
use orderinfo::textdata::{ReadOptions, SentenceRecord, Split};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on this split (default from the config, `train`).
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub unk_threshold: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitReorderArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub sentences: PathBuf,
    /// Temperature fit as JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit on this split (default from the config, `val`).
    #[arg(long)]
    pub split: Option<Split>,
}

fn of_split(corpus: &[SentenceRecord], split: Split) -> Result<Vec<&SentenceRecord>> {
    let v: Vec<&SentenceRecord> = corpus.iter().filter(|r| r.split == split).collect();
    if v.is_empty() {
        return Err(CliError::data(format!("no sentences in split `{split}`")));
    }
    Ok(v)
}

pub fn train_lm_model(cfg: &RunConfig, corpus: &[SentenceRecord], split: Split) -> Result<NgramModel> {
    let train: Vec<&[String]> = of_split(corpus, split)?.into_iter().map(|r| r.tokens.as_slice()).collect();
    let tc = TrainConfig { order: cfg.lm.order, unk_threshold: cfg.lm.unk_threshold, fixed_discounts: None };
    Ok(NgramModel::train(&train, tc)?)
}

pub fn save_lm(path: &Path, model: &NgramModel) -> Result<()> {
    files::write_atomic(path, |w| Ok(save_model(model, w)?))
}

pub fn load_lm(path: &Path) -> Result<NgramModel> {
    files::require_file(path)?;
    let f = std::fs::File::open(path).map_err(|e| CliError::from(e).in_file(path))?;
    load_model(std::io::BufReader::new(f)).map_err(|e| CliError::from(e).in_file(path))
}

pub fn load_reorder(lm: Arc<NgramModel>, fit_path: &Path) -> Result<ReorderModel> {
    let fit: TemperatureFit = files::read_json(fit_path)?;
    ReorderModel::new(lm, fit.temperature).map_err(|e| CliError::from(e).in_file(fit_path))
}

pub fn train_lm(cfg: &RunConfig, args: &TrainLmArgs) -> Result<Value> {
    let mut cfg = cfg.clone();
    if let Some(u) = args.unk_threshold {
        cfg.lm.unk_threshold = u;
    }
    cfg.validate()?;
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let model = train_lm_model(&cfg, &corpus, args.split.unwrap_or(cfg.lm.split))?;
    save_lm(&args.out, &model)?;
    Ok(json!({ "order": model.order(), "vocab": model.predicted_vocab_size() }))
}

/// One `(original, scramble)` pair per sentence of the split and scramble seed.
pub fn fit_reorder_model(cfg: &RunConfig, lm: &NgramModel, corpus: &[SentenceRecord], split: Split) -> Result<TemperatureFit> {
    let sentences = of_split(corpus, split)?;
    let owned: Vec<SentenceRecord> = sentences.into_iter().cloned().collect();
    let pairs: Vec<(Vec<String>, Vec<String>)> = orderinfo::textdata::make_scramble_set(&owned, &cfg.scramble.seeds())?
        .into_iter()
        .zip(owned.iter().flat_map(|r| std::iter::repeat(&r.tokens).take(cfg.scramble.k)))
        .map(|(p, s)| (s.clone(), p.scrambled))
        .collect();
    Ok(fit_temperature(lm, &pairs, cfg.reorder.temperature_bounds)?)
}

pub fn fit_reorder(cfg: &RunConfig, args: &FitReorderArgs) -> Result<Value> {
    cfg.validate()?;
    let lm = load_lm(&args.lm)?;
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let fit = fit_reorder_model(cfg, &lm, &corpus, args.split.unwrap_or(cfg.reorder.fit_split))?;
    files::write_json(&args.out, &fit)?;
    Ok(serde_json::to_value(&fit)?)
}
