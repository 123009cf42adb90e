//! `ingest` and `scramble`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use orderinfo::rng::mix64;
use orderinfo::textdata::{
    corpus_stats_by_task, make_scramble_set, pair_seed, write_sentences, ReadOptions, ScramblePair, SentenceRecord, Split,
    TokenizeOptions,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Sentence files (TSV `id task split text` or JSON lines); repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Canonical JSON-lines sentence file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-task sentence counts and mean lengths as CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
    /// Drop sentences with more tokens than this.
    #[arg(long)]
    pub max_length: Option<usize>,
    /// Replace task labels with this many hashed buckets `task0..`.
    #[arg(long)]
    pub pseudo_tasks: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScrambleArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only scramble sentences of this split.
    #[arg(long)]
    pub split: Option<Split>,
}

/// Loads and merges sentence files. Ids must be unique across all of them.
pub fn load_corpus(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Vec<SentenceRecord>> {
    for p in inputs {
        files::require_file(p)?;
    }
    let opts = ReadOptions {
        tokenize: TokenizeOptions { lowercase: cfg.data.lowercase },
        max_length: cfg.data.max_length,
        default_split: Some(Split::Train),
    };
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for p in inputs {
        for r in files::read_sentences(p, opts)? {
            if !ids.insert(r.id.clone()) {
                return Err(CliError::data(format!("sentence id `{}` appears in more than one input", r.id)).in_file(p));
            }
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(CliError::data("the inputs contain no sentences"));
    }
    if let Some(n) = cfg.data.pseudo_tasks {
        let salt = mix64(cfg.seed);
        for r in &mut out {
            r.task = format!("task{}", pair_seed(&r.id, salt) % n as u64);
        }
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    files::write_atomic(path, |w| Ok(write_sentences(w, records)?))
}

pub fn ingest(cfg: &RunConfig, args: &IngestArgs) -> Result<Value> {
    let mut cfg = cfg.clone();
    cfg.data.lowercase |= args.lowercase;
    if args.max_length.is_some() {
        cfg.data.max_length = args.max_length;
    }
    if args.pseudo_tasks.is_some() {
        cfg.data.pseudo_tasks = args.pseudo_tasks;
    }
    cfg.validate()?;
    let records = load_corpus(&cfg, &args.inputs)?;
    let stats = corpus_stats_by_task(&records);
    write_corpus(&args.out, &records)?;
    if let Some(p) = &args.stats {
        files::write_csv(p, &stats)?;
    }
    Ok(json!({ "sentences": records.len(), "tasks": stats }))
}

pub fn scramble_corpus(cfg: &RunConfig, corpus: &[SentenceRecord], split: Option<Split>) -> Result<Vec<ScramblePair>> {
    let chosen: Vec<SentenceRecord> = corpus.iter().filter(|r| split.map_or(true, |s| r.split == s)).cloned().collect();
    if chosen.is_empty() {
        return Err(CliError::data(match split {
            Some(s) => format!("no sentences in split `{s}`"),
            None => "no sentences to scramble".into(),
        }));
    }
    Ok(make_scramble_set(&chosen, &cfg.scramble.seeds())?)
}

pub fn scramble(cfg: &RunConfig, args: &ScrambleArgs) -> Result<Value> {
    cfg.validate()?;
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let pairs = scramble_corpus(cfg, &corpus, args.split)?;
    files::write_jsonl(&args.out, &pairs)?;
    Ok(json!({ "pairs": pairs.len(), "seeds": cfg.scramble.seeds() }))
}
