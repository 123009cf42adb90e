//! Shared inputs for the benchmarks.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use orderinfo::textdata::{make_scramble_set, read_sentences, ReadOptions};
use orderinfo::{NgramModel, ReorderModel, ScramblePair, SentenceRecord, Split, TrainConfig};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

/// The docs corpus with its train, val and probe splits.
pub fn docs_corpus() -> Vec<SentenceRecord> {
    let file = File::open(fixture("text/docs_corpus.tsv")).expect("docs corpus fixture");
    read_sentences(BufReader::new(file), None, ReadOptions::default()).expect("docs corpus parses")
}

pub fn split(corpus: &[SentenceRecord], split: Split) -> Vec<SentenceRecord> {
    corpus.iter().filter(|r| r.split == split).cloned().collect()
}

pub fn train_lm(corpus: &[SentenceRecord]) -> Arc<NgramModel> {
    let train: Vec<Vec<String>> = split(corpus, Split::Train).into_iter().map(|r| r.tokens).collect();
    Arc::new(NgramModel::train(&train, TrainConfig::default()).expect("lm trains"))
}

/// A reorderer at a fixed temperature close to what fitting picks on this corpus.
pub fn reorderer(lm: Arc<NgramModel>) -> ReorderModel {
    ReorderModel::new(lm, 4.0).expect("valid temperature")
}

pub fn scrambles(sentences: &[SentenceRecord], k: u64) -> Vec<ScramblePair> {
    let seeds: Vec<u64> = (0..k).collect();
    make_scramble_set(sentences, &seeds).expect("scrambles")
}
