//! Corpus ingestion, tokenization, seeded scrambling and the sentence /
//! scramble file formats.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{fisher_yates, fnv1a64, mix64, SplitMix64};

/// Seeds used when the caller asks for the default scramble set.
pub const DEFAULT_SEEDS: [u64; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("input is empty after trimming whitespace")]
    EmptyInput,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate sentence id `{0}`")]
    DuplicateId(String),
    #[error("duplicate seed {0} in scramble seed list")]
    DuplicateSeed(u64),
    #[error("scramble seed list is empty")]
    NoSeeds,
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown split `{0}` (expected train, val or probe)")]
    UnknownSplit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Probe,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Probe => "probe",
        })
    }
}

impl FromStr for Split {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Val),
            "probe" | "test" => Ok(Split::Probe),
            other => Err(TextError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub id: String,
    pub task: String,
    pub tokens: Vec<String>,
    pub split: Split,
}

impl SentenceRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whitespace-joined tokens, the canonical `text` field on disk.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScramblePair {
    pub sentence_id: String,
    pub seed: u64,
    pub scrambled: Vec<String>,
}

impl ScramblePair {
    /// Recomputes the scramble for `tokens` from this pair's id and seed.
    pub fn regenerate(&self, tokens: &[String]) -> Vec<String> {
        scramble(tokens, pair_seed(&self.sentence_id, self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub task: String,
    pub n_sentences: usize,
    pub avg_length: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenizeOptions {
    pub lowercase: bool,
}

/// Splits on whitespace and detaches punctuation into separate tokens.
///
/// Apostrophes and hyphens between two alphanumeric characters stay inside
/// the word (`don't`, `well-known`), every other non-alphanumeric character
/// becomes a token of its own.
pub fn tokenize(text: &str, opts: TokenizeOptions) -> Result<Vec<String>, TextError> {
    if text.trim().is_empty() {
        return Err(TextError::EmptyInput);
    }
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                word.push(c);
                continue;
            }
            let joiner = matches!(c, '\'' | '’' | '-')
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if joiner {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    if opts.lowercase {
        for t in &mut out {
            *t = t.to_lowercase();
        }
    }
    Ok(out)
}

/// Uniform random permutation of `tokens`: Fisher–Yates driven by
/// splitmix64 seeded with `seed`. The identity permutation is a possible
/// outcome.
pub fn scramble<T: Clone>(tokens: &[T], seed: u64) -> Vec<T> {
    let mut out = tokens.to_vec();
    let mut rng = SplitMix64::new(seed);
    fisher_yates(&mut out, &mut rng);
    out
}

/// Generator seed for one sentence under a scramble-set seed.
///
/// Mixing in the sentence id keeps same-length sentences from sharing one
/// permutation pattern per seed.
pub fn pair_seed(sentence_id: &str, seed: u64) -> u64 {
    mix64(seed ^ fnv1a64(sentence_id.as_bytes()))
}

/// One scramble per (sentence, seed), sentences in corpus order and seeds
/// in the order given.
pub fn make_scramble_set(
    corpus: &[SentenceRecord],
    seeds: &[u64],
) -> Result<Vec<ScramblePair>, TextError> {
    if seeds.is_empty() {
        return Err(TextError::NoSeeds);
    }
    let mut seen = HashSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(TextError::DuplicateSeed(s));
        }
    }
    let mut pairs = Vec::with_capacity(corpus.len() * seeds.len());
    for rec in corpus {
        for &seed in seeds {
            pairs.push(ScramblePair {
                sentence_id: rec.id.clone(),
                seed,
                scrambled: scramble(&rec.tokens, pair_seed(&rec.id, seed)),
            });
        }
    }
    Ok(pairs)
}

/// Sentence count and mean length for one task.
pub fn corpus_stats(dataset: &[SentenceRecord], task: &str) -> Result<CorpusStats, TextError> {
    let lengths: Vec<usize> = dataset
        .iter()
        .filter(|r| r.task == task)
        .map(SentenceRecord::len)
        .collect();
    if lengths.is_empty() {
        return Err(TextError::UnknownTask(task.to_string()));
    }
    Ok(CorpusStats {
        task: task.to_string(),
        n_sentences: lengths.len(),
        avg_length: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
    })
}

/// Stats for every task present, sorted by task name.
pub fn corpus_stats_by_task(dataset: &[SentenceRecord]) -> Vec<CorpusStats> {
    let mut by_task: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in dataset {
        let e = by_task.entry(r.task.as_str()).or_default();
        e.0 += 1;
        e.1 += r.len();
    }
    by_task
        .into_iter()
        .map(|(task, (n, total))| CorpusStats {
            task: task.to_string(),
            n_sentences: n,
            avg_length: total as f64 / n as f64,
        })
        .collect()
}

/// Deterministically reassigns `val_fraction` of the records to the
/// validation split (the rest to train), hashing ids under `seed`.
pub fn assign_splits(records: &mut [SentenceRecord], val_fraction: f64, seed: u64) {
    let threshold = (val_fraction.clamp(0.0, 1.0) * (1u64 << 53) as f64) as u64;
    for r in records {
        let h = pair_seed(&r.id, seed) >> 11;
        r.split = if h < threshold { Split::Val } else { Split::Train };
    }
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Debug, Serialize, Deserialize)]
struct SentenceLine {
    id: String,
    task: String,
    split: Split,
    text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceFormat {
    Jsonl,
    Tsv,
}

impl SentenceFormat {
    /// Guesses from a file name; `None` when the extension is not telling.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(SentenceFormat::Jsonl),
            "tsv" | "tab" => Some(SentenceFormat::Tsv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub tokenize: TokenizeOptions,
    /// Drop sentences longer than this many tokens.
    pub max_length: Option<usize>,
    /// Split assigned to TSV rows whose split column is empty.
    pub default_split: Option<Split>,
}

/// Reads a sentence file, sniffing the format from the first non-blank line
/// when `format` is `None`. Ids must be unique.
pub fn read_sentences<R: BufRead>(
    reader: R,
    format: Option<SentenceFormat>,
    opts: ReadOptions,
) -> Result<Vec<SentenceRecord>, TextError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut format = format;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = *format.get_or_insert(if line.trim_start().starts_with('{') {
            SentenceFormat::Jsonl
        } else {
            SentenceFormat::Tsv
        });
        let (id, task, split, text) = match fmt {
            SentenceFormat::Jsonl => {
                let l: SentenceLine = serde_json::from_str(&line).map_err(|e| TextError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
                (l.id, l.task, l.split, l.text)
            }
            SentenceFormat::Tsv => parse_tsv_line(&line, lineno, opts.default_split)?,
        };
        let tokens = tokenize(&text, opts.tokenize).map_err(|_| TextError::Parse {
            line: lineno,
            message: format!("sentence `{id}` has no tokens"),
        })?;
        if opts.max_length.is_some_and(|m| tokens.len() > m) {
            continue;
        }
        if !ids.insert(id.clone()) {
            return Err(TextError::DuplicateId(id));
        }
        out.push(SentenceRecord { id, task, tokens, split });
    }
    Ok(out)
}

fn parse_tsv_line(
    line: &str,
    lineno: usize,
    default_split: Option<Split>,
) -> Result<(String, String, Split, String), TextError> {
    let fields: Vec<&str> = line.splitn(4, '\t').collect();
    let bad = |message: String| TextError::Parse { line: lineno, message };
    match fields.as_slice() {
        [id, task, split, text] => {
            let split = match (split.trim(), default_split) {
                ("", Some(d)) => d,
                (s, _) => s.parse().map_err(|e: TextError| bad(e.to_string()))?,
            };
            let task = if task.trim().is_empty() { "generic" } else { task.trim() };
            Ok((id.trim().to_string(), task.to_string(), split, text.to_string()))
        }
        _ => Err(bad(format!(
            "expected 4 tab-separated fields (id, task, split, text), found {}",
            fields.len()
        ))),
    }
}

/// Writes canonical line-delimited JSON.
pub fn write_sentences<W: Write>(mut w: W, records: &[SentenceRecord]) -> Result<(), TextError> {
    for r in records {
        let line = SentenceLine {
            id: r.id.clone(),
            task: r.task.clone(),
            split: r.split,
            text: r.text(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scrambles<R: BufRead>(reader: R) -> Result<Vec<ScramblePair>, TextError> {
    read_jsonl(reader)
}

pub fn write_scrambles<W: Write>(w: W, pairs: &[ScramblePair]) -> Result<(), TextError> {
    write_jsonl(w, pairs)
}

/// Generic line-delimited JSON reader with line-numbered errors.
pub fn read_jsonl<T, R>(reader: R) -> Result<Vec<T>, TextError>
where
    T: serde::de::DeserializeOwned,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TextError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), TextError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
