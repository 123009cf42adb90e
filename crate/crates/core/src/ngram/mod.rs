//! Interpolated modified Kneser–Ney n-gram language model.
//!
//! All scores are base-2 log probabilities. The predicted vocabulary is the
//! retained word types plus `<unk>` and `</s>`; `<s>` only ever appears as
//! context. Lower orders use continuation counts (number of distinct left
//! extensions), except for n-grams that start at `<s>`, which cannot be
//! extended and keep their raw counts. The recursion bottoms out in the
//! uniform distribution over the predicted vocabulary, so every outcome has
//! strictly positive probability.

mod io;

use std::collections::{BTreeMap, HashMap};

pub use io::{load_model, save_model};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub type TokenId = u32;
pub const UNK_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;

pub const MAX_ORDER: usize = 5;
pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_UNK_THRESHOLD: u64 = 2;

/// Discounts used at a level whose count-of-counts make the closed-form
/// estimate undefined (typical for tiny corpora with uniform counts).
const FALLBACK_DISCOUNTS: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order {0} outside 1..={MAX_ORDER}")]
    BadOrder(usize),
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A base-2 log probability, finite and at most zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub fn new(bits: f64) -> Option<Self> {
        (bits.is_finite() && bits <= 0.0).then_some(LogProb(bits))
    }

    pub fn bits(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp2()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub order: usize,
    /// Word types seen fewer than this many times map to `<unk>`.
    pub unk_threshold: u64,
    /// Use these `(D1, D2, D3+)` at every level instead of estimating them
    /// from count-of-counts.
    pub fixed_discounts: Option<[f64; 3]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, unk_threshold: DEFAULT_UNK_THRESHOLD, fixed_discounts: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    fn new(mut types: Vec<String>) -> Self {
        types.sort();
        types.dedup();
        let mut words = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        words.extend(types.into_iter().filter(|w| w != UNK && w != BOS && w != EOS));
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        Vocab { words, index }
    }

    fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ContextStats {
    total: u64,
    n1: u64,
    n2: u64,
    n3p: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Level {
    /// Adjusted count for every n-gram of this length.
    counts: HashMap<Vec<TokenId>, u64>,
    contexts: HashMap<Vec<TokenId>, ContextStats>,
    discounts: [f64; 3],
}

impl Level {
    fn from_counts(counts: HashMap<Vec<TokenId>, u64>, discounts: [f64; 3]) -> Self {
        let mut contexts: HashMap<Vec<TokenId>, ContextStats> = HashMap::new();
        for (gram, &c) in &counts {
            let s = contexts.entry(gram[..gram.len() - 1].to_vec()).or_default();
            s.total += c;
            match c {
                1 => s.n1 += 1,
                2 => s.n2 += 1,
                _ => s.n3p += 1,
            }
        }
        Level { counts, contexts, discounts }
    }

    fn discount(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.discounts[0],
            2 => self.discounts[1],
            _ => self.discounts[2],
        }
    }
}

/// Closed-form modified Kneser–Ney discounts from count-of-counts, each
/// clamped to `(0, k]` for its count bucket `k`. The estimate needs
/// `n1..n4` all nonzero; otherwise the whole level uses the fallback.
fn estimate_discounts(counts: &HashMap<Vec<TokenId>, u64>) -> [f64; 3] {
    let mut n = [0f64; 5];
    for &c in counts.values() {
        if (1..=4).contains(&c) {
            n[c as usize] += 1.0;
        }
    }
    if n[1..].iter().any(|&x| x == 0.0) {
        return FALLBACK_DISCOUNTS;
    }
    let y = n[1] / (n[1] + 2.0 * n[2]);
    let raw = [
        1.0 - 2.0 * y * n[2] / n[1],
        2.0 - 3.0 * y * n[3] / n[2],
        3.0 - 4.0 * y * n[4] / n[3],
    ];
    let mut d = FALLBACK_DISCOUNTS;
    for k in 0..3 {
        if raw[k] > 0.0 {
            d[k] = raw[k].min((k + 1) as f64);
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    unk_threshold: u64,
    vocab: Vocab,
    /// `levels[k - 1]` holds n-grams of length `k`.
    levels: Vec<Level>,
}

impl NgramModel {
    pub fn train<S: AsRef<[String]>>(corpus: &[S], config: TrainConfig) -> Result<Self, LmError> {
        if !(1..=MAX_ORDER).contains(&config.order) {
            return Err(LmError::BadOrder(config.order));
        }
        if corpus.iter().all(|s| s.as_ref().is_empty()) {
            return Err(LmError::EmptyCorpus);
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for s in corpus {
            for w in s.as_ref() {
                *freq.entry(w.as_str()).or_default() += 1;
            }
        }
        let kept = freq
            .iter()
            .filter(|(_, &c)| c >= config.unk_threshold)
            .map(|(w, _)| w.to_string())
            .collect();
        let vocab = Vocab::new(kept);

        let n = config.order;
        let mut raw: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); n];
        let mut seq = Vec::new();
        for s in corpus {
            let s = s.as_ref();
            if s.is_empty() {
                continue;
            }
            seq.clear();
            seq.push(BOS_ID);
            seq.extend(s.iter().map(|w| vocab.id(w)));
            seq.push(EOS_ID);
            for end in 1..seq.len() {
                for k in 1..=n.min(end + 1) {
                    *raw[k - 1].entry(seq[end + 1 - k..=end].to_vec()).or_default() += 1;
                }
            }
        }

        // Adjusted counts: raw at the top order and for <s>-initial grams,
        // continuation counts elsewhere.
        let mut adjusted: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); n];
        adjusted[n - 1] = raw[n - 1].clone();
        for k in 1..n {
            let mut cont: HashMap<Vec<TokenId>, u64> = HashMap::new();
            for gram in raw[k].keys() {
                *cont.entry(gram[1..].to_vec()).or_default() += 1;
            }
            let level = &mut adjusted[k - 1];
            for (gram, &c) in &raw[k - 1] {
                let a = if gram[0] == BOS_ID { c } else { cont.get(gram).copied().unwrap_or(0) };
                level.insert(gram.clone(), a);
            }
        }
        let levels = adjusted
            .into_iter()
            .map(|counts| {
                let d = match config.fixed_discounts {
                    Some(d) => d,
                    None => estimate_discounts(&counts),
                };
                Level::from_counts(counts, d)
            })
            .collect();
        Ok(NgramModel { order: n, unk_threshold: config.unk_threshold, vocab, levels })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn unk_threshold(&self) -> u64 {
        self.unk_threshold
    }

    /// Size of the predicted vocabulary: retained types, `<unk>` and `</s>`.
    pub fn predicted_vocab_size(&self) -> usize {
        self.vocab.words.len() - 1
    }

    /// Every outcome `logp_next` can be asked about, in id order, `<s>` excluded.
    pub fn predicted_vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .words
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as TokenId != BOS_ID)
            .map(|(_, w)| w.as_str())
    }

    pub fn discounts(&self, n: usize) -> [f64; 3] {
        self.levels[n - 1].discounts
    }

    pub fn token_id(&self, word: &str) -> TokenId {
        self.vocab.id(word)
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        words.iter().map(|w| self.vocab.id(w.as_ref())).collect()
    }

    /// Probability of `word` after `history`; only the last `order - 1`
    /// ids of the history are used.
    pub fn prob_ids(&self, history: &[TokenId], word: TokenId) -> f64 {
        let mut p = 1.0 / self.predicted_vocab_size() as f64;
        let max_ctx = (self.order - 1).min(history.len());
        let mut key = Vec::with_capacity(max_ctx + 1);
        for ctx_len in 0..=max_ctx {
            let ctx = &history[history.len() - ctx_len..];
            let level = &self.levels[ctx_len];
            let Some(stats) = level.contexts.get(ctx) else {
                // Unseen context at this length: longer contexts are unseen too.
                break;
            };
            key.clear();
            key.extend_from_slice(ctx);
            key.push(word);
            let c = level.counts.get(key.as_slice()).copied().unwrap_or(0);
            let gamma_num = level.discounts[0] * stats.n1 as f64
                + level.discounts[1] * stats.n2 as f64
                + level.discounts[2] * stats.n3p as f64;
            p = ((c as f64 - level.discount(c)).max(0.0) + gamma_num * p) / stats.total as f64;
        }
        p
    }

    pub fn logp_next_ids(&self, history: &[TokenId], word: TokenId) -> f64 {
        self.prob_ids(history, word).log2()
    }

    /// `log2 P(word | context)` where `context` is the sentence prefix
    /// (without `<s>`); out-of-vocabulary words score as `<unk>`.
    pub fn logp_next<S: AsRef<str>>(&self, context: &[S], word: &str) -> LogProb {
        let mut hist = Vec::with_capacity(context.len() + 1);
        hist.push(BOS_ID);
        hist.extend(context.iter().map(|w| self.vocab.id(w.as_ref())));
        LogProb(self.logp_next_ids(&hist, self.vocab.id(word)))
    }

    /// Chain-rule sentence score including the `</s>` term.
    pub fn logp_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<LogProb, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySentence);
        }
        let mut hist = Vec::with_capacity(tokens.len() + 2);
        hist.push(BOS_ID);
        let mut total = 0.0;
        for w in tokens {
            let id = self.vocab.id(w.as_ref());
            total += self.logp_next_ids(&hist, id);
            hist.push(id);
        }
        total += self.logp_next_ids(&hist, EOS_ID);
        Ok(LogProb(total))
    }

    /// Count tables sorted for serialization: per level, (gram words, count).
    pub(crate) fn sorted_levels(&self) -> Vec<BTreeMap<Vec<TokenId>, u64>> {
        self.levels
            .iter()
            .map(|l| l.counts.iter().map(|(g, &c)| (g.clone(), c)).collect())
            .collect()
    }

    pub(crate) fn vocab_words(&self) -> &[String] {
        &self.vocab.words
    }

    pub(crate) fn from_parts(
        order: usize,
        unk_threshold: u64,
        vocab_words: Vec<String>,
        levels: Vec<(HashMap<Vec<TokenId>, u64>, [f64; 3])>,
    ) -> Self {
        let index = vocab_words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        NgramModel {
            order,
            unk_threshold,
            vocab: Vocab { words: vocab_words, index },
            levels: levels.into_iter().map(|(c, d)| Level::from_counts(c, d)).collect(),
        }
    }
}
