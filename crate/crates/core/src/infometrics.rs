//! PMI, the mutual-information lower bound, edit-distance probe metrics and
//! the length/PMI correlation.
//!
//! For a sentence `s` and a uniform scrambling `t`,
//! `pmi(s; t) = log2 q(s | t) - log2 p(s)`. Its mean over pairs drawn from
//! the corpus is a lower bound on `I(S; T)` whenever `p` is the true
//! marginal; the gap is the expected KL divergence from `p(s | t)` to `q`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ngram::LogProb;
use crate::providers::{ConditionalScorer, ProviderError, SentenceScorer};
use crate::reorder::BagOfWords;
use crate::rng::SplitMix64;
use crate::textdata::{ScramblePair, SentenceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum InfoError {
    #[error("no values")]
    Empty,
    #[error("scramble refers to unknown sentence `{0}`")]
    UnknownSentence(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("edit distance between two empty sequences is not normalizable")]
    BothEmpty,
    #[error("need at least 3 records, got {0}")]
    TooFew(usize),
    #[error("a correlated variable has zero variance")]
    DegenerateVariance,
    #[error("invalid language: {0}")]
    BadLanguage(String),
}

/// `"seed"` field of a PMI record: a scramble seed or the per-sentence average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PmiSeed {
    Seed(u64),
    Avg,
}

impl Serialize for PmiSeed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PmiSeed::Seed(v) => s.serialize_u64(*v),
            PmiSeed::Avg => s.serialize_str("avg"),
        }
    }
}

impl<'de> Deserialize<'de> for PmiSeed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(PmiSeed::Seed(v)),
            Raw::S(s) if s == "avg" => Ok(PmiSeed::Avg),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a seed or \"avg\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiRecord {
    pub sentence_id: String,
    pub seed: PmiSeed,
    pub pmi_bits: f64,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub n_pairs: usize,
    pub bound_bits: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub sentence_id: String,
    pub seed: u64,
    pub pa: f64,
    pub ca: f64,
}

pub fn pmi(q: LogProb, p: LogProb) -> f64 {
    q.bits() - p.bits()
}

/// Mean of the per-pair values; `None` when there are none.
pub fn avg_pmi(pair_pmis: &[f64]) -> Option<f64> {
    (!pair_pmis.is_empty()).then(|| pair_pmis.iter().sum::<f64>() / pair_pmis.len() as f64)
}

/// Sample mean and Monte-Carlo standard error (`sd / sqrt(n)`, `n - 1` in the SD).
pub fn mi_bound(pair_pmis: &[f64]) -> Result<MiEstimate, InfoError> {
    let n = pair_pmis.len();
    let mean = avg_pmi(pair_pmis).ok_or(InfoError::Empty)?;
    let std_err = if n > 1 {
        let var = pair_pmis.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MiEstimate { n_pairs: n, bound_bits: mean, std_err })
}

/// Per-pair and per-sentence-average PMI records.
///
/// Output follows corpus order; each sentence contributes its pair rows in
/// the order the pairs were given, then one `avg` row. Sentences without
/// scrambles are skipped.
pub fn pmi_records(
    sentences: &[SentenceRecord],
    pairs: &[ScramblePair],
    p: &dyn SentenceScorer,
    q: &dyn ConditionalScorer,
) -> Result<Vec<PmiRecord>, InfoError> {
    let index: HashMap<&str, usize> = sentences.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut by_sentence: Vec<Vec<&ScramblePair>> = vec![Vec::new(); sentences.len()];
    for pair in pairs {
        let i = *index
            .get(pair.sentence_id.as_str())
            .ok_or_else(|| InfoError::UnknownSentence(pair.sentence_id.clone()))?;
        by_sentence[i].push(pair);
    }
    let per_sentence: Vec<Result<Vec<PmiRecord>, InfoError>> = sentences
        .par_iter()
        .zip(by_sentence.par_iter())
        .filter(|(_, ps)| !ps.is_empty())
        .map(|(sent, ps)| {
            let p_bits = p.logp_sentence(&sent.tokens)?;
            let mut out = Vec::with_capacity(ps.len() + 1);
            for pair in ps {
                let q_bits = q.logp_cond(&sent.tokens, &pair.scrambled)?;
                out.push(PmiRecord {
                    sentence_id: sent.id.clone(),
                    seed: PmiSeed::Seed(pair.seed),
                    pmi_bits: pmi(q_bits, p_bits),
                    length: sent.tokens.len(),
                });
            }
            let vals: Vec<f64> = out.iter().map(|r| r.pmi_bits).collect();
            out.push(PmiRecord {
                sentence_id: sent.id.clone(),
                seed: PmiSeed::Avg,
                pmi_bits: avg_pmi(&vals).unwrap(),
                length: sent.tokens.len(),
            });
            Ok(out)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_sentence {
        out.extend(r?);
    }
    Ok(out)
}

/// Classic dynamic-programming edit distance with unit insert, delete and
/// substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Token,
    /// Characters of the space-joined sentence.
    Char,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `LD / max(|o|, |r|)`
    #[default]
    MaxLen,
    /// `2 LD / (|o| + |r| + LD)`, which is a metric.
    Metric,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditMetric {
    pub granularity: Granularity,
    pub normalization: Normalization,
}

impl EditMetric {
    /// `1 - norm(LD(o, r))`, in `[0, 1]`.
    pub fn accuracy<S: AsRef<str>>(&self, o: &[S], r: &[S]) -> Result<f64, InfoError> {
        let (ld, lo, lr) = match self.granularity {
            Granularity::Token => {
                let o: Vec<&str> = o.iter().map(|s| s.as_ref()).collect();
                let r: Vec<&str> = r.iter().map(|s| s.as_ref()).collect();
                (levenshtein(&o, &r), o.len(), r.len())
            }
            Granularity::Char => {
                let join = |v: &[S]| -> Vec<char> {
                    v.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(" ").chars().collect()
                };
                let (o, r) = (join(o), join(r));
                (levenshtein(&o, &r), o.len(), r.len())
            }
        };
        if lo == 0 && lr == 0 {
            return Err(InfoError::BothEmpty);
        }
        let norm = match self.normalization {
            Normalization::MaxLen => ld as f64 / lo.max(lr) as f64,
            Normalization::Metric => 2.0 * ld as f64 / (lo + lr + ld) as f64,
        };
        Ok((1.0 - norm).clamp(0.0, 1.0))
    }
}

/// Probe accuracy of a reconstruction `r` of the original `o`.
pub fn probe_accuracy<S: AsRef<str>>(o: &[S], r: &[S]) -> Result<f64, InfoError> {
    EditMetric::default().accuracy(o, r)
}

/// The same quantity for the scramble itself, the do-nothing baseline.
pub fn control_accuracy<S: AsRef<str>>(o: &[S], t: &[S]) -> Result<f64, InfoError> {
    EditMetric::default().accuracy(o, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Pearson correlation with a Fisher-z interval at `level` (e.g. 0.95).
pub fn pearson(x: &[f64], y: &[f64], level: f64) -> Result<Correlation, InfoError> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 {
        return Err(InfoError::TooFew(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(InfoError::DegenerateVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() == 1.0 || n == 3 {
        let (lo, hi) = if r.abs() == 1.0 { (r, r) } else { (-1.0, 1.0) };
        return Ok(Correlation { n, r, ci_low: lo, ci_high: hi });
    }
    let z = r.atanh();
    let crit = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = crit / ((n - 3) as f64).sqrt();
    Ok(Correlation { n, r, ci_low: (z - half).tanh(), ci_high: (z + half).tanh() })
}

/// Correlation between sentence length and PMI over the `avg` records
/// (all records when none are averages).
pub fn length_pmi_correlation(records: &[PmiRecord]) -> Result<Correlation, InfoError> {
    let avg: Vec<&PmiRecord> = records.iter().filter(|r| r.seed == PmiSeed::Avg).collect();
    let use_: Vec<&PmiRecord> = if avg.is_empty() { records.iter().collect() } else { avg };
    let x: Vec<f64> = use_.iter().map(|r| r.length as f64).collect();
    let y: Vec<f64> = use_.iter().map(|r| r.pmi_bits).collect();
    pearson(&x, &y, 0.95)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over `[0, 1]`; the last bin is closed.
pub fn unit_histogram(values: &[f64], bins: usize) -> Vec<HistBin> {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistBin { lo: i as f64 / bins as f64, hi: (i + 1) as f64 / bins as f64, count })
        .collect()
}

/// A finite sentence distribution whose `I(S; T)` under uniform scrambling
/// can be computed by enumeration.
#[derive(Debug, Clone)]
pub struct EnumerableLanguage {
    sentences: Vec<(Vec<String>, f64)>,
}

impl EnumerableLanguage {
    pub fn new(sentences: Vec<(Vec<String>, f64)>) -> Result<Self, InfoError> {
        let total: f64 = sentences.iter().map(|s| s.1).sum();
        if sentences.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(InfoError::BadLanguage(format!("probabilities sum to {total}")));
        }
        if sentences.iter().any(|(s, p)| s.is_empty() || !(*p > 0.0)) {
            return Err(InfoError::BadLanguage("empty sentence or non-positive probability".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !sentences.iter().all(|(s, _)| seen.insert(s.clone())) {
            return Err(InfoError::BadLanguage("duplicate sentence".into()));
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[(Vec<String>, f64)] {
        &self.sentences
    }

    pub fn logp(&self, s: &[String]) -> Option<f64> {
        self.sentences.iter().find(|(x, _)| x == s).map(|(_, p)| p.log2())
    }

    /// `P(t | s)`: uniform over the distinct orderings of `s`.
    fn scramble_dist(s: &[String]) -> Vec<(Vec<String>, f64)> {
        let all = BagOfWords::new(s).unwrap().orderings();
        let w = 1.0 / all.len() as f64;
        all.into_iter().map(|t| (t, w)).collect()
    }

    fn joint(&self) -> (Vec<(usize, Vec<String>, f64)>, HashMap<Vec<String>, f64>) {
        let mut joint = Vec::new();
        let mut pt: HashMap<Vec<String>, f64> = HashMap::new();
        for (i, (s, ps)) in self.sentences.iter().enumerate() {
            for (t, pts) in Self::scramble_dist(s) {
                *pt.entry(t.clone()).or_default() += ps * pts;
                joint.push((i, t, ps * pts));
            }
        }
        (joint, pt)
    }

    /// Exact `I(S; T)` in bits.
    pub fn exact_mi(&self) -> f64 {
        let (joint, pt) = self.joint();
        joint
            .iter()
            .map(|(i, t, pst)| {
                let ps = self.sentences[*i].1;
                pst * (pst / (ps * pt[t])).log2()
            })
            .sum()
    }

    /// Exact posterior `log2 p(s | t)`, the optimal variational `q`.
    pub fn posterior(&self) -> ExactPosterior {
        let (joint, pt) = self.joint();
        let table = joint
            .into_iter()
            .map(|(i, t, pst)| ((self.sentences[i].0.clone(), t.clone()), (pst / pt[&t]).log2()))
            .collect();
        ExactPosterior { table }
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> &[String] {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (s, p) in &self.sentences {
            acc += p;
            if u < acc {
                return s;
            }
        }
        &self.sentences.last().unwrap().0
    }
}

impl SentenceScorer for EnumerableLanguage {
    fn logp_sentence(&self, tokens: &[String]) -> Result<LogProb, ProviderError> {
        self.logp(tokens)
            .and_then(LogProb::new)
            .ok_or_else(|| ProviderError::Data(format!("sentence {tokens:?} is outside the language")))
    }
}

pub struct ExactPosterior {
    table: HashMap<(Vec<String>, Vec<String>), f64>,
}

impl ConditionalScorer for ExactPosterior {
    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<LogProb, ProviderError> {
        let key = (target.to_vec(), condition.to_vec());
        self.table
            .get(&key)
            .map(|&v| LogProb::new(v.min(0.0)).unwrap())
            .ok_or_else(|| ProviderError::Data(format!("{target:?} has no mass given {condition:?}")))
    }
}
