//! A sequential-selection reordering model `q(s | t)`.
//!
//! The sentence is produced left to right from the bag of words of `t`. At
//! each step the probability of emitting word type `w` is proportional to
//! `count_remaining(w) * 2^(score(w | prefix) / tau)`, where `score` is the
//! step language model's incremental `log2` probability. Every step is
//! normalized over the types still in the bag, so `q` sums to one over the
//! distinct orderings of the bag and depends on `t` only through its
//! multiset.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ngram::{LogProb, NgramModel, TokenId, BOS_ID};

pub const DEFAULT_BEAM_WIDTH: usize = 16;
pub const DEFAULT_TEMPERATURE_BOUNDS: (f64, f64) = (0.05, 50.0);

#[derive(Debug, Error, PartialEq)]
pub enum ReorderError {
    #[error("sentence and scramble are not permutations of each other")]
    MultisetMismatch,
    #[error("empty token sequence")]
    Empty,
    #[error("temperature must be finite and positive, got {0}")]
    BadTemperature(f64),
    #[error("invalid temperature bounds [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("no pairs to fit on")]
    NoPairs,
    #[error("beam width must be at least 1")]
    BeamWidth,
}

/// A token multiset. Types are kept in sorted order, so comparing
/// type-index sequences is comparing token sequences lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagOfWords {
    types: Vec<String>,
    counts: Vec<u32>,
}

impl BagOfWords {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Result<Self, ReorderError> {
        if tokens.is_empty() {
            return Err(ReorderError::Empty);
        }
        let mut m: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens {
            *m.entry(t.as_ref()).or_default() += 1;
        }
        let (types, counts) = m.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
        Ok(Self { types, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Type indices of `s`, or `None` when `s` is not an ordering of the bag.
    fn indices<S: AsRef<str>>(&self, s: &[S]) -> Option<Vec<usize>> {
        let mut left = self.counts.clone();
        let mut out = Vec::with_capacity(s.len());
        for w in s {
            let i = self.types.binary_search_by(|t| t.as_str().cmp(w.as_ref())).ok()?;
            left[i] = left[i].checked_sub(1)?;
            out.push(i);
        }
        left.iter().all(|&c| c == 0).then_some(out)
    }

    /// All distinct orderings, in lexicographic order.
    pub fn orderings(&self) -> Vec<Vec<String>> {
        let mut idx: Vec<usize> =
            self.counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat(i).take(c as usize)).collect();
        let mut out = Vec::new();
        loop {
            out.push(idx.iter().map(|&i| self.types[i].clone()).collect());
            if !next_permutation(&mut idx) {
                return out;
            }
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `log2(sum_i 2^x_i)`.
pub(crate) fn log2_sum_exp2(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp2()).sum::<f64>().log2()
}

/// One complete ordering with its per-step `log2` probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub tokens: Vec<String>,
    pub step_logps: Vec<f64>,
    pub logq: f64,
}

#[derive(Debug, Clone)]
pub struct ReorderModel {
    step_lm: Arc<NgramModel>,
    temperature: f64,
}

/// Bag state shared by scoring and decoding.
struct Stepper<'a> {
    lm: &'a NgramModel,
    bag: &'a BagOfWords,
    type_ids: Vec<TokenId>,
    log_counts_cache: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(lm: &'a NgramModel, bag: &'a BagOfWords) -> Self {
        let type_ids = bag.types.iter().map(|w| lm.token_id(w)).collect();
        let max = bag.counts.iter().copied().max().unwrap_or(1) as usize;
        let log_counts_cache = (0..=max).map(|c| (c as f64).log2()).collect();
        Self { lm, bag, type_ids, log_counts_cache }
    }

    /// Scores `(type, log2 count, lm score)` of every type left in the bag.
    fn candidates(&self, history: &[TokenId], left: &[u32]) -> Vec<(usize, f64, f64)> {
        (0..self.bag.types.len())
            .filter(|&i| left[i] > 0)
            .map(|i| {
                let score = self.lm.logp_next_ids(history, self.type_ids[i]);
                (i, self.log_counts_cache[left[i] as usize], score)
            })
            .collect()
    }
}

fn step_logps(cands: &[(usize, f64, f64)], tau: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    let z = log2_sum_exp2(cands.iter().map(move |&(_, lc, sc)| lc + sc / tau));
    cands.iter().map(move |&(i, lc, sc)| (i, lc + sc / tau - z))
}

impl ReorderModel {
    pub fn new(step_lm: Arc<NgramModel>, temperature: f64) -> Result<Self, ReorderError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(ReorderError::BadTemperature(temperature));
        }
        Ok(Self { step_lm, temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn step_lm(&self) -> &Arc<NgramModel> {
        &self.step_lm
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self, ReorderError> {
        Self::new(self.step_lm.clone(), temperature)
    }

    /// `log2 q(s | t)`.
    pub fn q_logp<S: AsRef<str>, T: AsRef<str>>(&self, s: &[S], t: &[T]) -> Result<LogProb, ReorderError> {
        let d = self.derivation(s, t)?;
        Ok(LogProb::new(d.logq).expect("normalized steps give a finite non-positive total"))
    }

    /// Step-by-step account of how `q` produces `s` from the bag of `t`.
    pub fn derivation<S: AsRef<str>, T: AsRef<str>>(&self, s: &[S], t: &[T]) -> Result<Derivation, ReorderError> {
        let bag = BagOfWords::new(t)?;
        let idx = bag.indices(s).ok_or(ReorderError::MultisetMismatch)?;
        let st = Stepper::new(&self.step_lm, &bag);
        let mut left = bag.counts.clone();
        let mut history = vec![BOS_ID];
        let mut steps = Vec::with_capacity(idx.len());
        for &chosen in &idx {
            let cands = st.candidates(&history, &left);
            let lp = step_logps(&cands, self.temperature).find(|&(i, _)| i == chosen).unwrap().1;
            steps.push(lp);
            left[chosen] -= 1;
            history.push(st.type_ids[chosen]);
        }
        Ok(Derivation {
            tokens: idx.iter().map(|&i| bag.types[i].clone()).collect(),
            logq: steps.iter().sum::<f64>().min(0.0),
            step_logps: steps,
        })
    }

    /// Beam search for the most probable ordering of `t`'s words. Equal
    /// scores are resolved toward the lexicographically smaller sequence.
    pub fn decode<T: AsRef<str>>(&self, t: &[T], beam_width: usize) -> Result<Derivation, ReorderError> {
        if beam_width == 0 {
            return Err(ReorderError::BeamWidth);
        }
        let bag = BagOfWords::new(t)?;
        let st = Stepper::new(&self.step_lm, &bag);
        let n = bag.len();

        struct Hyp {
            seq: Vec<usize>,
            history: Vec<TokenId>,
            left: Vec<u32>,
            steps: Vec<f64>,
            total: f64,
        }
        let rank = |a: &Hyp, b: &Hyp| -> Ordering { b.total.total_cmp(&a.total).then_with(|| a.seq.cmp(&b.seq)) };

        let mut beam = vec![Hyp {
            seq: Vec::with_capacity(n),
            history: vec![BOS_ID],
            left: bag.counts.clone(),
            steps: Vec::with_capacity(n),
            total: 0.0,
        }];
        for _ in 0..n {
            let mut next = Vec::with_capacity(beam.len() * bag.types.len());
            for h in &beam {
                let cands = st.candidates(&h.history, &h.left);
                for (i, lp) in step_logps(&cands, self.temperature) {
                    let mut seq = h.seq.clone();
                    seq.push(i);
                    let mut history = h.history.clone();
                    history.push(st.type_ids[i]);
                    let mut left = h.left.clone();
                    left[i] -= 1;
                    let mut steps = h.steps.clone();
                    steps.push(lp);
                    next.push(Hyp { seq, history, left, steps, total: h.total + lp });
                }
            }
            next.sort_by(rank);
            next.truncate(beam_width);
            beam = next;
        }
        let best = beam.swap_remove(0);
        Ok(Derivation {
            tokens: best.seq.iter().map(|&i| bag.types[i].clone()).collect(),
            logq: best.steps.iter().sum::<f64>().min(0.0),
            step_logps: best.steps,
        })
    }
}

/// Result of [`fit_temperature`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    /// Mean `log2 q(s | t)` over the fitting pairs at `temperature`.
    pub objective: f64,
    pub bounds: (f64, f64),
    pub n_pairs: usize,
}

/// Precomputed per-step candidate scores, so the objective at a new
/// temperature costs no language-model lookups.
pub struct FitObjective {
    // Flattened (log2 count, lm score) per candidate.
    log_counts: Vec<f64>,
    scores: Vec<f64>,
    // (start, end, chosen offset) per step with more than one candidate.
    steps: Vec<(usize, usize, usize)>,
    n_pairs: usize,
}

impl FitObjective {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(lm: &NgramModel, pairs: &[(Vec<S>, Vec<T>)]) -> Result<Self, ReorderError> {
        if pairs.is_empty() {
            return Err(ReorderError::NoPairs);
        }
        let mut me = Self { log_counts: vec![], scores: vec![], steps: vec![], n_pairs: pairs.len() };
        for (s, t) in pairs {
            let bag = BagOfWords::new(t)?;
            let idx = bag.indices(s).ok_or(ReorderError::MultisetMismatch)?;
            let st = Stepper::new(lm, &bag);
            let mut left = bag.counts.clone();
            let mut history = vec![BOS_ID];
            for &chosen in &idx {
                let cands = st.candidates(&history, &left);
                if cands.len() > 1 {
                    let start = me.scores.len();
                    let pos = cands.iter().position(|c| c.0 == chosen).unwrap();
                    for (_, lc, sc) in cands {
                        me.log_counts.push(lc);
                        me.scores.push(sc);
                    }
                    me.steps.push((start, me.scores.len(), start + pos));
                }
                left[chosen] -= 1;
                history.push(st.type_ids[chosen]);
            }
        }
        Ok(me)
    }

    /// Mean `log2 q(s | t)` at temperature `tau`.
    pub fn eval(&self, tau: f64) -> f64 {
        let inv = 1.0 / tau;
        let total: f64 = self
            .steps
            .iter()
            .map(|&(a, b, c)| {
                let logits = (a..b).map(|j| self.log_counts[j] + self.scores[j] * inv);
                self.log_counts[c] + self.scores[c] * inv - log2_sum_exp2(logits)
            })
            .sum();
        total / self.n_pairs as f64
    }
}

const GRID_POINTS: usize = 25;

/// Maximizes mean `log2 q(s | t)` over `tau` in `bounds`: a log-spaced grid
/// locates the best bracket, then golden-section search on `ln tau`
/// refines it. Exact ties go to the smaller temperature.
pub fn fit_temperature<S: AsRef<str>, T: AsRef<str>>(
    lm: &NgramModel,
    pairs: &[(Vec<S>, Vec<T>)],
    bounds: (f64, f64),
) -> Result<TemperatureFit, ReorderError> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(ReorderError::BadBounds(lo, hi));
    }
    let obj = FitObjective::new(lm, pairs)?;
    let (ulo, uhi) = (lo.ln(), hi.ln());
    let f = |u: f64| obj.eval(u.exp());

    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| ulo + (uhi - ulo) * i as f64 / (GRID_POINTS - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
    let mut best = 0;
    for i in 1..GRID_POINTS {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let mut cands: Vec<(f64, f64)> = grid.iter().copied().zip(vals.iter().copied()).collect();

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID_POINTS - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-7 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    cands.push((c, fc));
    cands.push((d, fd));
    cands.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut pick = cands[0];
    for &cand in &cands[1..] {
        if cand.1 > pick.1 {
            pick = cand;
        }
    }
    Ok(TemperatureFit {
        temperature: pick.0.exp().clamp(lo, hi),
        objective: pick.1,
        bounds,
        n_pairs: pairs.len(),
    })
}
