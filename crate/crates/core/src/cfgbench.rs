//! Context-free grammar diagnostic for the reordering model.
//!
//! Two shipped grammars produce simple transitive sentences. In type A the
//! subject is an animate proper noun and the object an inanimate common
//! noun phrase, so agreement and animacy tell the roles apart; in type B
//! both arguments are proper nouns and only position does. A reorderer
//! that exploits such cues should restore type A nearly always and type B
//! about half the time.
//!
//! Grammar files are line based:
//!
//! ```text
//! # comment
//! start S
//! S -> Subj VP
//! VP -> Vt Obj | Vt Obj Adv
//!
//! [lexicon]
//! PropN animate proper sg : Sam John Mary
//! ```
//!
//! A rule lists alternatives separated by `|`; repeating a left-hand side
//! adds alternatives. In the lexicon section each line names a category,
//! optional feature tags, a colon and the words. Any symbol that is neither
//! a rule head nor a lexicon category is a literal terminal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ngram::{NgramModel, TrainConfig};
use crate::reorder::{fit_temperature, ReorderModel, DEFAULT_BEAM_WIDTH, DEFAULT_TEMPERATURE_BOUNDS};
use crate::rng::{mix64, SplitMix64};
use crate::textdata::{pair_seed, scramble, SentenceRecord, Split, DEFAULT_SEEDS};

pub const TYPE_A_GRAMMAR: &str = include_str!("../../../fixtures/grammars/type_a.cfg");
pub const TYPE_B_GRAMMAR: &str = include_str!("../../../fixtures/grammars/type_b.cfg");

pub const DEFAULT_MAX_DEPTH: usize = 32;

#[derive(Debug, Error)]
pub enum CfgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grammar has no rules")]
    Empty,
    #[error("`{0}` is defined twice")]
    Redefined(String),
    #[error("start symbol `{0}` is not defined")]
    UndefinedStart(String),
    #[error("nonterminal `{0}` is unreachable from the start symbol")]
    Unreachable(String),
    #[error("nonterminal `{0}` derives no terminal string")]
    Unproductive(String),
    #[error("derivation exceeded depth {0}")]
    TooDeep(usize),
    #[error("could not draw {wanted} distinct sentences (got {got})")]
    Exhausted { wanted: usize, got: usize },
    #[error("n must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Model(#[from] crate::ngram::LmError),
    #[error(transparent)]
    Reorder(#[from] crate::reorder::ReorderError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Symbol {
    Nonterminal(String),
    Terminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexCategory {
    pub features: BTreeSet<String>,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    start: String,
    rules: BTreeMap<String, Vec<Vec<Symbol>>>,
    lexicon: BTreeMap<String, LexCategory>,
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, CfgError> {
        let mut start = None;
        let mut raw_rules: Vec<(String, Vec<Vec<String>>)> = Vec::new();
        let mut lexicon = BTreeMap::new();
        let mut in_lexicon = false;
        for (i, line) in text.lines().enumerate() {
            let err = |message: &str| CfgError::Parse { line: i + 1, message: message.to_string() };
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line == "[lexicon]" {
                in_lexicon = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix("start ") {
                start = Some(rest.trim().to_string());
                continue;
            }
            if in_lexicon {
                let (head, words) = line.split_once(':').ok_or_else(|| err("expected `Category features : words`"))?;
                let mut head = head.split_whitespace();
                let cat = head.next().ok_or_else(|| err("missing category"))?.to_string();
                let features = head.map(String::from).collect();
                let words: Vec<String> = words.split_whitespace().map(String::from).collect();
                if words.is_empty() {
                    return Err(err("lexicon category has no words"));
                }
                if lexicon.insert(cat.clone(), LexCategory { features, words }).is_some() {
                    return Err(CfgError::Redefined(cat));
                }
            } else {
                let (lhs, rhs) = line.split_once("->").ok_or_else(|| err("expected `NT -> symbols | symbols`"))?;
                let lhs = lhs.trim();
                if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                    return Err(err("left-hand side must be a single symbol"));
                }
                let mut alts = Vec::new();
                for alt in rhs.split('|') {
                    let syms: Vec<String> = alt.split_whitespace().map(String::from).collect();
                    if syms.is_empty() {
                        return Err(err("empty alternative"));
                    }
                    alts.push(syms);
                }
                raw_rules.push((lhs.to_string(), alts));
            }
        }
        if raw_rules.is_empty() {
            return Err(CfgError::Empty);
        }
        let start = start.unwrap_or_else(|| raw_rules[0].0.clone());

        let heads: HashSet<&str> = raw_rules.iter().map(|(l, _)| l.as_str()).collect();
        if let Some(dup) = heads.iter().find(|h| lexicon.contains_key(**h)) {
            return Err(CfgError::Redefined(dup.to_string()));
        }
        let mut rules: BTreeMap<String, Vec<Vec<Symbol>>> = BTreeMap::new();
        for (lhs, alts) in &raw_rules {
            let entry = rules.entry(lhs.clone()).or_default();
            for alt in alts {
                entry.push(
                    alt.iter()
                        .map(|s| {
                            if heads.contains(s.as_str()) || lexicon.contains_key(s) {
                                Symbol::Nonterminal(s.clone())
                            } else {
                                Symbol::Terminal(s.clone())
                            }
                        })
                        .collect(),
                );
            }
        }
        let g = Self { start, rules, lexicon };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), CfgError> {
        if !self.rules.contains_key(&self.start) && !self.lexicon.contains_key(&self.start) {
            return Err(CfgError::UndefinedStart(self.start.clone()));
        }
        let mut productive: HashSet<&str> = self.lexicon.keys().map(String::as_str).collect();
        loop {
            let before = productive.len();
            for (lhs, alts) in &self.rules {
                let ok = alts.iter().any(|alt| {
                    alt.iter().all(|s| match s {
                        Symbol::Terminal(_) => true,
                        Symbol::Nonterminal(n) => productive.contains(n.as_str()),
                    })
                });
                if ok {
                    productive.insert(lhs);
                }
            }
            if productive.len() == before {
                break;
            }
        }
        if let Some(bad) = self.rules.keys().find(|k| !productive.contains(k.as_str())) {
            return Err(CfgError::Unproductive(bad.clone()));
        }
        let mut reached: HashSet<&str> = HashSet::from([self.start.as_str()]);
        let mut todo = vec![self.start.as_str()];
        while let Some(n) = todo.pop() {
            for alt in self.rules.get(n).into_iter().flatten() {
                for s in alt {
                    if let Symbol::Nonterminal(m) = s {
                        if reached.insert(m) {
                            todo.push(m);
                        }
                    }
                }
            }
        }
        let all = self.rules.keys().chain(self.lexicon.keys());
        if let Some(bad) = all.into_iter().find(|k| !reached.contains(k.as_str())) {
            return Err(CfgError::Unreachable(bad.clone()));
        }
        Ok(())
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn lexicon(&self) -> &BTreeMap<String, LexCategory> {
        &self.lexicon
    }

    /// Lexicon categories containing `word`.
    pub fn categories_of(&self, word: &str) -> Vec<(&str, &LexCategory)> {
        self.lexicon.iter().filter(|(_, c)| c.words.iter().any(|w| w == word)).map(|(k, c)| (k.as_str(), c)).collect()
    }

    /// One derivation, choosing uniformly among alternatives (and among the
    /// words of a lexicon category).
    pub fn sample(&self, rng: &mut SplitMix64, max_depth: usize) -> Result<Vec<String>, CfgError> {
        let mut out = Vec::new();
        self.expand(&self.start, rng, 0, max_depth, &mut out)?;
        Ok(out)
    }

    fn expand(
        &self,
        sym: &str,
        rng: &mut SplitMix64,
        depth: usize,
        max_depth: usize,
        out: &mut Vec<String>,
    ) -> Result<(), CfgError> {
        if depth > max_depth {
            return Err(CfgError::TooDeep(max_depth));
        }
        if let Some(cat) = self.lexicon.get(sym) {
            out.push(cat.words[rng.below(cat.words.len() as u64) as usize].clone());
            return Ok(());
        }
        let alts = &self.rules[sym];
        let alt = &alts[rng.below(alts.len() as u64) as usize];
        for s in alt {
            match s {
                Symbol::Terminal(t) => out.push(t.clone()),
                Symbol::Nonterminal(n) => self.expand(n, rng, depth + 1, max_depth, out)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeTag {
    A,
    B,
}

impl TypeTag {
    fn task(self) -> &'static str {
        match self {
            TypeTag::A => "cfg-a",
            TypeTag::B => "cfg-b",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSet {
    pub type_tag: TypeTag,
    pub sentences: Vec<SentenceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub dedupe: bool,
    pub max_depth: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { dedupe: false, max_depth: DEFAULT_MAX_DEPTH }
    }
}

/// `n` sentences from `grammar`, with ids `<tag><index>` (e.g. `A0007`).
pub fn generate(
    grammar: &Grammar,
    type_tag: TypeTag,
    n: usize,
    seed: u64,
    opts: GenerateOptions,
) -> Result<GeneratedSet, CfgError> {
    if n == 0 {
        return Err(CfgError::ZeroCount);
    }
    let mut rng = SplitMix64::new(seed);
    let mut seen = HashSet::new();
    let mut sentences = Vec::with_capacity(n);
    let budget = n.saturating_mul(1000);
    for _ in 0..budget {
        if sentences.len() == n {
            break;
        }
        let tokens = grammar.sample(&mut rng, opts.max_depth)?;
        if opts.dedupe && !seen.insert(tokens.clone()) {
            continue;
        }
        sentences.push(SentenceRecord {
            id: format!("{:?}{:04}", type_tag, sentences.len()),
            task: type_tag.task().to_string(),
            tokens,
            split: Split::Probe,
        });
    }
    if sentences.len() < n {
        return Err(CfgError::Exhausted { wanted: n, got: sentences.len() });
    }
    Ok(GeneratedSet { type_tag, sentences })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub type_tag: TypeTag,
    pub n_sentences: usize,
    pub mean_exact_match: f64,
    pub per_seed_accuracies: Vec<f64>,
    /// Sample variance of the per-seed accuracies.
    pub variance: f64,
}

/// Scrambles every sentence under every seed, reconstructs it, and scores
/// exact match.
pub fn evaluate_with<S, R>(set: &GeneratedSet, seeds: &[u64], scrambler: S, reconstruct: R) -> AccuracyReport
where
    S: Fn(&SentenceRecord, u64) -> Vec<String> + Sync,
    R: Fn(&[String]) -> Vec<String> + Sync,
{
    let per_seed: Vec<f64> = seeds
        .iter()
        .map(|&seed| {
            let hits: usize = set
                .sentences
                .par_iter()
                .map(|s| usize::from(reconstruct(&scrambler(s, seed)) == s.tokens))
                .sum();
            hits as f64 / set.sentences.len() as f64
        })
        .collect();
    let k = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / k;
    let variance =
        if per_seed.len() > 1 { per_seed.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    AccuracyReport {
        type_tag: set.type_tag,
        n_sentences: set.sentences.len(),
        mean_exact_match: mean,
        per_seed_accuracies: per_seed,
        variance,
    }
}

/// Exact-match accuracy of beam decoding from seeded scrambles.
pub fn evaluate_reordering(set: &GeneratedSet, model: &ReorderModel, seeds: &[u64], beam_width: usize) -> AccuracyReport {
    evaluate_with(
        set,
        seeds,
        |s, seed| scramble(&s.tokens, pair_seed(&s.id, seed)),
        |t| model.decode(t, beam_width).expect("generated sentences are nonempty").tokens,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub n_eval: usize,
    /// Sentences per grammar for the step language model.
    pub n_train: usize,
    /// Sentences per grammar for fitting the temperature.
    pub n_fit: usize,
    pub seeds: Vec<u64>,
    pub order: usize,
    pub beam_width: usize,
    pub temperature_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            n_eval: 1000,
            n_train: 20_000,
            n_fit: 300,
            seeds: DEFAULT_SEEDS.to_vec(),
            order: 3,
            beam_width: DEFAULT_BEAM_WIDTH,
            temperature_bounds: DEFAULT_TEMPERATURE_BOUNDS,
            seed: 2023,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    pub temperature: f64,
    pub n_train_sentences: usize,
    pub type_a: AccuracyReport,
    pub type_b: AccuracyReport,
}

pub struct Diagnostic {
    pub result: DiagnosticResult,
    pub model: ReorderModel,
    pub eval_a: GeneratedSet,
    pub eval_b: GeneratedSet,
}

fn bag_key(tokens: &[String]) -> Vec<String> {
    let mut k = tokens.to_vec();
    k.sort();
    k
}

/// The full type A / type B experiment.
///
/// Evaluation sets are drawn without duplicates. One step language model is
/// trained on fresh samples from both grammars, dropping every sentence whose
/// bag of words matches an evaluation or temperature-fitting sentence, so
/// neither the evaluated orderings nor their argument swaps are memorized.
/// The temperature is then fitted on the held-out fitting sentences.
pub fn run_diagnostic(a: &Grammar, b: &Grammar, cfg: &DiagnosticConfig) -> Result<Diagnostic, CfgError> {
    let sub = |k: u64| mix64(cfg.seed ^ k);
    let dedupe = GenerateOptions { dedupe: true, ..Default::default() };
    let eval_a = generate(a, TypeTag::A, cfg.n_eval, sub(1), dedupe)?;
    let eval_b = generate(b, TypeTag::B, cfg.n_eval, sub(2), dedupe)?;
    let fit_a = generate(a, TypeTag::A, cfg.n_fit, sub(3), GenerateOptions::default())?;
    let fit_b = generate(b, TypeTag::B, cfg.n_fit, sub(4), GenerateOptions::default())?;

    let held_out: HashSet<Vec<String>> = eval_a
        .sentences
        .iter()
        .chain(&eval_b.sentences)
        .chain(&fit_a.sentences)
        .chain(&fit_b.sentences)
        .map(|s| bag_key(&s.tokens))
        .collect();
    let train: Vec<Vec<String>> = [(a, TypeTag::A, sub(5)), (b, TypeTag::B, sub(6))]
        .into_iter()
        .map(|(g, tag, seed)| generate(g, tag, cfg.n_train, seed, GenerateOptions::default()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flat_map(|set| set.sentences)
        .map(|s| s.tokens)
        .filter(|t| !held_out.contains(&bag_key(t)))
        .collect();

    let lm = NgramModel::train(&train, TrainConfig { order: cfg.order, ..TrainConfig::default() })?;
    let fit_pairs: Vec<(Vec<String>, Vec<String>)> = fit_a
        .sentences
        .iter()
        .chain(&fit_b.sentences)
        .map(|s| (s.tokens.clone(), scramble(&s.tokens, pair_seed(&s.id, cfg.seed))))
        .collect();
    let fit = fit_temperature(&lm, &fit_pairs, cfg.temperature_bounds)?;
    let model = ReorderModel::new(Arc::new(lm), fit.temperature)?;

    let type_a = evaluate_reordering(&eval_a, &model, &cfg.seeds, cfg.beam_width);
    let type_b = evaluate_reordering(&eval_b, &model, &cfg.seeds, cfg.beam_width);
    Ok(Diagnostic {
        result: DiagnosticResult { temperature: fit.temperature, n_train_sentences: train.len(), type_a, type_b },
        model,
        eval_a,
        eval_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reorder::BagOfWords;

    #[test]
    fn parses_shipped_grammars() {
        let a = Grammar::parse(TYPE_A_GRAMMAR).unwrap();
        let b = Grammar::parse(TYPE_B_GRAMMAR).unwrap();
        assert_eq!(a.start(), "S");
        assert!(a.lexicon()["NSg"].features.contains("inanimate"));
        assert!(b.lexicon()["Vt"].features.contains("patient=animate"));
        assert_eq!(a.categories_of("Sam")[0].0, "PropN");
    }

    #[test]
    fn grammar_errors() {
        assert!(matches!(Grammar::parse("# nothing\n"), Err(CfgError::Empty)));
        assert!(matches!(Grammar::parse("S -> a\nbogus line"), Err(CfgError::Parse { line: 2, .. })));
        assert!(matches!(Grammar::parse("S -> a |"), Err(CfgError::Parse { line: 1, .. })));
        assert!(matches!(Grammar::parse("S -> a | X\nX -> X b"), Err(CfgError::Unproductive(x)) if x == "X"));
        assert!(matches!(Grammar::parse("S -> a\nT -> b"), Err(CfgError::Unreachable(x)) if x == "T"));
        assert!(matches!(Grammar::parse("start Q\nS -> a"), Err(CfgError::UndefinedStart(x)) if x == "Q"));
        assert!(matches!(Grammar::parse("S -> N\n[lexicon]\nN : a\nN : b"), Err(CfgError::Redefined(x)) if x == "N"));
    }

    #[test]
    fn single_chain_grammar_repeats_itself() {
        let g = Grammar::parse("S -> NP V\nNP -> the dog\n[lexicon]\nV verb : barks").unwrap();
        let set = generate(&g, TypeTag::A, 5, 9, GenerateOptions::default()).unwrap();
        assert!(set.sentences.iter().all(|s| s.tokens == ["the", "dog", "barks"]));
        assert_eq!(set.sentences[4].id, "A0004");
        let dd = GenerateOptions { dedupe: true, ..Default::default() };
        assert!(matches!(generate(&g, TypeTag::A, 2, 9, dd), Err(CfgError::Exhausted { wanted: 2, got: 1 })));
        assert!(matches!(generate(&g, TypeTag::A, 0, 9, dd), Err(CfgError::ZeroCount)));
    }

    #[test]
    fn recursion_is_depth_limited() {
        let g = Grammar::parse("S -> a | a S").unwrap();
        let mut rng = SplitMix64::new(1);
        let mut saw_error = false;
        for _ in 0..200 {
            match g.sample(&mut rng, 4) {
                Ok(s) => assert!(s.len() <= 5),
                Err(e) => {
                    assert!(matches!(e, CfgError::TooDeep(4)));
                    saw_error = true;
                }
            }
        }
        assert!(saw_error);
    }

    #[test]
    fn samples_have_the_designed_shapes() {
        let a = Grammar::parse(TYPE_A_GRAMMAR).unwrap();
        let b = Grammar::parse(TYPE_B_GRAMMAR).unwrap();
        let sa = generate(&a, TypeTag::A, 300, 1, GenerateOptions::default()).unwrap();
        let sb = generate(&b, TypeTag::B, 300, 1, GenerateOptions::default()).unwrap();
        let cat = |g: &Grammar, w: &str| g.categories_of(w)[0].0.to_string();
        for s in &sa.sentences {
            assert!((4..=5).contains(&s.len()), "{:?}", s.tokens);
            assert_eq!(cat(&a, &s.tokens[0]), "PropN");
            assert_eq!(cat(&a, &s.tokens[1]), "Vt");
            // Determiner and noun agree in number.
            let noun = s.tokens.iter().rev().find(|w| cat(&a, w).starts_with('N')).unwrap();
            let det_feats = &a.categories_of(&s.tokens[2]).iter().flat_map(|c| c.1.features.clone()).collect::<Vec<_>>();
            let n_num = if cat(&a, noun) == "NSg" { "sg" } else { "pl" };
            assert!(det_feats.iter().any(|f| f == n_num), "{:?}", s.tokens);
        }
        for s in &sb.sentences {
            assert!((3..=4).contains(&s.len()));
            assert_eq!(cat(&b, &s.tokens[0]), "PropN");
            assert_eq!(cat(&b, &s.tokens[2]), "PropN");
        }
        // Both reference sentences are in the respective languages.
        let mut rng = SplitMix64::new(0);
        let mut found = (false, false);
        for _ in 0..200_000 {
            found.0 |= a.sample(&mut rng, 32).unwrap() == ["Sam", "throws", "the", "rock"];
            found.1 |= b.sample(&mut rng, 32).unwrap() == ["Sam", "beats", "John"];
            if found.0 && found.1 {
                break;
            }
        }
        assert_eq!(found, (true, true));
    }

    #[test]
    fn harness_scores_a_perfect_oracle_as_one() {
        let a = Grammar::parse(TYPE_A_GRAMMAR).unwrap();
        let set = generate(&a, TypeTag::A, 50, 3, GenerateOptions::default()).unwrap();
        let r = evaluate_with(&set, &DEFAULT_SEEDS, |s, _| s.tokens.clone(), |t| t.to_vec());
        assert_eq!(r.mean_exact_match, 1.0);
        assert_eq!(r.per_seed_accuracies, vec![1.0; 6]);
        assert_eq!(r.variance, 0.0);
    }

    fn small_diagnostic() -> (Diagnostic, Grammar) {
        let a = Grammar::parse(TYPE_A_GRAMMAR).unwrap();
        let b = Grammar::parse(TYPE_B_GRAMMAR).unwrap();
        let cfg = DiagnosticConfig { n_eval: 200, n_train: 8000, n_fit: 100, ..Default::default() };
        (run_diagnostic(&a, &b, &cfg).unwrap(), a)
    }

    #[test]
    fn diagnostic_separates_the_two_types() {
        let (d, a) = small_diagnostic();
        let r = &d.result;
        assert!(r.type_a.mean_exact_match >= 0.85, "{r:?}");
        assert!((0.35..=0.65).contains(&r.type_b.mean_exact_match), "{r:?}");
        let mean = r.type_a.per_seed_accuracies.iter().sum::<f64>() / 6.0;
        assert!((mean - r.type_a.mean_exact_match).abs() < 1e-12);

        // Type A: every subject/object swap scores strictly below the original.
        let is_adv = |w: &str| a.categories_of(w).iter().any(|c| c.1.features.contains("adverb"));
        for s in d.eval_a.sentences.iter().take(100) {
            let t = &s.tokens;
            let end = if is_adv(t.last().unwrap()) { t.len() - 1 } else { t.len() };
            let mut swapped: Vec<String> = t[2..end].to_vec();
            swapped.push(t[1].clone());
            swapped.push(t[0].clone());
            swapped.extend_from_slice(&t[end..]);
            let q = |x: &[String]| d.model.q_logp(x, t).unwrap().bits();
            assert!(q(t) > q(&swapped), "{t:?}");
        }
    }

    #[test]
    fn proper_noun_arguments_are_nearly_interchangeable() {
        let (d, _) = small_diagnostic();
        // At the first step of "Sam beats John" the two names split the mass.
        let t: Vec<String> = ["Sam", "beats", "John"].map(String::from).to_vec();
        let fwd = d.model.derivation(&t, &t).unwrap();
        let rev: Vec<String> = ["John", "beats", "Sam"].map(String::from).to_vec();
        let bwd = d.model.derivation(&rev, &t).unwrap();
        assert!((fwd.step_logps[0] - (0.5f64).log2()).abs() < 0.5, "{fwd:?}");
        assert!((fwd.logq - bwd.logq).abs() < 1.0, "{fwd:?} {bwd:?}");
        // Those two orders carry nearly all of q.
        let total: f64 = BagOfWords::new(&t)
            .unwrap()
            .orderings()
            .iter()
            .filter(|o| o[1] == "beats")
            .map(|o| d.model.q_logp(o, &t).unwrap().prob())
            .sum();
        assert!(total > 0.9, "{total}");
    }
}
