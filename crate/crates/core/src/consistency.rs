//! The regression dataset: whether a classifier's prediction survives
//! scrambling, joined with the sample's PMI and length.
//!
//! Only samples whose original prediction is correct are kept. A sample may
//! span several sentences (premise and hypothesis, say); those carry ids
//! `<sample_id>#<k>` in the PMI file and the sample's PMI is the mean over
//! its sentences, its length the total token count.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infometrics::{PmiRecord, PmiSeed};
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("no PMI records for samples: {}", .0.join(", "))]
    MissingJoin(Vec<String>),
    #[error("sample `{sample}` has no PMI record for seed {seed}")]
    MissingSeed { sample: String, seed: u64 },
    #[error("sample id `{0}` occurs more than once")]
    DuplicateSample(String),
    #[error("sample `{0}` has no scrambled predictions")]
    NoScrambles(String),
    #[error("invalid synthetic classifier: {0}")]
    BadSimulation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub task: String,
    pub sample_id: String,
    pub gold: String,
    pub pred_original: String,
    /// Scramble seed to the label predicted on that scramble.
    pub preds_scrambled: BTreeMap<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub task: String,
    pub sample_id: String,
    pub y: u8,
    /// The seed's PMI in per-seed mode, the average otherwise.
    pub avg_pmi_bits: f64,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerSeed,
    /// One row per sample; `y` is the strict majority over seeds, so an even
    /// split counts as inconsistent.
    #[default]
    Averaged,
}

/// PMI rows of one sample, collected from its sentences.
#[derive(Default)]
struct SamplePmi {
    by_seed: BTreeMap<u64, Vec<f64>>,
    avg: Vec<f64>,
    length: usize,
    sentences: HashSet<String>,
}

fn sample_key(sentence_id: &str) -> &str {
    match sentence_id.rsplit_once('#') {
        Some((base, k)) if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => sentence_id,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn build_dataset(
    predictions: &[PredictionRecord],
    pmi: &[PmiRecord],
    granularity: Granularity,
) -> Result<Vec<ConsistencyRecord>, ConsistencyError> {
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.sample_id.as_str()) {
            return Err(ConsistencyError::DuplicateSample(p.sample_id.clone()));
        }
    }
    let mut samples: HashMap<&str, SamplePmi> = HashMap::new();
    for r in pmi {
        let s = samples.entry(sample_key(&r.sentence_id)).or_default();
        if s.sentences.insert(r.sentence_id.clone()) {
            s.length += r.length;
        }
        match r.seed {
            PmiSeed::Seed(seed) => s.by_seed.entry(seed).or_default().push(r.pmi_bits),
            PmiSeed::Avg => s.avg.push(r.pmi_bits),
        }
    }
    let missing: Vec<String> =
        predictions.iter().filter(|p| !samples.contains_key(p.sample_id.as_str())).map(|p| p.sample_id.clone()).collect();
    if !missing.is_empty() {
        return Err(ConsistencyError::MissingJoin(missing));
    }

    let mut out = Vec::new();
    for p in predictions.iter().filter(|p| p.pred_original == p.gold) {
        let s = &samples[p.sample_id.as_str()];
        if p.preds_scrambled.is_empty() {
            return Err(ConsistencyError::NoScrambles(p.sample_id.clone()));
        }
        let row = |y: bool, pmi: f64| ConsistencyRecord {
            task: p.task.clone(),
            sample_id: p.sample_id.clone(),
            y: u8::from(y),
            avg_pmi_bits: pmi,
            length: s.length,
        };
        match granularity {
            Granularity::PerSeed => {
                for (&seed, label) in &p.preds_scrambled {
                    let vals = s
                        .by_seed
                        .get(&seed)
                        .ok_or_else(|| ConsistencyError::MissingSeed { sample: p.sample_id.clone(), seed })?;
                    out.push(row(*label == p.pred_original, mean(vals)));
                }
            }
            Granularity::Averaged => {
                let agree = p.preds_scrambled.values().filter(|l| **l == p.pred_original).count();
                let pmi = if !s.avg.is_empty() {
                    mean(&s.avg)
                } else {
                    let per_seed: Vec<f64> = s.by_seed.values().map(|v| mean(v)).collect();
                    mean(&per_seed)
                };
                out.push(row(2 * agree > p.preds_scrambled.len(), pmi));
            }
        }
    }
    Ok(out)
}

/// A stand-in classifier for end-to-end checks. Its original prediction is
/// correct with probability `accuracy`; on each scramble it keeps that
/// prediction with probability `logistic(intercept_k + slope_k * z)`, where
/// `z` is the sample's standardized average PMI and `k` its task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassifier {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// Per task: (intercept, slope).
    pub tasks: BTreeMap<String, (f64, f64)>,
    pub seed: u64,
}

/// A sample to simulate: its task, its id and the seeds it was scrambled with.
pub struct SampleSpec<'a> {
    pub task: &'a str,
    pub sample_id: &'a str,
    pub seeds: &'a [u64],
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SyntheticClassifier {
    pub fn simulate(&self, samples: &[SampleSpec], pmi: &[PmiRecord]) -> Result<Vec<PredictionRecord>, ConsistencyError> {
        if self.labels.len() < 2 {
            return Err(ConsistencyError::BadSimulation("need at least two labels".into()));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(ConsistencyError::BadSimulation("accuracy outside [0, 1]".into()));
        }
        let mut avg: HashMap<&str, Vec<f64>> = HashMap::new();
        for r in pmi.iter().filter(|r| r.seed == PmiSeed::Avg) {
            avg.entry(sample_key(&r.sentence_id)).or_default().push(r.pmi_bits);
        }
        let missing: Vec<String> =
            samples.iter().filter(|s| !avg.contains_key(s.sample_id)).map(|s| s.sample_id.to_string()).collect();
        if !missing.is_empty() {
            return Err(ConsistencyError::MissingJoin(missing));
        }
        let x: Vec<f64> = samples.iter().map(|s| mean(&avg[s.sample_id])).collect();
        let m = mean(&x);
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len().max(2) - 1) as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };

        let mut rng = SplitMix64::new(self.seed);
        let n_labels = self.labels.len() as u64;
        let other = |rng: &mut SplitMix64, label: usize| (label + 1 + rng.below(n_labels - 1) as usize) % n_labels as usize;
        let mut out = Vec::with_capacity(samples.len());
        for (s, xi) in samples.iter().zip(&x) {
            let &(a, b) = self
                .tasks
                .get(s.task)
                .ok_or_else(|| ConsistencyError::BadSimulation(format!("no coefficients for task `{}`", s.task)))?;
            let gold = rng.below(n_labels) as usize;
            let orig = if rng.next_f64() < self.accuracy { gold } else { other(&mut rng, gold) };
            let keep = logistic(a + b * (xi - m) / sd);
            let mut preds = BTreeMap::new();
            for &seed in s.seeds {
                let label = if rng.next_f64() < keep { orig } else { other(&mut rng, orig) };
                preds.insert(seed, self.labels[label].clone());
            }
            out.push(PredictionRecord {
                task: s.task.to_string(),
                sample_id: s.sample_id.to_string(),
                gold: self.labels[gold].clone(),
                pred_original: self.labels[orig].clone(),
                preds_scrambled: preds,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEEDS: [u64; 6] = [0, 1, 2, 3, 4, 5];

    fn pred(task: &str, id: &str, gold: &str, orig: &str, scr: &[&str]) -> PredictionRecord {
        PredictionRecord {
            task: task.into(),
            sample_id: id.into(),
            gold: gold.into(),
            pred_original: orig.into(),
            preds_scrambled: SEEDS.iter().zip(scr).map(|(&s, l)| (s, l.to_string())).collect(),
        }
    }

    fn pmi_rows(id: &str, vals: &[f64], length: usize) -> Vec<PmiRecord> {
        let mut v: Vec<PmiRecord> = vals
            .iter()
            .enumerate()
            .map(|(i, &p)| PmiRecord { sentence_id: id.into(), seed: PmiSeed::Seed(i as u64), pmi_bits: p, length })
            .collect();
        v.push(PmiRecord { sentence_id: id.into(), seed: PmiSeed::Avg, pmi_bits: mean(vals), length });
        v
    }

    #[test]
    fn filters_incorrect_originals_and_defines_y() {
        let preds = [
            pred("t", "ok", "x", "x", &["x"; 6]),
            pred("t", "wrong", "x", "y", &["y"; 6]),
            pred("t", "flips", "y", "y", &["x", "y", "x", "x", "y", "x"]),
        ];
        let pmi: Vec<PmiRecord> = ["ok", "wrong", "flips"].iter().flat_map(|id| pmi_rows(id, &[1.0; 6], 4)).collect();
        let rows = build_dataset(&preds, &pmi, Granularity::PerSeed).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.sample_id != "wrong"));
        assert!(rows.iter().filter(|r| r.sample_id == "ok").all(|r| r.y == 1));
        let flips: Vec<u8> = rows.iter().filter(|r| r.sample_id == "flips").map(|r| r.y).collect();
        assert_eq!(flips, [0, 1, 0, 0, 1, 0]);

        let avg = build_dataset(&preds, &pmi, Granularity::Averaged).unwrap();
        assert_eq!(avg.iter().map(|r| r.y).collect::<Vec<_>>(), [1, 0]);
    }

    #[test]
    fn even_split_is_inconsistent() {
        let preds = [pred("t", "s", "a", "a", &["a", "a", "a", "b", "b", "b"])];
        let rows = build_dataset(&preds, &pmi_rows("s", &[0.0; 6], 2), Granularity::Averaged).unwrap();
        assert_eq!(rows[0].y, 0);
    }

    #[test]
    fn per_seed_cardinality() {
        // 100 samples, 80 correct, 6 seeds.
        let mut preds = Vec::new();
        let mut pmi = Vec::new();
        for i in 0..100 {
            let id = format!("s{i}");
            let orig = if i % 5 == 0 { "n" } else { "p" };
            preds.push(pred(if i % 2 == 0 { "even" } else { "odd" }, &id, "p", orig, &["p"; 6]));
            pmi.extend(pmi_rows(&id, &[0.5; 6], 3));
        }
        let rows = build_dataset(&preds, &pmi, Granularity::PerSeed).unwrap();
        assert_eq!(rows.len(), 480);
        assert_eq!(rows.iter().filter(|r| r.task == "even").count(), 40 * 6);
        assert!(rows.iter().all(|r| r.y <= 1));
    }

    #[test]
    fn pair_samples_average_their_sentences() {
        let preds = [pred("rte", "p1", "e", "e", &["e"; 6])];
        let mut pmi = pmi_rows("p1#0", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 5);
        pmi.extend(pmi_rows("p1#1", &[3.0; 6], 7));
        let rows = build_dataset(&preds, &pmi, Granularity::PerSeed).unwrap();
        assert_eq!(rows[0].avg_pmi_bits, 2.0);
        assert_eq!(rows[5].avg_pmi_bits, 4.5);
        assert_eq!(rows[0].length, 12);
        let avg = build_dataset(&preds, &pmi, Granularity::Averaged).unwrap();
        assert_eq!(avg[0].avg_pmi_bits, 3.25);
    }

    #[test]
    fn join_errors() {
        let preds = [pred("t", "a", "x", "x", &["x"; 6]), pred("t", "b", "x", "y", &["x"; 6])];
        assert_eq!(
            build_dataset(&preds, &pmi_rows("a", &[0.0; 6], 1), Granularity::Averaged),
            Err(ConsistencyError::MissingJoin(vec!["b".into()]))
        );
        let pmi: Vec<PmiRecord> = pmi_rows("a", &[0.0; 3], 1).into_iter().chain(pmi_rows("b", &[0.0; 6], 1)).collect();
        assert_eq!(
            build_dataset(&preds, &pmi, Granularity::PerSeed),
            Err(ConsistencyError::MissingSeed { sample: "a".into(), seed: 3 })
        );
        let dup = [preds[0].clone(), preds[0].clone()];
        assert_eq!(build_dataset(&dup, &pmi, Granularity::PerSeed), Err(ConsistencyError::DuplicateSample("a".into())));
    }

    #[test]
    fn prediction_lines_use_string_seed_keys() {
        let line = r#"{"task":"sst2","sample_id":"7","gold":"pos","pred_original":"pos","preds_scrambled":{"0":"pos","5":"neg"}}"#;
        let p: PredictionRecord = serde_json::from_str(line).unwrap();
        assert_eq!(p.preds_scrambled[&5], "neg");
        assert_eq!(serde_json::to_string(&p).unwrap(), line);
    }

    #[test]
    fn synthetic_classifier_tracks_pmi() {
        let n = 3000;
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let pmi: Vec<PmiRecord> =
            ids.iter().enumerate().flat_map(|(i, id)| pmi_rows(id, &[(i % 100) as f64; 6], 5)).collect();
        let samples: Vec<SampleSpec> = ids.iter().map(|id| SampleSpec { task: "t", sample_id: id, seeds: &SEEDS }).collect();
        let clf = SyntheticClassifier {
            labels: vec!["a".into(), "b".into(), "c".into()],
            accuracy: 0.8,
            tasks: BTreeMap::from([("t".to_string(), (0.0, 2.0))]),
            seed: 4,
        };
        let preds = clf.simulate(&samples, &pmi).unwrap();
        assert_eq!(preds, clf.simulate(&samples, &pmi).unwrap());
        let correct = preds.iter().filter(|p| p.gold == p.pred_original).count() as f64 / n as f64;
        assert!((correct - 0.8).abs() < 0.03, "{correct}");
        let rows = build_dataset(&preds, &pmi, Granularity::PerSeed).unwrap();
        let rate = |lo: f64, hi: f64| {
            let sel: Vec<&ConsistencyRecord> = rows.iter().filter(|r| r.avg_pmi_bits >= lo && r.avg_pmi_bits < hi).collect();
            sel.iter().map(|r| r.y as f64).sum::<f64>() / sel.len() as f64
        };
        assert!(rate(0.0, 20.0) < 0.2 && rate(80.0, 100.0) > 0.8);
        assert!(clf.simulate(&[SampleSpec { task: "u", sample_id: "s0", seeds: &SEEDS }], &pmi).is_err());
    }
}
