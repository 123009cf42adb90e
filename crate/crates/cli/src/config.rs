//! The run configuration: one TOML document with a section per stage.
//! Every field has a default, relative paths are taken from the config
//! file's directory, and command-line flags are applied last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use orderinfo::consistency::Granularity;
use orderinfo::reorder::{DEFAULT_BEAM_WIDTH, DEFAULT_TEMPERATURE_BOUNDS};
use orderinfo::regression::{SdConvention, DEFAULT_ROPE};
use orderinfo::scorer::ScorerConfig;
use orderinfo::textdata::Split;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_ENV: &str = "ORDERINFO_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub scramble: ScrambleConfig,
    pub lm: LmConfig,
    pub reorder: ReorderConfig,
    pub probe: ProbeConfig,
    pub cfg: CfgConfig,
    pub simulation: SimulationConfig,
    pub consistency: ConsistencyConfig,
    pub regression: RegressionConfig,
    pub scorer: Option<ScorerConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2023,
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            scramble: ScrambleConfig::default(),
            lm: LmConfig::default(),
            reorder: ReorderConfig::default(),
            probe: ProbeConfig::default(),
            cfg: CfgConfig::default(),
            simulation: SimulationConfig::default(),
            consistency: ConsistencyConfig::default(),
            regression: RegressionConfig::default(),
            scorer: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Corpus files read by `pipeline`.
    pub corpus: Vec<PathBuf>,
    /// Where `pipeline` writes its outputs.
    pub out_dir: Option<PathBuf>,
    /// Grammar files; the shipped grammars when absent.
    pub grammar_a: Option<PathBuf>,
    pub grammar_b: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub lowercase: bool,
    pub max_length: Option<usize>,
    /// Replace every task label with one of this many hashed buckets.
    pub pseudo_tasks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScrambleConfig {
    pub k: usize,
    /// Scramble seeds are `first_seed .. first_seed + k`.
    pub first_seed: u64,
}

impl Default for ScrambleConfig {
    fn default() -> Self {
        Self { k: 6, first_seed: 0 }
    }
}

impl ScrambleConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.k as u64).map(|i| self.first_seed + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub unk_threshold: u64,
    pub split: Split,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            order: orderinfo::ngram::DEFAULT_ORDER,
            unk_threshold: orderinfo::ngram::DEFAULT_UNK_THRESHOLD,
            split: Split::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReorderConfig {
    pub beam: usize,
    pub temperature_bounds: (f64, f64),
    /// Sentences the temperature is fitted on.
    pub fit_split: Split,
}

impl Default for ReorderConfig {
    fn default() -> Self {
        Self { beam: DEFAULT_BEAM_WIDTH, temperature_bounds: DEFAULT_TEMPERATURE_BOUNDS, fit_split: Split::Val }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Sentences that are scrambled, scored and probed by `pipeline`.
    pub split: Split,
    pub histogram_bins: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { split: Split::Probe, histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfgConfig {
    pub n_eval: usize,
    pub n_train: usize,
    pub n_fit: usize,
}

impl Default for CfgConfig {
    fn default() -> Self {
        Self { n_eval: 1000, n_train: 20_000, n_fit: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// Coefficients for tasks not listed in `tasks`.
    pub intercept: f64,
    pub slope: f64,
    /// Per-task `[intercept, slope]`.
    pub tasks: BTreeMap<String, (f64, f64)>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            labels: vec!["entailed".into(), "not_entailed".into()],
            accuracy: 0.9,
            intercept: 0.5,
            slope: 1.5,
            tasks: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub include_length: bool,
    pub random_intercepts: bool,
    pub random_slopes: bool,
    pub sd_convention: SdConvention,
    pub rope: (f64, f64),
    /// Also fit the model without length and compare the two.
    pub compare: bool,
    /// Every n-th row is held out for the predictive comparison.
    pub holdout_every: usize,
    pub curve_points: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            include_length: true,
            random_intercepts: true,
            random_slopes: true,
            sd_convention: SdConvention::Sample,
            rope: DEFAULT_ROPE,
            compare: true,
            holdout_every: 5,
            curve_points: 25,
        }
    }
}

/// Values given on the command line for every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k_scrambles: Option<usize>,
    pub beam: Option<usize>,
    pub order: Option<usize>,
    pub chains: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Reads `path` when given, the defaults otherwise.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.in_file(path))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.paths.corpus.iter_mut().for_each(fix);
        self.paths.out_dir.iter_mut().for_each(fix);
        self.paths.grammar_a.iter_mut().for_each(fix);
        self.paths.grammar_b.iter_mut().for_each(fix);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.k_scrambles {
            self.scramble.k = v;
        }
        if let Some(v) = o.beam {
            self.reorder.beam = v;
        }
        if let Some(v) = o.order {
            self.lm.order = v;
        }
        if let Some(v) = o.chains {
            self.regression.chains = v;
        }
    }

    /// Checks that do not depend on any input file.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::usage(format!("config: {m}")));
        if self.scramble.k == 0 {
            return bad("scramble.k must be at least 1");
        }
        if self.reorder.beam == 0 {
            return bad("reorder.beam must be at least 1");
        }
        if !(1..=orderinfo::ngram::MAX_ORDER).contains(&self.lm.order) {
            return bad(&format!("lm.order must be in 1..={}", orderinfo::ngram::MAX_ORDER));
        }
        if self.regression.chains < orderinfo::regression::MIN_CHAINS {
            return bad(&format!("regression.chains must be at least {}", orderinfo::regression::MIN_CHAINS));
        }
        if self.data.pseudo_tasks == Some(0) {
            return bad("data.pseudo_tasks must be at least 1");
        }
        if self.regression.holdout_every < 2 {
            return bad("regression.holdout_every must be at least 2");
        }
        if self.regression.curve_points < 2 {
            return bad("regression.curve_points must be at least 2");
        }
        if !(self.regression.rope.0 < self.regression.rope.1) {
            return bad("regression.rope bounds must be increasing");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_defaults() {
        assert_eq!(RunConfig::from_toml("", Path::new(".")).unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_relative_paths() {
        let text = r#"
            seed = 7
            [paths]
            corpus = ["data/a.tsv", "/abs/b.tsv"]
            [scramble]
            k = 3
            [regression]
            chains = 6
            sd_convention = "population"
            [consistency]
            granularity = "per_seed"
            [scorer]
            tcp = "127.0.0.1:9000"
            ops = ["logp_sentence"]
        "#;
        let c = RunConfig::from_toml(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.paths.corpus, vec![PathBuf::from("/cfg/data/a.tsv"), PathBuf::from("/abs/b.tsv")]);
        assert_eq!(c.scramble.seeds(), vec![0, 1, 2]);
        assert_eq!(c.regression.chains, 6);
        assert_eq!(c.regression.sd_convention, SdConvention::Population);
        assert_eq!(c.consistency.granularity, Granularity::PerSeed);
        assert_eq!(c.scorer.unwrap().tcp.as_deref(), Some("127.0.0.1:9000"));
        assert_eq!(c.lm.order, 3);
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::from_toml("seed = 1\n[scramble]\nk = 2\n", Path::new(".")).unwrap();
        c.apply(&Overrides { seed: Some(9), k_scrambles: Some(6), chains: Some(5), ..Default::default() });
        assert_eq!((c.seed, c.scramble.k, c.regression.chains), (9, 6, 5));
        assert_eq!(c.reorder.beam, DEFAULT_BEAM_WIDTH);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        assert!(RunConfig::from_toml("[lm]\nordr = 3\n", Path::new(".")).is_err());
        let mut c = RunConfig::default();
        c.regression.chains = 2;
        assert!(c.validate().is_err());
        c.regression.chains = 4;
        c.scramble.k = 0;
        assert!(c.validate().is_err());
    }
}
