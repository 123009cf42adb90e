//! `simulate-predictions`, `build-consistency`, `simulate-consistency` and
//! `regress`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use clap::Args;
use orderinfo::consistency::{build_dataset, ConsistencyRecord, Granularity, PredictionRecord, SampleSpec, SyntheticClassifier};
use orderinfo::infometrics::{PmiRecord, PmiSeed};
use orderinfo::regression::{
    compare, fit, holdout_comparison, rope, simulate_curves, simulate_dataset, standardize, summarize, DesignMatrix,
    FitConfig, HoldoutComparison, MixedModelSpec, ModelComparison, PosteriorDraws, RegressionError, SimConfig, Summary,
};
use orderinfo::textdata::{ReadOptions, SentenceRecord, Split};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct SimulatePredictionsArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub pmi: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only simulate sentences of this split.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct BuildConsistencyArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub pmi: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
}

#[derive(Debug, Args)]
pub struct SimulateConsistencyArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generating values as CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub tasks: usize,
    #[arg(long, default_value_t = 1.87, allow_negative_numbers = true)]
    pub beta_pmi: f64,
    #[arg(long, default_value_t = -0.3, allow_negative_numbers = true)]
    pub beta_len: f64,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub consistency: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Skip the comparison against the model without length.
    #[arg(long)]
    pub no_compare: bool,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
}

fn parse_granularity(s: &str) -> std::result::Result<Granularity, String> {
    match s {
        "per_seed" | "per-seed" => Ok(Granularity::PerSeed),
        "averaged" => Ok(Granularity::Averaged),
        other => Err(format!("expected `per-seed` or `averaged`, got `{other}`")),
    }
}

pub fn simulate_predictions_for(
    cfg: &RunConfig,
    corpus: &[SentenceRecord],
    pmi: &[PmiRecord],
    split: Option<Split>,
) -> Result<Vec<PredictionRecord>> {
    let mut seeds: HashMap<&str, BTreeSet<u64>> = HashMap::new();
    for r in pmi {
        if let PmiSeed::Seed(s) = r.seed {
            seeds.entry(r.sentence_id.as_str()).or_default().insert(s);
        }
    }
    let seed_lists: Vec<(&SentenceRecord, Vec<u64>)> = corpus
        .iter()
        .filter(|r| split.map_or(true, |s| r.split == s))
        .filter_map(|r| seeds.get(r.id.as_str()).map(|s| (r, s.iter().copied().collect())))
        .collect();
    if seed_lists.is_empty() {
        return Err(CliError::data("no sentence has PMI records"));
    }
    let samples: Vec<SampleSpec> =
        seed_lists.iter().map(|(r, s)| SampleSpec { task: &r.task, sample_id: &r.id, seeds: s }).collect();
    let sim = &cfg.simulation;
    let mut tasks: BTreeMap<String, (f64, f64)> =
        seed_lists.iter().map(|(r, _)| (r.task.clone(), (sim.intercept, sim.slope))).collect();
    tasks.extend(sim.tasks.iter().map(|(k, v)| (k.clone(), *v)));
    let classifier = SyntheticClassifier { labels: sim.labels.clone(), accuracy: sim.accuracy, tasks, seed: cfg.seed };
    Ok(classifier.simulate(&samples, pmi)?)
}

pub fn simulate_predictions(cfg: &RunConfig, args: &SimulatePredictionsArgs) -> Result<Value> {
    cfg.validate()?;
    files::require_file(&args.sentences)?;
    files::require_file(&args.pmi)?;
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let pmi = files::read_pmi(&args.pmi)?;
    let preds = simulate_predictions_for(cfg, &corpus, &pmi, args.split)?;
    files::write_jsonl(&args.out, &preds)?;
    Ok(json!({ "samples": preds.len() }))
}

pub fn build_consistency(cfg: &RunConfig, args: &BuildConsistencyArgs) -> Result<Value> {
    cfg.validate()?;
    files::require_file(&args.predictions)?;
    files::require_file(&args.pmi)?;
    let preds: Vec<PredictionRecord> = files::read_jsonl(&args.predictions)?;
    let pmi = files::read_pmi(&args.pmi)?;
    let rows = build_dataset(&preds, &pmi, args.granularity.unwrap_or(cfg.consistency.granularity))?;
    files::write_csv(&args.out, &rows)?;
    let consistent = rows.iter().filter(|r| r.y == 1).count();
    Ok(json!({ "rows": rows.len(), "consistent": consistent }))
}

pub fn simulate_consistency(cfg: &RunConfig, args: &SimulateConsistencyArgs) -> Result<Value> {
    let sim = SimConfig {
        n_rows: args.rows,
        n_tasks: args.tasks,
        beta_pmi: args.beta_pmi,
        beta_len: args.beta_len,
        convention: cfg.regression.sd_convention,
        seed: cfg.seed,
        ..Default::default()
    };
    let (rows, truth) = simulate_dataset(&sim)?;
    files::write_csv(&args.out, &rows)?;
    if let Some(p) = &args.truth {
        let table: Vec<Vec<String>> = truth.values.iter().map(|(n, v)| vec![n.clone(), v.to_string()]).collect();
        files::write_table(p, &["parameter", "value"], &table)?;
    }
    Ok(json!({ "rows": rows.len() }))
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    parameter: &'a str,
    mean: f64,
    se: f64,
    ci_low: f64,
    ci_high: f64,
    rhat: f64,
    ess_bulk: f64,
    ess_tail: f64,
}

#[derive(Debug, Serialize)]
struct RopeRow<'a> {
    parameter: &'a str,
    rope_low: f64,
    rope_high: f64,
    mass_outside: f64,
    mass_positive: f64,
    effective: bool,
}

fn write_summary(path: &Path, summary: &[Summary]) -> Result<()> {
    let rows: Vec<SummaryRow> = summary
        .iter()
        .map(|s| SummaryRow {
            parameter: &s.name,
            mean: s.mean,
            se: s.se,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            rhat: s.rhat,
            ess_bulk: s.ess_bulk,
            ess_tail: s.ess_tail,
        })
        .collect();
    files::write_csv(path, &rows)
}

pub fn model_spec(cfg: &RunConfig) -> MixedModelSpec {
    MixedModelSpec {
        include_length: cfg.regression.include_length,
        random_intercepts: cfg.regression.random_intercepts,
        random_slopes: cfg.regression.random_slopes,
        ..Default::default()
    }
}

pub fn fit_config(cfg: &RunConfig) -> FitConfig {
    FitConfig {
        chains: cfg.regression.chains,
        warmup: cfg.regression.warmup,
        draws: cfg.regression.draws,
        seed: cfg.seed,
        ..Default::default()
    }
}

/// A gated fit. On a gate failure the summary of the failed fit is still
/// written to `failed_summary` so the diagnostics can be inspected.
fn gated_fit(design: &DesignMatrix, spec: &MixedModelSpec, fc: &FitConfig, failed_summary: &Path) -> Result<PosteriorDraws> {
    match fit(design, spec, fc) {
        Ok(d) => Ok(d),
        Err(RegressionError::NotConverged { draws, offenders }) => {
            write_summary(failed_summary, &summarize(&draws))?;
            Err(RegressionError::NotConverged { draws, offenders }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Serialize)]
struct RegressionReport<'a> {
    n_rows: usize,
    tasks: &'a [String],
    standardization: Value,
    spec: &'a MixedModelSpec,
    fit: &'a FitConfig,
    comparison: Option<ModelComparison>,
    holdout: Option<HoldoutComparison>,
}

/// Fits the model and writes `fit_summary.csv`, `rope.csv`, `curves.csv`
/// and `regression.json` into `out_dir`.
pub fn run_regression(cfg: &RunConfig, rows: &[ConsistencyRecord], out_dir: &Path, with_compare: bool) -> Result<Value> {
    let design = standardize(rows, cfg.regression.sd_convention)?;
    let spec = model_spec(cfg);
    let fc = fit_config(cfg);
    let summary_path = out_dir.join("fit_summary.csv");
    let draws = gated_fit(&design, &spec, &fc, &summary_path)?;

    let (mut comparison, mut holdout) = (None, None);
    if with_compare && spec.include_length {
        let reduced = MixedModelSpec { include_length: false, ..spec.clone() };
        let scratch = out_dir.join("fit_summary_without_length.csv");
        let without = gated_fit(&design, &reduced, &fc, &scratch)?;
        comparison = Some(compare(&design, &draws, &without)?);
        let every = cfg.regression.holdout_every;
        let train = design.subset(|i| i % every != 0);
        let test = design.subset(|i| i % every == 0);
        let with_t = gated_fit(&train, &spec, &fc, &out_dir.join("fit_summary_holdout.csv"))?;
        let without_t = gated_fit(&train, &reduced, &fc, &out_dir.join("fit_summary_holdout_without_length.csv"))?;
        holdout = Some(holdout_comparison(&test, &with_t, &without_t)?);
    }

    let summary = summarize(&draws);
    let fixed: Vec<&str> = draws.names.iter().take(spec.n_fixed()).map(String::as_str).collect();
    let ropes = fixed.iter().map(|n| rope(&draws, n, cfg.regression.rope)).collect::<Result<Vec<_>, _>>()?;
    let rope_rows: Vec<RopeRow> = ropes
        .iter()
        .map(|r| RopeRow {
            parameter: &r.name,
            rope_low: r.rope_low,
            rope_high: r.rope_high,
            mass_outside: r.mass_outside,
            mass_positive: r.mass_positive,
            effective: r.effective,
        })
        .collect();
    let curves = simulate_curves(&draws, &design, cfg.regression.curve_points);
    let report = RegressionReport {
        n_rows: design.len(),
        tasks: &design.tasks,
        standardization: json!({
            "convention": cfg.regression.sd_convention,
            "pmi_mean": design.pmi_mean,
            "pmi_sd": design.pmi_sd,
            "len_mean": design.len_mean,
            "len_sd": design.len_sd,
        }),
        spec: &spec,
        fit: &fc,
        comparison,
        holdout,
    };

    write_summary(&summary_path, &summary)?;
    files::write_csv(&out_dir.join("rope.csv"), &rope_rows)?;
    files::write_csv(&out_dir.join("curves.csv"), &curves)?;
    files::write_json(&out_dir.join("regression.json"), &report)?;

    let beta = summary.iter().find(|s| s.name == "beta_pmi").expect("beta_pmi is always fitted");
    let beta_rope = ropes.iter().find(|r| r.name == "beta_pmi").expect("beta_pmi is always fitted");
    Ok(json!({
        "rows": design.len(),
        "beta_pmi": { "mean": beta.mean, "ci_low": beta.ci_low, "ci_high": beta.ci_high,
                      "mass_positive": beta_rope.mass_positive, "effective": beta_rope.effective },
        "max_rhat": summary.iter().map(|s| s.rhat).fold(f64::NEG_INFINITY, f64::max),
        "log_bf_length": report.comparison.as_ref().map(|c| c.log_bf),
    }))
}

pub fn regress(cfg: &RunConfig, args: &RegressArgs) -> Result<Value> {
    let mut cfg = cfg.clone();
    cfg.regression.warmup = args.warmup.unwrap_or(cfg.regression.warmup);
    cfg.regression.draws = args.draws.unwrap_or(cfg.regression.draws);
    cfg.validate()?;
    let rows: Vec<ConsistencyRecord> = files::read_csv(&args.consistency)?;
    if rows.is_empty() {
        return Err(CliError::data("consistency file has no rows").in_file(&args.consistency));
    }
    run_regression(&cfg, &rows, &args.out_dir, cfg.regression.compare && !args.no_compare)
}
