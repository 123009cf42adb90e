//! `report`: plot-ready tables and one JSON overview.
//!
//! * `pmi_boxplot.csv`: five-number summary and Tukey whiskers of the
//!   per-sentence average PMI, one row per task.
//! * `pa_ca_histogram.csv`: probe and control accuracy counts on shared
//!   bins over `[0, 1]`.
//! * `fitted_curves.csv`: the regression's per-task consistency curves.
//! * `report.json`: MI bounds, probe means, the length correlation and the
//!   fixed-effect summaries.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::Args;
use orderinfo::infometrics::{length_pmi_correlation, unit_histogram, PmiRecord, PmiSeed, ProbeScores};
use orderinfo::regression::{quantile_sorted, CurvePoint};
use orderinfo::textdata::{ReadOptions, SentenceRecord};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::metrics::{mi_table, probe_summary};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub pmi: PathBuf,
    /// Probe scores from `probe`.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Output directory of `regress`.
    #[arg(long)]
    pub regression: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotRow {
    pub task: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
    pub n_outliers: usize,
}

pub fn boxplot_row(task: &str, values: &[f64]) -> BoxplotRow {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75));
    let (fence_lo, fence_hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
    let inside: Vec<f64> = v.iter().copied().filter(|x| (fence_lo..=fence_hi).contains(x)).collect();
    BoxplotRow {
        task: task.to_string(),
        n: v.len(),
        min: v[0],
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        n_outliers: v.len() - inside.len(),
    }
}

pub fn pmi_boxplots(records: &[PmiRecord], corpus: &[SentenceRecord]) -> Result<Vec<BoxplotRow>> {
    let task_of: HashMap<&str, &str> = corpus.iter().map(|r| (r.id.as_str(), r.task.as_str())).collect();
    let mut by_task: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.seed == PmiSeed::Avg) {
        let task = task_of
            .get(r.sentence_id.as_str())
            .ok_or_else(|| CliError::data(format!("PMI record for unknown sentence `{}`", r.sentence_id)))?;
        by_task.entry(task).or_default().push(r.pmi_bits);
    }
    if by_task.is_empty() {
        return Err(CliError::data("PMI file has no per-sentence average rows"));
    }
    Ok(by_task.iter().map(|(t, v)| boxplot_row(t, v)).collect())
}

pub fn pa_ca_histogram(scores: &[ProbeScores], bins: usize) -> Vec<Vec<String>> {
    let pa = unit_histogram(&scores.iter().map(|s| s.pa).collect::<Vec<_>>(), bins);
    let ca = unit_histogram(&scores.iter().map(|s| s.ca).collect::<Vec<_>>(), bins);
    pa.iter()
        .zip(&ca)
        .map(|(p, c)| vec![p.lo.to_string(), p.hi.to_string(), p.count.to_string(), c.count.to_string()])
        .collect()
}

#[derive(Debug, Deserialize)]
struct FixedSummary {
    parameter: String,
    mean: f64,
    se: f64,
    ci_low: f64,
    ci_high: f64,
    rhat: f64,
}

#[derive(Debug, Deserialize)]
struct RopeSummary {
    parameter: String,
    mass_outside: f64,
    mass_positive: f64,
    effective: bool,
}

pub struct ReportInputs<'a> {
    pub corpus: &'a [SentenceRecord],
    pub pmi: &'a [PmiRecord],
    pub probe: Option<&'a [ProbeScores]>,
    pub regression_dir: Option<&'a Path>,
}

pub fn write_report(cfg: &RunConfig, inputs: &ReportInputs, out_dir: &Path) -> Result<Value> {
    let boxes = pmi_boxplots(inputs.pmi, inputs.corpus)?;
    let mi = mi_table(inputs.pmi, Some(inputs.corpus))?;
    let corr = length_pmi_correlation(inputs.pmi).ok();
    let hist = inputs.probe.map(|p| pa_ca_histogram(p, cfg.probe.histogram_bins));
    let mut regression = Value::Null;
    let mut curves: Option<Vec<CurvePoint>> = None;
    if let Some(dir) = inputs.regression_dir {
        files::require_dir(dir)?;
        let summary: Vec<FixedSummary> = files::read_csv(&dir.join("fit_summary.csv"))?;
        let ropes: Vec<RopeSummary> = files::read_csv(&dir.join("rope.csv"))?;
        curves = Some(files::read_csv(&dir.join("curves.csv"))?);
        let fixed: Vec<Value> = ropes
            .iter()
            .filter_map(|r| {
                let s = summary.iter().find(|s| s.parameter == r.parameter)?;
                Some(json!({
                    "parameter": r.parameter, "mean": s.mean, "se": s.se, "ci_low": s.ci_low, "ci_high": s.ci_high,
                    "rhat": s.rhat, "mass_outside_rope": r.mass_outside, "mass_positive": r.mass_positive,
                    "effective": r.effective,
                }))
            })
            .collect();
        regression = json!({ "fixed_effects": fixed });
    }

    let overview = json!({
        "mi": mi,
        "length_pmi_correlation": corr,
        "probe": inputs.probe.map(probe_summary),
        "regression": regression,
    });
    files::write_csv(&out_dir.join("pmi_boxplot.csv"), &boxes)?;
    if let Some(h) = &hist {
        files::write_table(&out_dir.join("pa_ca_histogram.csv"), &["bin_low", "bin_high", "pa_count", "ca_count"], h)?;
    }
    if let Some(c) = &curves {
        files::write_csv(&out_dir.join("fitted_curves.csv"), c)?;
    }
    files::write_json(&out_dir.join("report.json"), &overview)?;
    Ok(overview)
}

pub fn report(cfg: &RunConfig, args: &ReportArgs) -> Result<Value> {
    cfg.validate()?;
    files::require_file(&args.sentences)?;
    files::require_file(&args.pmi)?;
    if let Some(p) = &args.probe {
        files::require_file(p)?;
    }
    if let Some(d) = &args.regression {
        files::require_dir(d)?;
    }
    let corpus = files::read_sentences(&args.sentences, ReadOptions::default())?;
    let pmi = files::read_pmi(&args.pmi)?;
    let probe: Option<Vec<ProbeScores>> = args.probe.as_deref().map(files::read_csv).transpose()?;
    let inputs =
        ReportInputs { corpus: &corpus, pmi: &pmi, probe: probe.as_deref(), regression_dir: args.regression.as_deref() };
    write_report(cfg, &inputs, &args.out_dir)
}
