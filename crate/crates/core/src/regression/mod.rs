//! Bayesian mixed-effects logistic regression of prediction consistency on
//! PMI and sentence length.
//!
//! ```text
//! logit P(y_i = 1) = b0 + b_pmi x_i + b_len l_i + r_k + s_k x_i      k = task(i)
//! b ~ N(0, 2.5^2)    r_k ~ N(0, sigma_r^2)    s_k ~ N(0, sigma_s^2)
//! sigma_r, sigma_s ~ half-N(0, 1)
//! ```
//!
//! `x` and `l` are standardized, so every coefficient is on the scale the
//! ROPE is defined on. Intercept and slope effects have independent
//! scales; a correlated structure is not implemented.

mod diagnostics;
mod report;
mod sampler;
mod simulate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::ConsistencyRecord;
use crate::rng::fnv1a64;

pub use diagnostics::{ess_bulk, ess_tail, split_rhat, ParamDiagnostics};
pub use report::{quantile_sorted, 
    compare, holdout_comparison, predict, rope, simulate_curves, summarize, CurvePoint, HoldoutComparison,
    ModelComparison, Prediction, RopeReport, Summary, DEFAULT_ROPE,
};
pub use sampler::{fit, sample, sample_prior, FitConfig, PosteriorDraws};
pub use simulate::{simulate_dataset, task_name, SimConfig, SimTruth};

pub const RHAT_MAX: f64 = 1.05;
pub const ESS_MIN: f64 = 200.0;
pub const MIN_CHAINS: usize = 4;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("column `{0}` has zero variance (fewer than two distinct values)")]
    ZeroVariance(&'static str),
    #[error("no rows")]
    Empty,
    #[error("task `{0}` has no rows")]
    EmptyTask(String),
    #[error("need at least 4 chains, got {0}")]
    TooFewChains(usize),
    #[error("need at least 4 post-warmup iterations, got {0}")]
    TooFewIterations(usize),
    #[error("prior scales must be finite and positive")]
    BadPrior,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("fits were made on different rows than the design")]
    RowMismatch,
    #[error("sampler did not converge: {}", summarize_offenders(.offenders))]
    NotConverged { draws: Box<PosteriorDraws>, offenders: Vec<ParamDiagnostics> },
}

fn summarize_offenders(off: &[ParamDiagnostics]) -> String {
    off.iter()
        .map(|d| format!("{} (R-hat {:.3}, bulk ESS {:.0}, tail ESS {:.0})", d.name, d.rhat, d.ess_bulk, d.ess_tail))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Denominator for the standard deviation used to standardize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdConvention {
    /// `n - 1`
    #[default]
    Sample,
    /// `n`
    Population,
}

/// Standardized column and the constants that produced it.
pub fn standardize_column(
    values: &[f64],
    convention: SdConvention,
    name: &'static str,
) -> Result<(Vec<f64>, f64, f64), RegressionError> {
    let n = values.len();
    if n < 2 {
        return Err(RegressionError::ZeroVariance(name));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match convention {
        SdConvention::Sample => (n - 1) as f64,
        SdConvention::Population => n as f64,
    };
    let sd = (ss / denom).sqrt();
    if !(sd > 0.0) || values.iter().all(|&v| v == values[0]) {
        return Err(RegressionError::ZeroVariance(name));
    }
    Ok((values.iter().map(|v| (v - mean) / sd).collect(), mean, sd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub x_pmi: Vec<f64>,
    pub x_len: Vec<f64>,
    pub task: Vec<usize>,
    pub y: Vec<u8>,
    /// Task names, indexed by `task`.
    pub tasks: Vec<String>,
    pub pmi_mean: f64,
    pub pmi_sd: f64,
    pub len_mean: f64,
    pub len_sd: f64,
    /// Raw PMI per row, kept so curves can be drawn on the observed range.
    pub pmi_raw: Vec<f64>,
    pub len_raw: Vec<f64>,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Fingerprint of the rows, used to check that fits belong to this design.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.len() * 25);
        for i in 0..self.len() {
            bytes.extend_from_slice(&self.x_pmi[i].to_le_bytes());
            bytes.extend_from_slice(&self.x_len[i].to_le_bytes());
            bytes.extend_from_slice(&(self.task[i] as u64).to_le_bytes());
            bytes.push(self.y[i]);
        }
        fnv1a64(&bytes)
    }

    /// The rows selected by `keep`, with the standardization constants and
    /// task list left as they are.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            x_pmi: pick(&self.x_pmi),
            x_len: pick(&self.x_len),
            task: idx.iter().map(|&i| self.task[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            tasks: self.tasks.clone(),
            pmi_raw: pick(&self.pmi_raw),
            len_raw: pick(&self.len_raw),
            ..*self
        }
    }
}

/// Z-scores PMI and length; tasks are numbered in sorted name order.
pub fn standardize(records: &[ConsistencyRecord], convention: SdConvention) -> Result<DesignMatrix, RegressionError> {
    if records.is_empty() {
        return Err(RegressionError::Empty);
    }
    let pmi_raw: Vec<f64> = records.iter().map(|r| r.avg_pmi_bits).collect();
    let len_raw: Vec<f64> = records.iter().map(|r| r.length as f64).collect();
    let (x_pmi, pmi_mean, pmi_sd) = standardize_column(&pmi_raw, convention, "avg_pmi_bits")?;
    let (x_len, len_mean, len_sd) = standardize_column(&len_raw, convention, "length")?;
    let names: BTreeMap<&str, usize> = records.iter().map(|r| (r.task.as_str(), 0)).collect();
    let tasks: Vec<String> = names.keys().map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, usize> = tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    Ok(DesignMatrix {
        x_pmi,
        x_len,
        task: records.iter().map(|r| index[r.task.as_str()]).collect(),
        y: records.iter().map(|r| r.y.min(1)).collect(),
        tasks,
        pmi_mean,
        pmi_sd,
        len_mean,
        len_sd,
        pmi_raw,
        len_raw,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelSpec {
    pub include_length: bool,
    pub random_intercepts: bool,
    pub random_slopes: bool,
    /// SD of the normal prior on fixed effects.
    pub fixed_prior_sd: f64,
    /// SD of the half-normal prior on the random-effect scales.
    pub scale_prior_sd: f64,
}

impl Default for MixedModelSpec {
    fn default() -> Self {
        Self { include_length: true, random_intercepts: true, random_slopes: true, fixed_prior_sd: 2.5, scale_prior_sd: 1.0 }
    }
}

impl MixedModelSpec {
    fn validate(&self) -> Result<(), RegressionError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.fixed_prior_sd) && ok(self.scale_prior_sd) {
            Ok(())
        } else {
            Err(RegressionError::BadPrior)
        }
    }

    /// Number of fixed effects.
    pub fn n_fixed(&self) -> usize {
        2 + usize::from(self.include_length)
    }

    /// Parameter names in draw order: fixed effects, random intercepts,
    /// random slopes, then the scales.
    pub fn parameter_names(&self, tasks: &[String]) -> Vec<String> {
        let mut names = vec!["intercept".to_string(), "beta_pmi".to_string()];
        if self.include_length {
            names.push("beta_len".into());
        }
        if self.random_intercepts {
            names.extend(tasks.iter().map(|t| format!("r[{t}]")));
        }
        if self.random_slopes {
            names.extend(tasks.iter().map(|t| format!("s[{t}]")));
        }
        if self.random_intercepts {
            names.push("sigma_r".into());
        }
        if self.random_slopes {
            names.push("sigma_s".into());
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(task: &str, y: u8, pmi: f64, length: usize) -> ConsistencyRecord {
        ConsistencyRecord { task: task.into(), sample_id: String::new(), y, avg_pmi_bits: pmi, length }
    }

    #[test]
    fn standardizes_columns() {
        let (z, m, sd) = standardize_column(&[0.0, 2.0], SdConvention::Population, "x").unwrap();
        assert_eq!((z, m, sd), (vec![-1.0, 1.0], 1.0, 1.0));
        let (z, _, _) = standardize_column(&[0.0, 2.0], SdConvention::Sample, "x").unwrap();
        assert!((z[0] + 0.5f64.sqrt()).abs() < 1e-15 && (z[1] - 0.5f64.sqrt()).abs() < 1e-15);

        let raw = [3.0, 7.5, -1.0, 4.25, 10.0];
        let (z, _, _) = standardize_column(&raw, SdConvention::Sample, "x").unwrap();
        let (again, m, sd) = standardize_column(&z, SdConvention::Sample, "x").unwrap();
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        assert!(z.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-9));

        assert!(matches!(standardize_column(&[4.0; 3], SdConvention::Sample, "x"), Err(RegressionError::ZeroVariance("x"))));
    }

    #[test]
    fn design_from_records() {
        let recs = [rec("b", 1, 1.0, 3), rec("a", 0, 2.0, 5), rec("b", 1, 4.0, 4), rec("c", 1, 3.0, 9)];
        let d = standardize(&recs, SdConvention::Sample).unwrap();
        assert_eq!(d.tasks, ["a", "b", "c"]);
        assert_eq!(d.task, [1, 0, 1, 2]);
        let mean: f64 = d.x_pmi.iter().sum::<f64>() / 4.0;
        let var: f64 = d.x_pmi.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        assert!(matches!(
            standardize(&[rec("a", 1, 1.0, 2), rec("a", 0, 2.0, 2)], SdConvention::Sample),
            Err(RegressionError::ZeroVariance("length"))
        ));
        let sub = d.subset(|i| i != 1);
        assert_eq!(sub.len(), 3);
        assert_ne!(sub.fingerprint(), d.fingerprint());
    }

    #[test]
    fn parameter_layout() {
        let tasks = vec!["a".to_string(), "b".to_string()];
        let names = MixedModelSpec::default().parameter_names(&tasks);
        assert_eq!(names, ["intercept", "beta_pmi", "beta_len", "r[a]", "r[b]", "s[a]", "s[b]", "sigma_r", "sigma_s"]);
        let plain = MixedModelSpec { include_length: false, random_intercepts: false, random_slopes: false, ..Default::default() };
        assert_eq!(plain.parameter_names(&tasks), ["intercept", "beta_pmi"]);
    }
}
