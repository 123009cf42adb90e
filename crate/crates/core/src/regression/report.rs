//! Posterior summaries, the region-of-practical-equivalence decision, model
//! comparison and predicted-probability curves.

use serde::{Deserialize, Serialize};

use super::sampler::PosteriorDraws;
use super::{DesignMatrix, RegressionError};

/// Half-width 0.18 on the log-odds scale, i.e. an odds ratio within about
/// 0.84 to 1.2 counts as no effect.
pub const DEFAULT_ROPE: (f64, f64) = (-0.18, 0.18);

/// Sample quantile of sorted data, linear interpolation between order
/// statistics (Hyndman and Fan type 7, the numpy and R default).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln P(y | eta)` for a logistic model, stable at large `|eta|`.
fn log_lik(y: u8, eta: f64) -> f64 {
    let s = if y == 1 { eta } else { -eta };
    -((-s).max(0.0) + (-s.abs()).exp().ln_1p())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    /// Posterior standard deviation.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

fn describe(name: &str, values: &[f64]) -> Summary {
    let n = values.len() as f64;
    // Shifting by the first draw keeps the mean of constant draws exact.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let se = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        name: name.to_string(),
        mean,
        se,
        ci_low: quantile_sorted(&sorted, 0.025),
        ci_high: quantile_sorted(&sorted, 0.975),
        rhat: f64::NAN,
        ess_bulk: f64::NAN,
        ess_tail: f64::NAN,
    }
}

/// Mean, posterior SD and equal-tailed 95% interval of every parameter.
pub fn summarize(draws: &PosteriorDraws) -> Vec<Summary> {
    draws
        .names
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let values: Vec<f64> = draws.iter_draws().map(|d| d[p]).collect();
            let mut s = describe(name, &values);
            if let Some(d) = draws.diagnostics.get(p) {
                s.rhat = d.rhat;
                s.ess_bulk = d.ess_bulk;
                s.ess_tail = d.ess_tail;
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeReport {
    pub name: String,
    pub rope_low: f64,
    pub rope_high: f64,
    /// Share of draws strictly outside the ROPE.
    pub mass_outside: f64,
    /// Share of draws strictly above zero.
    pub mass_positive: f64,
    /// Whether at least 95% of the posterior lies outside the ROPE.
    pub effective: bool,
}

pub fn rope(draws: &PosteriorDraws, name: &str, bounds: (f64, f64)) -> Result<RopeReport, RegressionError> {
    let values = draws.pooled(name)?;
    Ok(rope_of(name, &values, bounds))
}

pub(crate) fn rope_of(name: &str, values: &[f64], (lo, hi): (f64, f64)) -> RopeReport {
    let n = values.len() as f64;
    let outside = values.iter().filter(|&&v| v < lo || v > hi).count() as f64 / n;
    let positive = values.iter().filter(|&&v| v > 0.0).count() as f64 / n;
    RopeReport { name: name.to_string(), rope_low: lo, rope_high: hi, mass_outside: outside, mass_positive: positive, effective: outside >= 0.95 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Posterior of `P(y = 1)` at standardized inputs, averaged over draws,
/// with an equal-tailed 95% band.
pub fn predict(draws: &PosteriorDraws, x: f64, l: f64, task: Option<usize>) -> Prediction {
    let mut p: Vec<f64> = draws.iter_draws().map(|d| logistic(draws.eta(d, x, l, task))).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.sort_by(f64::total_cmp);
    Prediction { mean, low: quantile_sorted(&p, 0.025), high: quantile_sorted(&p, 0.975) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub task: String,
    pub pmi_bits: f64,
    pub pmi_z: f64,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Predicted consistency against PMI for each task, over the PMI range the
/// task actually covers, with length held at the task's mean.
pub fn simulate_curves(draws: &PosteriorDraws, design: &DesignMatrix, points: usize) -> Vec<CurvePoint> {
    let points = points.max(2);
    let mut out = Vec::with_capacity(design.n_tasks() * points);
    for (k, task) in design.tasks.iter().enumerate() {
        let rows: Vec<usize> = (0..design.len()).filter(|&i| design.task[i] == k).collect();
        if rows.is_empty() {
            continue;
        }
        let lo = rows.iter().map(|&i| design.pmi_raw[i]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|&i| design.pmi_raw[i]).fold(f64::NEG_INFINITY, f64::max);
        let l = rows.iter().map(|&i| design.x_len[i]).sum::<f64>() / rows.len() as f64;
        for j in 0..points {
            let raw = lo + (hi - lo) * j as f64 / (points - 1) as f64;
            let z = (raw - design.pmi_mean) / design.pmi_sd;
            let p = predict(draws, z, l, Some(k));
            out.push(CurvePoint { task: task.clone(), pmi_bits: raw, pmi_z: z, mean: p.mean, low: p.low, high: p.high });
        }
    }
    out
}

fn posterior_mean(draws: &PosteriorDraws) -> Vec<f64> {
    let n = draws.iter_draws().count() as f64;
    let mut m = vec![0.0; draws.names.len()];
    for d in draws.iter_draws() {
        for (a, v) in m.iter_mut().zip(d) {
            *a += v / n;
        }
    }
    m
}

fn plug_in_log_lik(draws: &PosteriorDraws, design: &DesignMatrix) -> f64 {
    let theta = posterior_mean(draws);
    (0..design.len())
        .map(|i| log_lik(design.y[i], draws.eta(&theta, design.x_pmi[i], design.x_len[i], Some(design.task[i]))))
        .sum()
}

fn n_params(draws: &PosteriorDraws) -> usize {
    draws.spec.n_fixed() + usize::from(draws.spec.random_intercepts) + usize::from(draws.spec.random_slopes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub n_rows: usize,
    pub bic_with: f64,
    pub bic_without: f64,
    /// Approximate natural-log Bayes factor in favour of the model with the
    /// term, `(BIC_without - BIC_with) / 2`.
    pub log_bf: f64,
}

/// BIC comparison of two fits on the same rows. The log-likelihood is taken
/// at the posterior mean, random effects included; the parameter count is
/// the fixed effects plus one per random-effect scale.
pub fn compare(design: &DesignMatrix, with: &PosteriorDraws, without: &PosteriorDraws) -> Result<ModelComparison, RegressionError> {
    let fp = design.fingerprint();
    if with.design_fingerprint != fp || without.design_fingerprint != fp {
        return Err(RegressionError::RowMismatch);
    }
    let n = design.len() as f64;
    let bic = |d: &PosteriorDraws| n_params(d) as f64 * n.ln() - 2.0 * plug_in_log_lik(d, design);
    let (bic_with, bic_without) = (bic(with), bic(without));
    Ok(ModelComparison { n_rows: design.len(), bic_with, bic_without, log_bf: (bic_without - bic_with) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutComparison {
    pub n_rows: usize,
    /// Log pointwise predictive density, summed over held-out rows.
    pub lpd_with: f64,
    pub lpd_without: f64,
    pub diff: f64,
    /// Standard error of `diff` from the per-row differences.
    pub diff_se: f64,
}

fn pointwise_lpd(draws: &PosteriorDraws, design: &DesignMatrix) -> Vec<f64> {
    let s = draws.iter_draws().count() as f64;
    (0..design.len())
        .map(|i| {
            let ll: Vec<f64> = draws
                .iter_draws()
                .map(|d| log_lik(design.y[i], draws.eta(d, design.x_pmi[i], design.x_len[i], Some(design.task[i]))))
                .collect();
            let m = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + (ll.iter().map(|v| (v - m).exp()).sum::<f64>() / s).ln()
        })
        .collect()
}

/// Held-out predictive comparison. `test` must carry the standardization
/// constants and task list the fits were made with.
pub fn holdout_comparison(
    test: &DesignMatrix,
    with: &PosteriorDraws,
    without: &PosteriorDraws,
) -> Result<HoldoutComparison, RegressionError> {
    for d in [with, without] {
        if d.tasks != test.tasks || d.pmi_mean != test.pmi_mean || d.pmi_sd != test.pmi_sd {
            return Err(RegressionError::RowMismatch);
        }
    }
    if test.is_empty() {
        return Err(RegressionError::Empty);
    }
    let a = pointwise_lpd(with, test);
    let b = pointwise_lpd(without, test);
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = if diffs.len() > 1 { diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(HoldoutComparison {
        n_rows: test.len(),
        lpd_with: a.iter().sum(),
        lpd_without: b.iter().sum(),
        diff: diffs.iter().sum(),
        diff_se: (n * var).sqrt(),
    })
}
