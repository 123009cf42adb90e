//! Synthetic consistency data with known coefficients.
//!
//! Raw PMI and length are drawn first and standardized; outcomes are then
//! generated from the standardized values. Fitting the same rows therefore
//! targets exactly the coefficients that produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{standardize_column, RegressionError, SdConvention};
use crate::consistency::ConsistencyRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_rows: usize,
    pub n_tasks: usize,
    pub beta0: f64,
    pub beta_pmi: f64,
    pub beta_len: f64,
    pub sigma_r: f64,
    pub sigma_s: f64,
    /// Mean and SD of raw PMI in bits.
    pub pmi_bits: (f64, f64),
    /// Mean and SD of sentence length before rounding.
    pub length: (f64, f64),
    /// Correlation between raw PMI and length.
    pub rho: f64,
    pub convention: SdConvention,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_rows: 2000,
            n_tasks: 5,
            beta0: 0.5,
            beta_pmi: 1.87,
            beta_len: -0.3,
            sigma_r: 0.5,
            sigma_s: 0.3,
            pmi_bits: (6.0, 3.0),
            length: (14.0, 5.0),
            rho: 0.3,
            convention: SdConvention::Sample,
            seed: 2023,
        }
    }
}

/// The values the data were generated from, keyed like posterior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub values: Vec<(String, f64)>,
}

impl SimTruth {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

pub fn task_name(k: usize) -> String {
    format!("task{k}")
}

pub fn simulate_dataset(cfg: &SimConfig) -> Result<(Vec<ConsistencyRecord>, SimTruth), RegressionError> {
    if cfg.n_rows < 2 || cfg.n_tasks == 0 {
        return Err(RegressionError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let r: Vec<f64> = (0..cfg.n_tasks).map(|_| cfg.sigma_r * z()).collect();
    let s: Vec<f64> = (0..cfg.n_tasks).map(|_| cfg.sigma_s * z()).collect();

    let rho = cfg.rho.clamp(-1.0, 1.0);
    let mut pmi = Vec::with_capacity(cfg.n_rows);
    let mut len = Vec::with_capacity(cfg.n_rows);
    for _ in 0..cfg.n_rows {
        let (a, b) = (z(), z());
        pmi.push(cfg.pmi_bits.0 + cfg.pmi_bits.1 * a);
        let l = cfg.length.0 + cfg.length.1 * (rho * a + (1.0 - rho * rho).sqrt() * b);
        len.push(l.round().max(1.0));
    }
    let (xp, _, _) = standardize_column(&pmi, cfg.convention, "avg_pmi_bits")?;
    let (xl, _, _) = standardize_column(&len, cfg.convention, "length")?;

    let mut records = Vec::with_capacity(cfg.n_rows);
    for i in 0..cfg.n_rows {
        let k = i % cfg.n_tasks;
        let eta = cfg.beta0 + r[k] + (cfg.beta_pmi + s[k]) * xp[i] + cfg.beta_len * xl[i];
        let p = 1.0 / (1.0 + (-eta).exp());
        let y = Bernoulli::new(p).map_err(|e| RegressionError::Numerical(e.to_string()))?.sample(&mut rng);
        records.push(ConsistencyRecord {
            task: task_name(k),
            sample_id: format!("{}/{i:05}", task_name(k)),
            y: u8::from(y),
            avg_pmi_bits: pmi[i],
            length: len[i] as usize,
        });
    }

    let mut values = vec![
        ("intercept".to_string(), cfg.beta0),
        ("beta_pmi".to_string(), cfg.beta_pmi),
        ("beta_len".to_string(), cfg.beta_len),
    ];
    values.extend(r.iter().enumerate().map(|(k, v)| (format!("r[{}]", task_name(k)), *v)));
    values.extend(s.iter().enumerate().map(|(k, v)| (format!("s[{}]", task_name(k)), *v)));
    values.push(("sigma_r".into(), cfg.sigma_r));
    values.push(("sigma_s".into(), cfg.sigma_s));
    Ok((records, SimTruth { values }))
}
