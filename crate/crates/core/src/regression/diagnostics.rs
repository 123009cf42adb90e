//! Convergence diagnostics on rank-normalized split chains (Vehtari et al.,
//! 2021), computed the way Stan and ArviZ do.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

impl ParamDiagnostics {
    pub fn compute(name: &str, chains: &[Vec<f64>]) -> Self {
        Self { name: name.to_string(), rhat: split_rhat(chains), ess_bulk: ess_bulk(chains), ess_tail: ess_tail(chains) }
    }

    pub fn converged(&self, rhat_max: f64, ess_min: f64) -> bool {
        self.rhat < rhat_max && self.ess_bulk >= ess_min && self.ess_tail >= ess_min
    }
}

/// Splits every chain in half, dropping the middle draw of odd-length chains.
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let (lo, hi) = chains.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo < 1e-15
}

/// Normal scores of the pooled average ranks.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = flat.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut rank = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && flat[order[j + 1]] == flat[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            rank[k] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut it = rank.into_iter().map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)));
    chains.iter().map(|c| c.iter().map(|_| it.next().unwrap()).collect()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var1(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * var1(&means);
    let w = chains.iter().map(|c| var1(c)).sum::<f64>() / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn median(chains: &[Vec<f64>]) -> f64 {
    let mut flat: Vec<f64> = chains.iter().flatten().copied().collect();
    flat.sort_by(f64::total_cmp);
    let s = flat.len();
    if s % 2 == 1 {
        flat[s / 2]
    } else {
        (flat[s / 2 - 1] + flat[s / 2]) / 2.0
    }
}

/// Rank-normalized split R-hat: the larger of the bulk and folded values.
/// Constant draws give 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    let sp = split(chains);
    let bulk = rhat_basic(&rank_normalize(&sp));
    let med = median(&sp);
    let folded: Vec<Vec<f64>> = sp.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&folded));
    bulk.max(tail)
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
/// Autocovariances are computed lag by lag and only as far as the
/// truncation point requires.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    if n < 4 || is_constant(chains) {
        return total;
    }
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let mean_acov = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let acov0 = mean_acov(0);
    let nf = n as f64;
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += var1(&means);
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 3 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    if t < 3 {
        // The first pair was already negative: the chain is anticorrelated.
        return total * total.log10();
    }
    let max_t = t - 2;
    if even > 0.0 {
        rho_hat[max_t + 1] = even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            let v = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 1] = v;
            rho_hat[t + 2] = v;
        }
        t += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat[..=max_t].iter().sum::<f64>() + rho_hat.get(max_t + 1).copied().unwrap_or(0.0);
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let sp = split(chains);
    if is_constant(&sp) {
        return sp.iter().map(Vec::len).sum::<usize>() as f64;
    }
    ess_raw(&rank_normalize(&sp))
}

/// Smaller of the ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> f64 {
    let sp = split(chains);
    let mut flat: Vec<f64> = chains.iter().flatten().copied().collect();
    flat.sort_by(f64::total_cmp);
    let ind = |q: f64| -> Vec<Vec<f64>> {
        let cut = super::report::quantile_sorted(&flat, q);
        sp.iter().map(|c| c.iter().map(|&v| f64::from(u8::from(v <= cut))).collect()).collect()
    };
    ess_raw(&ind(0.05)).min(ess_raw(&ind(0.95)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth, autocorrelated, reproducible chains; `shift` offsets chain 0.
    fn chains(m: usize, n: usize, shift: f64) -> Vec<Vec<f64>> {
        (0..m)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let (i, c) = (i as f64, c as f64);
                        (0.37 * i + 1.3 * c).sin() + 0.5 * (0.011 * i * i + c).cos() + 0.2 * (2.9 * i).sin()
                            + if c == 0.0 { shift } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    // Reference values from arviz 0.23.4: az.rhat / az.ess(method="bulk"|"tail")
    // on the same formula.
    #[test]
    fn matches_reference_implementation() {
        let cases: [(usize, usize, f64, f64, f64, f64); 3] = [
            (4, 100, 0.0, RHAT_A, BULK_A, TAIL_A),
            (4, 101, 0.8, RHAT_B, BULK_B, TAIL_B),
            (2, 400, 0.0, RHAT_C, BULK_C, TAIL_C),
        ];
        for (m, n, shift, rhat, bulk, tail) in cases {
            let ch = chains(m, n, shift);
            assert!((split_rhat(&ch) - rhat).abs() < 1e-9, "rhat {m}x{n}: {} vs {rhat}", split_rhat(&ch));
            assert!((ess_bulk(&ch) - bulk).abs() < 1e-6, "bulk {m}x{n}: {} vs {bulk}", ess_bulk(&ch));
            assert!((ess_tail(&ch) - tail).abs() < 1e-6, "tail {m}x{n}: {} vs {tail}", ess_tail(&ch));
        }
    }

    const RHAT_A: f64 = 0.99507291711040657;
    const BULK_A: f64 = 100.6552612013551;
    const TAIL_A: f64 = 341.93489693384038;
    const RHAT_B: f64 = 1.1080631841937696;
    const BULK_B: f64 = 76.996601809863193;
    const TAIL_B: f64 = 60.632455716531354;
    const RHAT_C: f64 = 0.9994376382910467;
    const BULK_C: f64 = 200.30390286650521;
    const TAIL_C: f64 = 638.35145429999591;

    #[test]
    fn independent_draws_are_near_nominal() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let ch: Vec<Vec<f64>> =
            (0..4).map(|_| (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let r = split_rhat(&ch);
        assert!(r < 1.01, "{r}");
        let b = ess_bulk(&ch);
        assert!((3000.0..5000.0).contains(&b), "{b}");
        assert!(ess_tail(&ch) > 2000.0);
    }

    #[test]
    fn stuck_chains_are_flagged() {
        let ch = chains(4, 200, 5.0);
        let d = ParamDiagnostics::compute("x", &ch);
        assert!(d.rhat > 1.5 && !d.converged(1.05, 200.0));
        let flat = vec![vec![2.0; 50]; 4];
        assert_eq!(split_rhat(&flat), 1.0);
        assert_eq!(ess_bulk(&flat), 200.0);
    }
}
