//! Polya-Gamma data-augmented Gibbs sampler.
//!
//! Given `omega_i ~ PG(1, eta_i)` the logistic likelihood becomes Gaussian
//! in the coefficients, so all fixed and random effects are drawn jointly
//! from one multivariate normal. The two random-effect scales are then
//! updated by slice sampling on the log scale.

use nalgebra::{Cholesky, DMatrix, DVector};
use polya_gamma::PolyaGamma;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::ParamDiagnostics;
use super::{DesignMatrix, MixedModelSpec, RegressionError, ESS_MIN, MIN_CHAINS, RHAT_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub rhat_max: f64,
    pub ess_min: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { chains: 4, warmup: 1000, draws: 1000, seed: 2023, rhat_max: RHAT_MAX, ess_min: ESS_MIN }
    }
}

/// Posterior draws with everything needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub spec: MixedModelSpec,
    pub names: Vec<String>,
    pub tasks: Vec<String>,
    /// `chains[c][i][p]` is parameter `p` at iteration `i` of chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub diagnostics: Vec<ParamDiagnostics>,
    pub design_fingerprint: u64,
    pub n_rows: usize,
    pub pmi_mean: f64,
    pub pmi_sd: f64,
    pub len_mean: f64,
    pub len_sd: f64,
}

/// Positions of each block inside a draw vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n_fixed: usize,
    pub k: usize,
    pub r0: Option<usize>,
    pub s0: Option<usize>,
    /// Length of the Gaussian block.
    pub dim: usize,
}

impl Layout {
    pub(crate) fn new(spec: &MixedModelSpec, k: usize) -> Self {
        let n_fixed = spec.n_fixed();
        let mut at = n_fixed;
        let mut take = |on: bool, width: usize| {
            on.then(|| {
                at += width;
                at - width
            })
        };
        let r0 = take(spec.random_intercepts, k);
        let s0 = take(spec.random_slopes, k);
        Self { n_fixed, k, r0, s0, dim: at }
    }

    /// Nonzero design entries of a row as `(column, value)`.
    fn row(&self, include_length: bool, x: f64, l: f64, task: usize) -> ([(usize, f64); 5], usize) {
        let mut out = [(0, 0.0); 5];
        let mut n = 0;
        let mut push = |c: usize, v: f64| {
            out[n] = (c, v);
            n += 1;
        };
        push(0, 1.0);
        push(1, x);
        if include_length {
            push(2, l);
        }
        if let Some(r0) = self.r0 {
            push(r0 + task, 1.0);
        }
        if let Some(s0) = self.s0 {
            push(s0 + task, x);
        }
        (out, n)
    }
}

impl PosteriorDraws {
    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.spec, self.tasks.len())
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, Vec::len)
    }

    pub fn param_index(&self, name: &str) -> Result<usize, RegressionError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| RegressionError::UnknownParameter(name.to_string()))
    }

    /// Draws of one parameter, chain by chain.
    pub fn chains_of(&self, p: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d[p]).collect()).collect()
    }

    /// All draws of one parameter, chains concatenated.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>, RegressionError> {
        let p = self.param_index(name)?;
        Ok(self.chains.iter().flatten().map(|d| d[p]).collect())
    }

    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flatten().map(Vec::as_slice)
    }

    /// Linear predictor of a draw on standardized inputs. `task` of `None`
    /// gives the population-level value with random effects at zero.
    pub fn eta(&self, draw: &[f64], x: f64, l: f64, task: Option<usize>) -> f64 {
        let lay = self.layout();
        let mut eta = draw[0] + draw[1] * x;
        if self.spec.include_length {
            eta += draw[2] * l;
        }
        if let Some(k) = task {
            if let Some(r0) = lay.r0 {
                eta += draw[r0 + k];
            }
            if let Some(s0) = lay.s0 {
                eta += draw[s0 + k] * x;
            }
        }
        eta
    }

    /// Parameters whose diagnostics fail the gate.
    pub fn offenders(&self, rhat_max: f64, ess_min: f64) -> Vec<ParamDiagnostics> {
        self.diagnostics.iter().filter(|d| !d.converged(rhat_max, ess_min)).cloned().collect()
    }
}

/// Log density of `u = ln sigma` given the `k` effects with sum of squares
/// `ss`, under a half-normal prior of scale `c`, including the Jacobian.
fn log_scale_density(u: f64, k: usize, ss: f64, c: f64) -> f64 {
    let s2 = (2.0 * u).exp();
    -(k as f64) * u - ss / (2.0 * s2) - s2 / (2.0 * c * c) + u
}

/// One stepping-out slice sampling update (Neal, 2003).
fn slice_step(x0: f64, logf: impl Fn(f64) -> f64, width: f64, rng: &mut impl Rng) -> f64 {
    let level = logf(x0) + rng.gen::<f64>().ln();
    let mut lo = x0 - width * rng.gen::<f64>();
    let mut hi = lo + width;
    for _ in 0..64 {
        if logf(lo) <= level {
            break;
        }
        lo -= width;
    }
    for _ in 0..64 {
        if logf(hi) <= level {
            break;
        }
        hi += width;
    }
    loop {
        let x = lo + (hi - lo) * rng.gen::<f64>();
        if logf(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-12 {
            return x0;
        }
    }
}

/// Mean and precision of the signed block scale `sigma` in the
/// non-centered form `theta[start + k] = sigma * z_k`, with the Polya-Gamma
/// weights fixed and a `N(0, c^2)` prior on the signed scale.
fn noncentered_conditional(rows: &Rows, omega: &[f64], theta: &DVector<f64>, start: usize, k: usize, sigma: f64, c: f64) -> (f64, f64) {
    let block = start..start + k;
    let mut prec = 1.0 / (c * c);
    let mut lin = 0.0;
    for i in 0..rows.kappa.len() {
        let mut eta = 0.0;
        let mut a = 0.0;
        let mut own = 0.0;
        for &(col, v) in &rows.cols[i][..rows.nnz[i]] {
            eta += theta[col] * v;
            if block.contains(&col) {
                a = theta[col] / sigma * v;
                own = theta[col] * v;
            }
        }
        prec += omega[i] * a * a;
        lin += (rows.kappa[i] - omega[i] * (eta - own)) * a;
    }
    (lin / prec, prec)
}

/// Interweaving update of one random-effect block (Yu and Meng, 2011).
/// Drawing the scale in the non-centered form rescales the whole block at
/// once, which the centered Gibbs step cannot do when the scale is near
/// zero. The sign of the draw is folded into the block.
fn interweave(rows: &Rows, omega: &[f64], theta: &mut DVector<f64>, start: usize, k: usize, sigma: f64, c: f64, rng: &mut impl Rng) -> f64 {
    let (mean, prec) = noncentered_conditional(rows, omega, theta, start, k, sigma, c);
    let signed = mean + std_normal(rng) / prec.sqrt();
    let ratio = signed / sigma;
    for j in start..start + k {
        theta[j] *= ratio;
    }
    signed.abs()
}

struct Rows {
    cols: Vec<[(usize, f64); 5]>,
    nnz: Vec<usize>,
    kappa: Vec<f64>,
}

fn run_chain(
    rows: &Rows,
    lay: Layout,
    spec: &MixedModelSpec,
    cfg: &FitConfig,
    chain: usize,
) -> Result<Vec<Vec<f64>>, RegressionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let pg = PolyaGamma::new(1.0);
    let d = lay.dim;
    let fixed_prec = 1.0 / (spec.fixed_prior_sd * spec.fixed_prior_sd);

    // Overdispersed start: scales anywhere in [e^-1.5, e^0.5], coefficients
    // spread wider than the posterior is expected to be.
    let mut sigma_r = (rng.gen_range(-1.5..0.5f64)).exp();
    let mut sigma_s = (rng.gen_range(-1.5..0.5f64)).exp();
    let mut theta = DVector::<f64>::zeros(d);
    for j in 0..lay.n_fixed {
        theta[j] = rng.gen_range(-2.0..2.0);
    }
    for k in 0..lay.k {
        let z: f64 = StandardNormal.sample(&mut rng);
        let w: f64 = StandardNormal.sample(&mut rng);
        if let Some(r0) = lay.r0 {
            theta[r0 + k] = sigma_r * z;
        }
        if let Some(s0) = lay.s0 {
            theta[s0 + k] = sigma_s * w;
        }
    }

    let n = rows.kappa.len();
    let mut omega = vec![0.0; n];
    let mut prec = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut z = DVector::<f64>::zeros(d);
    let total = cfg.warmup + cfg.draws;
    let mut out = Vec::with_capacity(cfg.draws);

    for iter in 0..total {
        for i in 0..n {
            let eta: f64 = rows.cols[i][..rows.nnz[i]].iter().map(|&(c, v)| theta[c] * v).sum();
            omega[i] = pg.draw(&mut rng, eta);
        }

        prec.fill(0.0);
        rhs.fill(0.0);
        for j in 0..lay.n_fixed {
            prec[(j, j)] = fixed_prec;
        }
        if let Some(r0) = lay.r0 {
            for k in 0..lay.k {
                prec[(r0 + k, r0 + k)] = 1.0 / (sigma_r * sigma_r);
            }
        }
        if let Some(s0) = lay.s0 {
            for k in 0..lay.k {
                prec[(s0 + k, s0 + k)] = 1.0 / (sigma_s * sigma_s);
            }
        }
        for i in 0..n {
            let row = &rows.cols[i][..rows.nnz[i]];
            for &(a, va) in row {
                rhs[a] += rows.kappa[i] * va;
                let w = omega[i] * va;
                for &(b, vb) in row {
                    prec[(a, b)] += w * vb;
                }
            }
        }

        let chol = Cholesky::new(prec.clone())
            .ok_or_else(|| RegressionError::Numerical("posterior precision is not positive definite".into()))?;
        let mean = chol.solve(&rhs);
        for j in 0..d {
            z[j] = StandardNormal.sample(&mut rng);
        }
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| RegressionError::Numerical("singular Cholesky factor".into()))?;
        theta = mean + noise;

        let c = spec.scale_prior_sd;
        if let Some(r0) = lay.r0 {
            let ss: f64 = (0..lay.k).map(|k| theta[r0 + k].powi(2)).sum();
            sigma_r = slice_step(sigma_r.ln(), |u| log_scale_density(u, lay.k, ss, c), 1.0, &mut rng).exp();
        }
        if let Some(s0) = lay.s0 {
            let ss: f64 = (0..lay.k).map(|k| theta[s0 + k].powi(2)).sum();
            sigma_s = slice_step(sigma_s.ln(), |u| log_scale_density(u, lay.k, ss, c), 1.0, &mut rng).exp();
        }
        if let Some(r0) = lay.r0 {
            sigma_r = interweave(rows, &omega, &mut theta, r0, lay.k, sigma_r, c, &mut rng);
        }
        if let Some(s0) = lay.s0 {
            sigma_s = interweave(rows, &omega, &mut theta, s0, lay.k, sigma_s, c, &mut rng);
        }

        if iter >= cfg.warmup {
            let mut draw: Vec<f64> = theta.iter().copied().collect();
            if lay.r0.is_some() {
                draw.push(sigma_r);
            }
            if lay.s0.is_some() {
                draw.push(sigma_s);
            }
            out.push(draw);
        }
    }
    Ok(out)
}

/// Runs the sampler without the convergence gate.
pub fn sample(design: &DesignMatrix, spec: &MixedModelSpec, cfg: &FitConfig) -> Result<PosteriorDraws, RegressionError> {
    spec.validate()?;
    if design.is_empty() {
        return Err(RegressionError::Empty);
    }
    if cfg.chains < MIN_CHAINS {
        return Err(RegressionError::TooFewChains(cfg.chains));
    }
    if cfg.draws < 4 {
        return Err(RegressionError::TooFewIterations(cfg.draws));
    }
    let k = design.n_tasks();
    let mut seen = vec![false; k];
    for &t in &design.task {
        seen[t] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(RegressionError::EmptyTask(design.tasks[missing].clone()));
    }

    let lay = Layout::new(spec, k);
    let mut rows = Rows { cols: Vec::with_capacity(design.len()), nnz: Vec::with_capacity(design.len()), kappa: Vec::new() };
    for i in 0..design.len() {
        let (cols, nnz) = lay.row(spec.include_length, design.x_pmi[i], design.x_len[i], design.task[i]);
        rows.cols.push(cols);
        rows.nnz.push(nnz);
        rows.kappa.push(f64::from(design.y[i]) - 0.5);
    }

    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&rows, lay, spec, cfg, c))
        .collect::<Result<Vec<_>, _>>()?;

    let names = spec.parameter_names(&design.tasks);
    let mut draws = PosteriorDraws {
        spec: spec.clone(),
        names,
        tasks: design.tasks.clone(),
        chains,
        diagnostics: Vec::new(),
        design_fingerprint: design.fingerprint(),
        n_rows: design.len(),
        pmi_mean: design.pmi_mean,
        pmi_sd: design.pmi_sd,
        len_mean: design.len_mean,
        len_sd: design.len_sd,
    };
    draws.diagnostics = (0..draws.names.len())
        .into_par_iter()
        .map(|p| ParamDiagnostics::compute(&draws.names[p], &draws.chains_of(p)))
        .collect();
    Ok(draws)
}

/// Runs the sampler and refuses to return draws that fail the R-hat or ESS
/// thresholds in `cfg`. The draws travel inside the error for inspection.
pub fn fit(design: &DesignMatrix, spec: &MixedModelSpec, cfg: &FitConfig) -> Result<PosteriorDraws, RegressionError> {
    let draws = sample(design, spec, cfg)?;
    let offenders = draws.offenders(cfg.rhat_max, cfg.ess_min);
    if offenders.is_empty() {
        Ok(draws)
    } else {
        Err(RegressionError::NotConverged { draws: Box::new(draws), offenders })
    }
}

fn std_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws from the prior, laid out like posterior draws, for prior
/// predictive checks.
pub fn sample_prior(spec: &MixedModelSpec, tasks: &[String], n: usize, seed: u64) -> Result<PosteriorDraws, RegressionError> {
    spec.validate()?;
    let lay = Layout::new(spec, tasks.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = Vec::with_capacity(n);
    for _ in 0..n {
        let mut d = Vec::with_capacity(lay.dim + 2);
        for _ in 0..lay.n_fixed {
            d.push(spec.fixed_prior_sd * std_normal(&mut rng));
        }
        let sr = spec.scale_prior_sd * std_normal(&mut rng).abs();
        let ss = spec.scale_prior_sd * std_normal(&mut rng).abs();
        if lay.r0.is_some() {
            d.extend((0..lay.k).map(|_| sr * std_normal(&mut rng)));
        }
        if lay.s0.is_some() {
            d.extend((0..lay.k).map(|_| ss * std_normal(&mut rng)));
        }
        if lay.r0.is_some() {
            d.push(sr);
        }
        if lay.s0.is_some() {
            d.push(ss);
        }
        chain.push(d);
    }
    Ok(PosteriorDraws {
        spec: spec.clone(),
        names: spec.parameter_names(tasks),
        tasks: tasks.to_vec(),
        chains: vec![chain],
        diagnostics: Vec::new(),
        design_fingerprint: 0,
        n_rows: 0,
        pmi_mean: 0.0,
        pmi_sd: 1.0,
        len_mean: 0.0,
        len_sd: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::report::{predict, summarize};

    fn logistic(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    /// Rows built from integer arithmetic only, so the reference fit in
    /// Python sees exactly the same data.
    fn arithmetic_design(n: usize) -> DesignMatrix {
        let mut d = DesignMatrix {
            x_pmi: vec![],
            x_len: vec![],
            task: vec![],
            y: vec![],
            tasks: vec!["t".into()],
            pmi_mean: 0.0,
            pmi_sd: 1.0,
            len_mean: 0.0,
            len_sd: 1.0,
            pmi_raw: vec![],
            len_raw: vec![],
        };
        for i in 0..n {
            let x = ((i * 37) % 101) as f64 / 50.0 - 1.0;
            let l = ((i * 13) % 29) as f64 / 14.0 - 1.0;
            let u = (((i * 7919) % 1000) as f64 + 0.5) / 1000.0;
            let y = u8::from(u < logistic(0.3 + 1.2 * x - 0.5 * l));
            d.x_pmi.push(x);
            d.x_len.push(l);
            d.task.push(0);
            d.y.push(y);
            d.pmi_raw.push(x);
            d.len_raw.push(l);
        }
        d
    }

    fn quick() -> FitConfig {
        FitConfig { warmup: 300, draws: 400, seed: 11, ..Default::default() }
    }

    #[test]
    fn log_scale_density_matches_closed_form() {
        // At k = 0 and ss = 0 the density is the half-normal on sigma
        // times the Jacobian: exp(-sigma^2 / 2) sigma, maximised at sigma = 1.
        let f = |u: f64| log_scale_density(u, 0, 0.0, 1.0);
        assert!(f(0.0) > f(0.1) && f(0.0) > f(-0.1));
        assert!((f(0.3) - (-(0.6f64.exp()) / 2.0 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn noncentered_conditional_matches_the_augmented_density() {
        // Log density of the signed scale t with everything else fixed:
        // -t^2 / (2 c^2) + sum_i kappa_i eta_i - omega_i eta_i^2 / 2,
        // where eta_i moves with t through the slope block. It is quadratic,
        // so central differences recover its mean and precision exactly.
        let spec = MixedModelSpec::default();
        let lay = Layout::new(&spec, 3);
        let mut rows = Rows { cols: vec![], nnz: vec![], kappa: vec![] };
        let mut omega = vec![];
        for i in 0..30 {
            let (cols, nnz) = lay.row(true, (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), i % 3);
            rows.cols.push(cols);
            rows.nnz.push(nnz);
            rows.kappa.push(if i % 4 == 0 { 0.5 } else { -0.5 });
            omega.push(0.1 + 0.01 * i as f64);
        }
        let theta = DVector::from_vec(vec![0.2, 1.1, -0.4, 0.3, -0.2, 0.1, 0.25, -0.15, 0.05]);
        let (sigma, c) = (0.4, 1.3);
        let s0 = lay.s0.unwrap();
        let logf = |t: f64| {
            let mut th = theta.clone();
            for j in s0..s0 + 3 {
                th[j] *= t / sigma;
            }
            let mut v = -t * t / (2.0 * c * c);
            for i in 0..rows.kappa.len() {
                let eta: f64 = rows.cols[i][..rows.nnz[i]].iter().map(|&(col, x)| th[col] * x).sum();
                v += rows.kappa[i] * eta - omega[i] * eta * eta / 2.0;
            }
            v
        };
        let (mean, prec) = noncentered_conditional(&rows, &omega, &theta, s0, 3, sigma, c);
        let h = 0.5;
        let curvature = -(logf(mean + h) - 2.0 * logf(mean) + logf(mean - h)) / (h * h);
        let slope_at_mean = (logf(mean + h) - logf(mean - h)) / (2.0 * h);
        assert!((curvature - prec).abs() < 1e-9 * prec, "{curvature} vs {prec}");
        assert!(slope_at_mean.abs() < 1e-9, "{slope_at_mean}");
    }

    #[test]
    fn slice_sampler_targets_the_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = 0.0;
        let mut acc = Vec::new();
        for _ in 0..20000 {
            x = slice_step(x, |v| -0.5 * (v - 2.0) * (v - 2.0) / 0.25, 1.0, &mut rng);
            acc.push(x);
        }
        let m = acc.iter().sum::<f64>() / acc.len() as f64;
        let v = acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / acc.len() as f64;
        assert!((m - 2.0).abs() < 0.02, "{m}");
        assert!((v - 0.25).abs() < 0.02, "{v}");
    }

    // Maximum-likelihood estimates from statsmodels 0.14 Logit on the
    // arithmetic design with 3000 rows.
    const MLE: [f64; 3] = [MLE_B0, MLE_PMI, MLE_LEN];
    const MLE_B0: f64 = 0.31163224906135384;
    const MLE_PMI: f64 = 1.1724546051634723;
    const MLE_LEN: f64 = -0.45913862240425324;

    #[test]
    fn flat_prior_posterior_mean_approaches_mle() {
        let d = arithmetic_design(3000);
        let spec = MixedModelSpec {
            random_intercepts: false,
            random_slopes: false,
            fixed_prior_sd: 1e4,
            ..Default::default()
        };
        let draws = fit(&d, &spec, &quick()).unwrap();
        let s = summarize(&draws);
        for (j, &m) in MLE.iter().enumerate() {
            assert!((s[j].mean - m).abs() < 0.3 * s[j].se, "{}: {} vs {m} (se {})", s[j].name, s[j].mean, s[j].se);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let d = arithmetic_design(300);
        let spec = MixedModelSpec { random_intercepts: false, random_slopes: false, ..Default::default() };
        let cfg = FitConfig { warmup: 20, draws: 30, ..quick() };
        let a = sample(&d, &spec, &cfg).unwrap();
        let b = sample(&d, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample(&d, &spec, &FitConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.chains, c.chains);
        assert_ne!(a.chains[0], a.chains[1]);
    }

    #[test]
    fn prior_predictive_is_centered() {
        let tasks = vec!["a".to_string(), "b".to_string()];
        let prior = sample_prior(&MixedModelSpec::default(), &tasks, 40000, 9).unwrap();
        for (x, l, task) in [(0.0, 0.0, None), (1.5, -0.5, Some(0)), (-2.0, 1.0, Some(1))] {
            let p = predict(&prior, x, l, task);
            assert!((p.mean - 0.5).abs() < 0.01, "{x} {l} {task:?}: {}", p.mean);
        }
    }

    #[test]
    fn separated_task_stays_finite() {
        // Task "all" never flips; the prior keeps its intercept finite.
        let mut d = arithmetic_design(600);
        d.tasks = vec!["all".into(), "mixed".into()];
        for i in 0..d.len() {
            if i % 2 == 0 {
                d.task[i] = 0;
                d.y[i] = 1;
            } else {
                d.task[i] = 1;
            }
        }
        let spec = MixedModelSpec { include_length: false, random_slopes: false, ..Default::default() };
        let draws = sample(&d, &spec, &quick()).unwrap();
        let r_all = draws.pooled("r[all]").unwrap();
        let b0 = draws.pooled("intercept").unwrap();
        assert!(r_all.iter().chain(&b0).all(|v| v.is_finite()));
        let total: Vec<f64> = r_all.iter().zip(&b0).map(|(r, b)| r + b).collect();
        let mean = total.iter().sum::<f64>() / total.len() as f64;
        assert!(mean > 2.0 && mean < 15.0, "{mean}");
    }

    #[test]
    fn random_intercepts_follow_task_rates() {
        let mut d = arithmetic_design(1200);
        d.tasks = vec!["hi".into(), "lo".into(), "mid".into()];
        let shift = [1.5, -1.5, 0.0];
        for i in 0..d.len() {
            let k = i % 3;
            d.task[i] = k;
            let u = (((i * 7919) % 1000) as f64 + 0.5) / 1000.0;
            d.y[i] = u8::from(u < logistic(shift[k] + 0.8 * d.x_pmi[i]));
        }
        let spec = MixedModelSpec { include_length: false, random_slopes: false, ..Default::default() };
        let draws = sample(&d, &spec, &quick()).unwrap();
        let m = |n: &str| {
            let v = draws.pooled(n).unwrap();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(m("r[hi]") > m("r[mid]") && m("r[mid]") > m("r[lo]"));
    }

    #[test]
    fn rejects_bad_configuration() {
        let d = arithmetic_design(50);
        let spec = MixedModelSpec::default();
        assert!(matches!(sample(&d, &spec, &FitConfig { chains: 1, ..quick() }), Err(RegressionError::TooFewChains(1))));
        assert!(matches!(sample(&d, &spec, &FitConfig { draws: 2, ..quick() }), Err(RegressionError::TooFewIterations(2))));
        let bad = MixedModelSpec { fixed_prior_sd: 0.0, ..Default::default() };
        assert!(matches!(sample(&d, &bad, &quick()), Err(RegressionError::BadPrior)));
        let mut gap = d.clone();
        gap.tasks.push("ghost".into());
        assert!(matches!(sample(&gap, &spec, &quick()), Err(RegressionError::EmptyTask(t)) if t == "ghost"));
    }

    #[test]
    fn gate_reports_offenders() {
        let d = arithmetic_design(200);
        let spec = MixedModelSpec::default();
        let cfg = FitConfig { warmup: 5, draws: 20, ..quick() };
        match fit(&d, &spec, &cfg) {
            Err(RegressionError::NotConverged { draws, offenders }) => {
                assert!(!offenders.is_empty());
                assert_eq!(draws.n_draws_per_chain(), 20);
            }
            other => panic!("expected a convergence failure, got {other:?}"),
        }
    }
}
