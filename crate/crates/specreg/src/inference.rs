//! Wild bootstrap confidence regions, max statistics and the Gaussian
//! reference distribution.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::estimators::{residual_variance, threshold, TauKind, TauVector};
use crate::filters::FilterSpec;
use crate::simulation::{derive_seed, generate, threshold_grid, threshold_sweep, DataConfig, MethodConfig, fit_method};
use crate::spectral::{decompose, thin_svd, RegressionProblem, SpectralDecomposition, DEFAULT_RANK_TOL};

/// Slack on `(1 − α*)·B` so representation error cannot bump the order statistic.
const QUANTILE_SLACK: f64 = 1e-9;

/// Samples per Monte-Carlo block; each block owns one RNG stream.
const MC_BLOCK: usize = 256;

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

/// Upper empirical quantile: order statistic `⌈(1 − α*)B⌉` (1-based) of `samples`.
pub fn upper_quantile(samples: &[f64], alpha_star: f64) -> Result<f64> {
    if samples.is_empty() {
        return input("no samples");
    }
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return input("alpha_star must lie in (0, 1)");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    let idx = ((1.0 - alpha_star) * b - QUANTILE_SLACK).ceil().clamp(1.0, b) as usize;
    Ok(sorted[idx - 1])
}

/// `max_i |est_i − truth_i| / τ_i`.
pub fn max_statistic(estimate: &DVector<f64>, truth: &DVector<f64>, tau: &TauVector) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.len() != tau.values.len() {
        return input("estimate, truth and tau must have equal lengths");
    }
    Ok(estimate
        .iter()
        .zip(truth.iter())
        .zip(&tau.values)
        .map(|((e, t), s)| (e - t).abs() / s)
        .fold(0.0, f64::max))
}

/// `max_i |a_i − b_i|`.
pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// Thresholded estimates and residual variances that seed the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInput {
    pub theta_hat: DVector<f64>,
    pub n_hat: Vec<usize>,
    pub sigma2_hat: f64,
    pub theta_tilde: DVector<f64>,
    pub n_tilde: Vec<usize>,
    pub sigma2_tilde: f64,
}

impl BootstrapInput {
    /// Threshold `β̂` at `b_hat` and `β̃` at `b_tilde`.
    pub fn new(
        problem: &RegressionProblem,
        beta_hat: &DVector<f64>,
        beta_tilde: &DVector<f64>,
        b_hat: f64,
        b_tilde: f64,
    ) -> Result<Self> {
        let (theta_hat, n_hat) = threshold(beta_hat, b_hat)?;
        let (theta_tilde, n_tilde) = threshold(beta_tilde, b_tilde)?;
        Ok(Self {
            sigma2_hat: residual_variance(problem, &theta_hat)?,
            sigma2_tilde: residual_variance(problem, &theta_tilde)?,
            theta_hat,
            n_hat,
            theta_tilde,
            n_tilde,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub alpha_star: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Quantiles and replicate statistics of the wild bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub c_hat: f64,
    pub c_tilde: f64,
    pub e_hat_samples: Vec<f64>,
    pub e_tilde_samples: Vec<f64>,
    pub alpha_star: f64,
    pub replicates: usize,
    pub seed: u64,
    /// A residual variance was zero, so that family's replicates are all zero.
    pub degenerate: bool,
}

/// Resample `Y* = Xθ + e*`, refit with the same filter, keep the original
/// selection, and record `max_i |θ*_i − θ_i|`, for both families.
pub fn wild_bootstrap_from(
    problem: &RegressionProblem,
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    start: &BootstrapInput,
    options: &BootstrapOptions,
) -> Result<BootstrapReport> {
    if options.replicates == 0 {
        return input("replicates must be at least 1");
    }
    if !(options.alpha_star > 0.0 && options.alpha_star < 1.0) {
        return input("alpha_star must lie in (0, 1)");
    }
    let n = problem.n();
    let nf = n as f64;
    let mult = |f: &dyn Fn(f64) -> Result<f64>| -> Result<DVector<f64>> {
        let v = dec
            .singular_values
            .iter()
            .map(|&s| Ok(f(s * s / nf)? * s / nf))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    };
    let m_hat = mult(&|l| spec.generator_value(l))?;
    let m_tilde = mult(&|l| spec.debiased_generator_value(l))?;

    let x = problem.x();
    // Uᵀ(Xθ) is fixed across replicates.
    let base_hat = dec.u.tr_mul(&(x * &start.theta_hat));
    let base_tilde = dec.u.tr_mul(&(x * &start.theta_tilde));
    let sd_hat = start.sigma2_hat.max(0.0).sqrt();
    let sd_tilde = start.sigma2_tilde.max(0.0).sqrt();

    let replicate = |b: usize| -> (f64, f64) {
        let mut rng = block_rng(options.seed, b as u64);
        let e_hat = normal_vector(&mut rng, n, sd_hat);
        let e_tilde = normal_vector(&mut rng, n, sd_tilde);
        let refit = |base: &DVector<f64>, e: &DVector<f64>, m: &DVector<f64>| {
            let coef = (base + dec.u.tr_mul(e)).component_mul(m);
            &dec.v * coef
        };
        let star_hat = refit(&base_hat, &e_hat, &m_hat);
        let star_tilde = refit(&base_tilde, &e_tilde, &m_tilde);
        (
            restricted_max(&star_hat, &start.theta_hat, &start.n_hat),
            restricted_max(&star_tilde, &start.theta_tilde, &start.n_tilde),
        )
    };
    let (e_hat_samples, e_tilde_samples): (Vec<f64>, Vec<f64>) =
        (0..options.replicates).into_par_iter().map(replicate).unzip();

    Ok(BootstrapReport {
        c_hat: upper_quantile(&e_hat_samples, options.alpha_star)?,
        c_tilde: upper_quantile(&e_tilde_samples, options.alpha_star)?,
        e_hat_samples,
        e_tilde_samples,
        alpha_star: options.alpha_star,
        replicates: options.replicates,
        seed: options.seed,
        degenerate: start.sigma2_hat == 0.0 || start.sigma2_tilde == 0.0,
    })
}

/// `max_i |θ*_i − θ_i|` with `θ*_i = β*_i·1{i ∈ N}`.
fn restricted_max(beta_star: &DVector<f64>, theta: &DVector<f64>, selected: &[usize]) -> f64 {
    let mut out = 0.0f64;
    let mut next = selected.iter().peekable();
    for i in 0..theta.len() {
        let star = if next.peek() == Some(&&i) {
            next.next();
            beta_star[i]
        } else {
            0.0
        };
        out = out.max((star - theta[i]).abs());
    }
    out
}

/// Closed-form fit at `spec`, thresholding both estimates at `b_n`, then bootstrap.
pub fn wild_bootstrap(
    problem: &RegressionProblem,
    spec: &FilterSpec,
    b_n: f64,
    options: &BootstrapOptions,
) -> Result<BootstrapReport> {
    let dec = decompose(problem)?;
    let beta_hat = crate::estimators::estimate_spectral(&dec, spec, problem.y(), problem.n())?;
    let beta_tilde = crate::estimators::debias_spectral(&dec, spec, problem.y(), problem.n())?;
    let start = BootstrapInput::new(problem, &beta_hat, &beta_tilde, b_n, b_n)?;
    wild_bootstrap_from(problem, &dec, spec, &start, options)
}

/// Monte-Carlo draws of `max_i |Σ_k v_{ik} h(λ_k/n) (√λ_k/n) ξ_k| / τ_i` with
/// `ξ_k ~ N(0, σ²)`; `h = (1+r)g` for the debiased kind and `g` otherwise.
/// Returned sorted ascending.
pub fn gaussian_reference_samples(
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    tau: &TauVector,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return input("at least one sample is required");
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return input("sigma must be finite and nonnegative");
    }
    if tau.values.len() != dec.p() {
        return input("tau length differs from the number of coefficients");
    }
    let n = dec.n() as f64;
    let coef = dec
        .singular_values
        .iter()
        .map(|&s| {
            let l = s * s / n;
            let h = match tau.kind {
                TauKind::Debiased => spec.debiased_generator_value(l)?,
                TauKind::Plain => spec.generator_value(l)?,
            };
            Ok(h * s / n)
        })
        .collect::<Result<Vec<_>>>()?;
    // Rows of W = diag(1/τ) V diag(c).
    let mut w = dec.v.clone();
    for (k, c) in coef.iter().enumerate() {
        w.column_mut(k).scale_mut(*c);
    }
    for (i, t) in tau.values.iter().enumerate() {
        w.row_mut(i).scale_mut(1.0 / t);
    }
    let s = dec.rank();
    let blocks = samples.div_ceil(MC_BLOCK);
    let mut out: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|blk| {
            let count = MC_BLOCK.min(samples - blk * MC_BLOCK);
            let mut rng = block_rng(seed, blk as u64);
            let xi = DMatrix::from_fn(s, count, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            });
            let prod = &w * xi;
            (0..count)
                .map(|j| prod.column(j).amax())
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Empirical `H(x)` from sorted reference samples.
pub fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Monte-Carlo estimate of `H(x)` (or `H*(x)` for a plain τ).
pub fn gaussian_reference_cdf(
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    tau: &TauVector,
    sigma: f64,
    x: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(x >= 0.0) {
        return input("x must be nonnegative");
    }
    let draws = gaussian_reference_samples(dec, spec, tau, sigma, samples, seed)?;
    Ok(empirical_cdf(&draws, x))
}

/// Largest gap between an empirical distribution and a reference one, both sorted.
pub fn ks_distance(sorted_a: &[f64], sorted_b: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (na, nb) = (sorted_a.len() as f64, sorted_b.len() as f64);
    let mut d = 0.0f64;
    while i < sorted_a.len() && j < sorted_b.len() {
        let v = sorted_a[i].min(sorted_b[j]);
        while i < sorted_a.len() && sorted_a[i] <= v {
            i += 1;
        }
        while j < sorted_b.len() && sorted_b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Which threshold seeds the bootstrap in a coverage study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Fixed(f64),
    /// Percentile (0–100) of the plateau of error-minimizing thresholds,
    /// computed separately for `β̂` and `β̃`.
    PlateauPercentile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub method: MethodConfig,
    pub threshold: ThresholdRule,
    #[serde(default = "default_threshold_step")]
    pub threshold_step: f64,
    pub runs: usize,
    pub replicates: usize,
    pub alpha_star: f64,
    pub seed: u64,
}

fn default_threshold_step() -> f64 {
    5e-4
}

/// Per-run outcome of a coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRun {
    pub seed: u64,
    pub b_hat: f64,
    pub b_tilde: f64,
    pub c_hat: f64,
    pub c_tilde: f64,
    pub theta_hat_error: f64,
    pub theta_tilde_error: f64,
    pub theta_hat_max_error: f64,
    pub theta_tilde_max_error: f64,
    pub sigma2_hat: f64,
    pub sigma2_tilde: f64,
    pub covered_hat: bool,
    pub covered_tilde: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: String,
    /// Fraction of runs with `max_i |θ̂_i − β_i| ≤ Ĉ*`.
    pub coverage_i: f64,
    /// Fraction of runs with `max_i |θ̃_i − β_i| ≤ C̃*`.
    pub coverage_ii: f64,
    pub mean_theta_hat_error: f64,
    pub mean_theta_tilde_error: f64,
    pub mean_sigma2_hat_error: f64,
    pub mean_sigma2_tilde_error: f64,
    pub runs: Vec<CoverageRun>,
}

/// Repeat: simulate, fit, threshold, bootstrap, and test whether the truth
/// lies in each region.
pub fn coverage_experiment(config: &CoverageConfig) -> Result<CoverageReport> {
    if config.runs == 0 {
        return input("runs must be at least 1");
    }
    config.data.validate()?;
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|r| coverage_run(config, derive_seed(config.seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let m = runs.len() as f64;
    let mean = |f: &dyn Fn(&CoverageRun) -> f64| runs.iter().map(f).sum::<f64>() / m;
    let variance = config.data.error_dist.variance();
    Ok(CoverageReport {
        method: config.method.name(),
        coverage_i: mean(&|r| r.covered_hat as u8 as f64),
        coverage_ii: mean(&|r| r.covered_tilde as u8 as f64),
        mean_theta_hat_error: mean(&|r| r.theta_hat_error),
        mean_theta_tilde_error: mean(&|r| r.theta_tilde_error),
        mean_sigma2_hat_error: mean(&|r| (r.sigma2_hat - variance).abs()),
        mean_sigma2_tilde_error: mean(&|r| (r.sigma2_tilde - variance).abs()),
        runs,
    })
}

fn coverage_run(config: &CoverageConfig, seed: u64) -> Result<CoverageRun> {
    let data = generate(&config.data, seed)?;
    let dec = thin_svd(data.problem.x(), DEFAULT_RANK_TOL)?;
    let fit = fit_method(&config.method, &data, &dec)?;
    let spec = fit.spec.ok_or_else(|| {
        crate::Error::Contract("coverage needs a fit with a spectral filter".into())
    })?;
    let beta_tilde = fit
        .beta_tilde
        .ok_or_else(|| crate::Error::Contract("coverage needs a debiased estimate".into()))?;
    let (b_hat, b_tilde) = match config.threshold {
        ThresholdRule::Fixed(b) => (b, b),
        ThresholdRule::PlateauPercentile(q) => {
            let pick = |est: &DVector<f64>| -> Result<f64> {
                let grid = threshold_grid(est, config.threshold_step)?;
                Ok(threshold_sweep(est, &data.beta, &grid)?.plateau_percentile(q))
            };
            (pick(&fit.beta_hat)?, pick(&beta_tilde)?)
        }
    };
    let start = BootstrapInput::new(&data.problem, &fit.beta_hat, &beta_tilde, b_hat, b_tilde)?;
    let options = BootstrapOptions {
        alpha_star: config.alpha_star,
        replicates: config.replicates,
        seed: derive_seed(seed, u64::MAX),
    };
    let report = wild_bootstrap_from(&data.problem, &dec, &spec, &start, &options)?;
    let max_hat = max_abs_diff(&start.theta_hat, &data.beta);
    let max_tilde = max_abs_diff(&start.theta_tilde, &data.beta);
    Ok(CoverageRun {
        seed,
        b_hat,
        b_tilde,
        c_hat: report.c_hat,
        c_tilde: report.c_tilde,
        theta_hat_error: (&start.theta_hat - &data.beta).norm(),
        theta_tilde_error: (&start.theta_tilde - &data.beta).norm(),
        theta_hat_max_error: max_hat,
        theta_tilde_max_error: max_tilde,
        sigma2_hat: start.sigma2_hat,
        sigma2_tilde: start.sigma2_tilde,
        covered_hat: max_hat <= report.c_hat,
        covered_tilde: max_tilde <= report.c_tilde,
    })
}
