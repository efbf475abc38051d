//! Synthetic data, experiment runners and threshold sweeps.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::estimators::{
    debias_spectral, estimate_spectral, fit_raw, threshold, Fitter, LassoOperator, LassoOptions,
};
use crate::filters::{FilterSpec, Method};
use crate::solvers::{Scheme, SolverConfig, StoppingRule};
use crate::spectral::{condition_number, thin_svd, RegressionProblem, SpectralDecomposition, DEFAULT_RANK_TOL};

const STREAM_DESIGN: u64 = 1;
const STREAM_BETA: u64 = 2;
const STREAM_ERRORS: u64 = 3;
const STREAM_SPLIT: u64 = 0x5eed;

/// Margin applied to the reshaped spectrum so rounding cannot pull the
/// realized condition number below the target.
const COND_MARGIN: f64 = 1e-8;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed `index` of `master`, independent of evaluation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(STREAM_SPLIT);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Row covariance and optional spectrum reshaping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    #[serde(default = "default_cov_diag")]
    pub cov_diag: f64,
    #[serde(default = "default_cov_offdiag")]
    pub cov_offdiag: f64,
    #[serde(default)]
    pub cond_target: Option<f64>,
    #[serde(default)]
    pub reshape: Reshape,
}

/// How singular values are adjusted to reach `cond_target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reshape {
    /// Lower only the smallest singular value, and only when the condition
    /// number is below the target.
    #[default]
    SmallestOnly,
    /// Replace the whole spectrum by a log-linear ramp from `σ_max` to
    /// `σ_max / cond_target`.
    LogLinear,
}

fn default_cov_diag() -> f64 {
    2.0
}

fn default_cov_offdiag() -> f64 {
    0.5
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            cov_diag: 2.0,
            cov_offdiag: 0.5,
            cond_target: Some(1e4),
            reshape: Reshape::SmallestOnly,
        }
    }
}

/// Rows i.i.d. `N(0, Σ)` with `Σ = (d − o)I + o11ᵀ`, reshaped so the
/// condition number is at least `cond_target` when one is given.
pub fn gen_design(
    n: usize,
    p: usize,
    cov_diag: f64,
    cov_offdiag: f64,
    cond_target: Option<f64>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    gen_design_with(n, p, cov_diag, cov_offdiag, cond_target, Reshape::default(), seed)
}

/// [`gen_design`] with an explicit reshaping mode.
pub fn gen_design_with(
    n: usize,
    p: usize,
    cov_diag: f64,
    cov_offdiag: f64,
    cond_target: Option<f64>,
    reshape: Reshape,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return input("design needs n ≥ 1 and p ≥ 1");
    }
    if !(cov_offdiag >= 0.0 && cov_diag > cov_offdiag && cov_diag.is_finite()) {
        return input("covariance must satisfy cov_diag > cov_offdiag ≥ 0");
    }
    if let Some(c) = cond_target {
        if !(c > 1.0 && c.is_finite()) {
            return input("cond_target must be finite and greater than 1");
        }
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { cov_diag } else { cov_offdiag });
    let chol = sigma
        .cholesky()
        .expect("diagonally dominant covariance is positive definite");
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let z = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let x = z * chol.l().transpose();
    match cond_target {
        None => Ok(x),
        Some(c) => Ok(reshape_spectrum(x, c, reshape)),
    }
}

fn reshape_spectrum(x: DMatrix<f64>, cond: f64, mode: Reshape) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut sv = svd.singular_values;
    let r = sv.len();
    let smax = sv.max();
    let target = cond * (1.0 + COND_MARGIN);
    // nalgebra does not sort singular values; rank them first.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    match mode {
        Reshape::SmallestOnly => {
            let last = order[r - 1];
            if r > 1 && sv[last] * target > smax {
                sv[last] = smax / target;
            } else {
                return x;
            }
        }
        Reshape::LogLinear => {
            for (rank, &i) in order.iter().enumerate() {
                let frac = if r == 1 { 0.0 } else { rank as f64 / (r - 1) as f64 };
                sv[i] = smax * target.powf(-frac);
            }
        }
    }
    u * DMatrix::from_diagonal(&sv) * v_t
}

/// How the true coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    /// Twenty nonzeros: five each of 2, −2, 1, −1.
    Sparse20,
    /// Every entry uniform on [−2, 2].
    Uniform,
}

/// Sparse truth with the multiset `{2×5, −2×5, 1×5, −1×5}` at random positions.
pub fn gen_sparse_beta(p: usize, seed: u64) -> Result<DVector<f64>> {
    if p < 20 {
        return input(format!("sparse truth needs p ≥ 20, got {p}"));
    }
    let mut rng = stream_rng(seed, STREAM_BETA);
    let positions = sample(&mut rng, p, 20);
    let mut beta = DVector::zeros(p);
    for (slot, pos) in positions.iter().enumerate() {
        beta[pos] = [2.0, -2.0, 1.0, -1.0][slot / 5];
    }
    Ok(beta)
}

/// Dense truth, entries uniform on [−2, 2].
pub fn gen_uniform_beta(p: usize, seed: u64) -> Result<DVector<f64>> {
    if p == 0 {
        return input("p must be positive");
    }
    let mut rng = stream_rng(seed, STREAM_BETA);
    Ok(DVector::from_fn(p, |_, _| rng.random_range(-2.0..=2.0)))
}

pub fn gen_beta(kind: BetaKind, p: usize, seed: u64) -> Result<DVector<f64>> {
    match kind {
        BetaKind::Sparse20 => gen_sparse_beta(p, seed),
        BetaKind::Uniform => gen_uniform_beta(p, seed),
    }
}

/// Error distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDist {
    Normal { variance: f64 },
    Laplace { scale: f64 },
}

impl ErrorDist {
    pub fn variance(&self) -> f64 {
        match *self {
            ErrorDist::Normal { variance } => variance,
            ErrorDist::Laplace { scale } => 2.0 * scale * scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            ErrorDist::Normal { variance } => variance,
            ErrorDist::Laplace { scale } => scale,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return input("error distribution parameter must be finite and nonnegative");
        }
        Ok(())
    }
}

impl Default for ErrorDist {
    fn default() -> Self {
        ErrorDist::Normal { variance: 4.0 }
    }
}

/// I.i.d. errors; Laplace draws use the inverse CDF.
pub fn gen_errors(n: usize, dist: ErrorDist, seed: u64) -> Result<DVector<f64>> {
    if n == 0 {
        return input("n must be positive");
    }
    dist.validate()?;
    let mut rng = stream_rng(seed, STREAM_ERRORS);
    Ok(match dist {
        ErrorDist::Normal { variance } => {
            let sd = variance.sqrt();
            DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
        }
        ErrorDist::Laplace { scale } => DVector::from_fn(n, |_, _| {
            let u: f64 = rng.random::<f64>() - 0.5;
            -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
        }),
    })
}

/// Problem size, design, truth and noise for one synthetic data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_beta_kind")]
    pub beta_kind: BetaKind,
    #[serde(default)]
    pub error_dist: ErrorDist,
}

fn default_beta_kind() -> BetaKind {
    BetaKind::Sparse20
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return input("n and p must be positive");
        }
        if self.beta_kind == BetaKind::Sparse20 && self.p < 20 {
            return input("sparse truth needs p ≥ 20");
        }
        self.error_dist.validate()
    }
}

/// One realized data set.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub problem: RegressionProblem,
    pub beta: DVector<f64>,
    pub errors: DVector<f64>,
}

/// Draw design, truth and errors from `seed`.
pub fn generate(config: &DataConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let d = config.design;
    let x = gen_design_with(config.n, config.p, d.cov_diag, d.cov_offdiag, d.cond_target, d.reshape, seed)?;
    let beta = gen_beta(config.beta_kind, config.p, seed)?;
    let errors = gen_errors(config.n, config.error_dist, seed)?;
    let y = &x * &beta + &errors;
    let problem = RegressionProblem::new(x, y)?.with_noise_scale(config.error_dist.variance().sqrt())?;
    Ok(SyntheticData {
        problem,
        beta,
        errors,
    })
}

/// Step size, absolute or relative to `1/‖X‖₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Absolute(f64),
    Relative(f64),
}

impl StepSize {
    pub fn resolve(&self, spectral_norm_sq: f64) -> f64 {
        match *self {
            StepSize::Absolute(dt) => dt,
            StepSize::Relative(c) => c / spectral_norm_sq,
        }
    }
}

/// Stopping rule as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopConfig {
    /// `‖e‖` is the realized noise norm of the synthetic data.
    Discrepancy { varsigma: f64, k_max: usize },
    AdjustedOptimal { k_min: usize, k_max: usize },
    Fixed { k: usize },
}

impl StopConfig {
    fn build(&self, data: &SyntheticData) -> StoppingRule {
        match *self {
            StopConfig::Discrepancy { varsigma, k_max } => {
                StoppingRule::discrepancy(varsigma, data.errors.norm(), k_max)
            }
            StopConfig::AdjustedOptimal { k_min, k_max } => {
                StoppingRule::adjusted_optimal(data.beta.clone(), k_min, k_max)
            }
            StopConfig::Fixed { k } => StoppingRule::fixed(k),
        }
    }
}

/// Evenly spaced grid `start + i·step`, `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Iterative fit with a stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeMethod {
    #[serde(flatten)]
    pub scheme: Scheme,
    pub step: StepSize,
    pub stop: StopConfig,
}

/// A method entry in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Iterative(IterativeMethod),
    /// Closed form at a fixed scaled α.
    Spectral(FilterSpec),
    LeastSquares,
    /// Raw ridge penalty `(XᵀX + αI)⁻¹XᵀY`, α picked by oracle error on the grid.
    RidgeGrid(Grid),
    /// Number of retained modes picked by oracle error.
    CutoffOracle,
    /// Lasso `(1/2n)‖Y − Xβ‖² + α‖β‖₁`, α picked by oracle error on the grid.
    LassoGrid { grid: Grid, max_iter: usize },
}

impl MethodConfig {
    pub fn name(&self) -> String {
        match self {
            MethodConfig::Iterative(m) => m.scheme.name().to_string(),
            MethodConfig::Spectral(spec) => spec.method.name().to_string(),
            MethodConfig::LeastSquares => "least_squares".into(),
            MethodConfig::RidgeGrid(_) => "ridge".into(),
            MethodConfig::CutoffOracle => "spectral_cutoff".into(),
            MethodConfig::LassoGrid { .. } => "lasso".into(),
        }
    }
}

/// Plain and debiased estimates with what was selected to produce them.
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub beta_hat: DVector<f64>,
    /// Absent for lasso, which has no debiased form.
    pub beta_tilde: Option<DVector<f64>>,
    /// Spectral filter realized by the fit, when one exists.
    pub spec: Option<FilterSpec>,
    pub k0: Option<usize>,
    pub alpha: Option<f64>,
    pub k_r: Option<usize>,
}

/// Fit one configured method on synthetic data.
pub fn fit_method(
    method: &MethodConfig,
    data: &SyntheticData,
    dec: &SpectralDecomposition,
) -> Result<MethodFit> {
    let problem = &data.problem;
    let n = problem.n();
    let y = problem.y();
    let mut out = MethodFit {
        beta_hat: DVector::zeros(problem.p()),
        beta_tilde: None,
        spec: None,
        k0: None,
        alpha: None,
        k_r: None,
    };
    match method {
        MethodConfig::Iterative(m) => {
            let dt = m.step.resolve(dec.singular_values[0].powi(2));
            let config = SolverConfig::new(m.scheme, dt)?;
            let raw = fit_raw(
                problem,
                &Fitter::Iterative {
                    config,
                    stop: m.stop.build(data),
                },
            )?;
            out.k0 = raw.run.as_ref().map(|r| r.k0);
            out.beta_hat = raw.beta_hat;
            out.beta_tilde = Some(raw.beta_tilde);
            out.spec = raw.spec;
        }
        MethodConfig::Spectral(spec) => {
            out.beta_hat = estimate_spectral(dec, spec, y, n)?;
            out.beta_tilde = Some(debias_spectral(dec, spec, y, n)?);
            out.spec = Some(*spec);
            out.alpha = Some(spec.alpha);
        }
        MethodConfig::LeastSquares => {
            let spec = FilterSpec::least_squares();
            out.beta_hat = estimate_spectral(dec, &spec, y, n)?;
            out.beta_tilde = Some(out.beta_hat.clone());
            out.spec = Some(spec);
        }
        MethodConfig::RidgeGrid(grid) => {
            let alpha = ridge_oracle(dec, y, &data.beta, &grid.values())?;
            let spec = if alpha > 0.0 {
                FilterSpec::new(Method::Ridge, alpha / n as f64)?
            } else {
                FilterSpec::least_squares()
            };
            out.beta_hat = estimate_spectral(dec, &spec, y, n)?;
            out.beta_tilde = Some(debias_spectral(dec, &spec, y, n)?);
            out.spec = Some(spec);
            out.alpha = Some(alpha);
        }
        MethodConfig::CutoffOracle => {
            let k_r = cutoff_oracle(dec, y, &data.beta);
            let cut = dec.singular_values[k_r - 1].powi(2) / n as f64;
            let spec = FilterSpec::new(Method::SpectralCutoff, cut)?;
            out.beta_hat = estimate_spectral(dec, &spec, y, n)?;
            out.beta_tilde = Some(debias_spectral(dec, &spec, y, n)?);
            out.spec = Some(spec);
            out.k_r = Some(k_r);
        }
        MethodConfig::LassoGrid { grid, max_iter } => {
            let (alpha, beta) = lasso_oracle(problem, &data.beta, &grid.values(), *max_iter)?;
            out.beta_hat = beta;
            out.alpha = Some(alpha);
        }
    }
    Ok(out)
}

/// Coefficients of `y` and `β` in the right singular basis, plus `‖β‖²` outside it.
fn spectral_coordinates(
    dec: &SpectralDecomposition,
    y: &DVector<f64>,
    beta: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, f64) {
    let c = dec.u.tr_mul(y);
    let b = dec.v.tr_mul(beta);
    let null = (beta.norm_squared() - b.norm_squared()).max(0.0);
    (c, b, null)
}

/// Grid value of the raw ridge penalty minimizing `‖β̂ − β‖` (first on ties).
pub fn ridge_oracle(
    dec: &SpectralDecomposition,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|a| !(*a >= 0.0)) {
        return input("ridge grid must be nonempty and nonnegative");
    }
    let (c, b, null) = spectral_coordinates(dec, y, beta);
    let mut best = (f64::INFINITY, grid[0]);
    for &alpha in grid {
        let err: f64 = dec
            .singular_values
            .iter()
            .zip(c.iter().zip(b.iter()))
            .map(|(s, (ck, bk))| (s * ck / (s * s + alpha) - bk).powi(2))
            .sum::<f64>()
            + null;
        if err < best.0 {
            best = (err, alpha);
        }
    }
    Ok(best.1)
}

/// Number of leading modes minimizing `‖β̂ − β‖` (smallest on ties).
pub fn cutoff_oracle(dec: &SpectralDecomposition, y: &DVector<f64>, beta: &DVector<f64>) -> usize {
    let (c, b, _) = spectral_coordinates(dec, y, beta);
    // err(k) − const = Σ_{j<k} (c_j/s_j − b_j)² − b_j²
    let mut acc = 0.0;
    let mut best = (f64::INFINITY, 1);
    for k in 0..dec.rank() {
        let coef = c[k] / dec.singular_values[k];
        acc += (coef - b[k]).powi(2) - b[k] * b[k];
        if acc < best.0 {
            best = (acc, k + 1);
        }
    }
    best.1
}

/// Lasso along a decreasing α path with warm starts; returns the oracle α and estimate.
pub fn lasso_oracle(
    problem: &RegressionProblem,
    truth: &DVector<f64>,
    grid: &[f64],
    max_iter: usize,
) -> Result<(f64, DVector<f64>)> {
    if grid.is_empty() {
        return input("lasso grid must be nonempty");
    }
    let op = LassoOperator::new(problem)?;
    let options = LassoOptions {
        max_iter,
        ..LassoOptions::default()
    };
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut warm: Option<DVector<f64>> = None;
    let mut fits: Vec<Option<(f64, DVector<f64>)>> = vec![None; grid.len()];
    for i in order {
        let fit = op.solve(grid[i], &options, warm.as_ref())?;
        let err = (&fit.beta - truth).norm();
        warm = Some(fit.beta.clone());
        fits[i] = Some((err, fit.beta));
    }
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for (i, f) in fits.into_iter().enumerate() {
        let (err, beta) = f.expect("every grid point solved");
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, grid[i], beta));
        }
    }
    let (_, alpha, beta) = best.expect("nonempty grid");
    Ok((alpha, beta))
}

/// Error of the thresholded estimate along a grid of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub grid: Vec<f64>,
    pub curve: Vec<f64>,
    /// Smallest minimizing threshold.
    pub optimal_b: f64,
    pub optimal_error: f64,
    /// Contiguous run of minimizing grid points starting at `optimal_b`.
    pub plateau: (f64, f64),
}

impl Sweep {
    /// Threshold at percentile `q ∈ [0, 100]` of the minimizing plateau.
    pub fn plateau_percentile(&self, q: f64) -> f64 {
        let (lo, hi) = self.plateau;
        lo + (hi - lo) * q.clamp(0.0, 100.0) / 100.0
    }
}

/// `‖threshold(β̂, b) − β‖` for each `b` in `grid`.
pub fn threshold_sweep(beta_hat: &DVector<f64>, truth: &DVector<f64>, grid: &[f64]) -> Result<Sweep> {
    if grid.is_empty() {
        return input("threshold grid must be nonempty");
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return input("threshold grid must be sorted ascending");
    }
    if beta_hat.len() != truth.len() {
        return input("estimate and truth differ in length");
    }
    let curve = grid
        .iter()
        .map(|&b| Ok((threshold(beta_hat, b)?.0 - truth).norm()))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &e) in curve.iter().enumerate() {
        if e < curve[best] {
            best = i;
        }
    }
    let mut end = best;
    while end + 1 < curve.len() && curve[end + 1] == curve[best] {
        end += 1;
    }
    Ok(Sweep {
        optimal_b: grid[best],
        optimal_error: curve[best],
        plateau: (grid[best], grid[end]),
        grid: grid.to_vec(),
        curve,
    })
}

/// Thresholds `0, step, …` up to the first multiple of `step` at or above `max|β̂|`.
pub fn threshold_grid(beta_hat: &DVector<f64>, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return input("threshold step must be positive");
    }
    let top = beta_hat.amax();
    let count = (top / step).ceil() as usize + 1;
    Ok((0..count).map(|i| i as f64 * step).collect())
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub methods: Vec<MethodConfig>,
    #[serde(default = "default_threshold_step")]
    pub threshold_step: f64,
    pub seed: u64,
    /// Independent data sets; replicate `r` uses `derive_seed(seed, r)`.
    #[serde(default = "one")]
    pub replicates: usize,
}

fn default_threshold_step() -> f64 {
    5e-4
}

fn one() -> usize {
    1
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.methods.is_empty() {
            return input("at least one method is required");
        }
        if self.replicates == 0 {
            return input("replicates must be at least 1");
        }
        if !(self.threshold_step > 0.0) {
            return input("threshold_step must be positive");
        }
        Ok(())
    }
}

/// Errors and selections for one method on one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub k0: Option<usize>,
    pub alpha: Option<f64>,
    pub k_r: Option<usize>,
    pub beta_hat_error: Option<f64>,
    pub beta_tilde_error: Option<f64>,
    pub theta_hat_error: Option<f64>,
    pub theta_tilde_error: Option<f64>,
    pub b_n_hat: Option<f64>,
    pub b_n_tilde: Option<f64>,
    /// Selected set at the optimal threshold equals the true support.
    pub support_hat_exact: Option<bool>,
    pub support_tilde_exact: Option<bool>,
    /// Some threshold keeps exactly the true support.
    pub separable_hat: Option<bool>,
    pub separable_tilde: Option<bool>,
    pub failure: Option<String>,
}

impl MethodReport {
    fn failed(method: String, message: String) -> Self {
        Self {
            method,
            k0: None,
            alpha: None,
            k_r: None,
            beta_hat_error: None,
            beta_tilde_error: None,
            theta_hat_error: None,
            theta_tilde_error: None,
            b_n_hat: None,
            b_n_tilde: None,
            support_hat_exact: None,
            support_tilde_exact: None,
            separable_hat: None,
            separable_tilde: None,
            failure: Some(message),
        }
    }
}

/// Results for one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub noise_norm: f64,
    pub condition_number: f64,
    pub methods: Vec<MethodReport>,
    /// Wall-clock time; not serialized so reports stay byte-reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

fn support(v: &DVector<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `min_{i∈S} |β̂_i| > max_{i∉S} |β̂_i|`, i.e. thresholding can return exactly `S`.
pub fn separates(beta_hat: &DVector<f64>, support: &[usize]) -> bool {
    let mut inside = f64::INFINITY;
    let mut outside = 0.0f64;
    let mut next = support.iter().peekable();
    for (i, v) in beta_hat.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            inside = inside.min(v.abs());
        } else {
            outside = outside.max(v.abs());
        }
    }
    inside > outside
}

/// Fit every configured method on the data drawn from `seed`.
pub fn run_case(config: &SimulationConfig, seed: u64) -> Result<SimulationReport> {
    config.validate()?;
    let start = Instant::now();
    let data = generate(&config.data, seed)?;
    let dec = thin_svd(data.problem.x(), DEFAULT_RANK_TOL)?;
    let truth_support = support(&data.beta);
    let methods = config
        .methods
        .iter()
        .map(|m| {
            let name = m.name();
            match report_method(m, &data, &dec, config.threshold_step, &truth_support) {
                Ok(r) => r,
                Err(e) => MethodReport::failed(name, e.to_string()),
            }
        })
        .collect();
    Ok(SimulationReport {
        seed,
        n: config.data.n,
        p: config.data.p,
        noise_norm: data.errors.norm(),
        condition_number: condition_number(&dec)?,
        methods,
        runtime: start.elapsed(),
    })
}

fn report_method(
    method: &MethodConfig,
    data: &SyntheticData,
    dec: &SpectralDecomposition,
    step: f64,
    truth_support: &[usize],
) -> Result<MethodReport> {
    let fit = fit_method(method, data, dec)?;
    let sweep_hat = threshold_sweep(&fit.beta_hat, &data.beta, &threshold_grid(&fit.beta_hat, step)?)?;
    let kept_hat = threshold(&fit.beta_hat, sweep_hat.optimal_b)?.1;
    let mut report = MethodReport {
        method: method.name(),
        k0: fit.k0,
        alpha: fit.alpha,
        k_r: fit.k_r,
        beta_hat_error: Some((&fit.beta_hat - &data.beta).norm()),
        beta_tilde_error: None,
        theta_hat_error: Some(sweep_hat.optimal_error),
        theta_tilde_error: None,
        b_n_hat: Some(sweep_hat.optimal_b),
        b_n_tilde: None,
        support_hat_exact: Some(kept_hat == truth_support),
        support_tilde_exact: None,
        separable_hat: Some(separates(&fit.beta_hat, truth_support)),
        separable_tilde: None,
        failure: None,
    };
    if let Some(tilde) = &fit.beta_tilde {
        let sweep = threshold_sweep(tilde, &data.beta, &threshold_grid(tilde, step)?)?;
        let kept = threshold(tilde, sweep.optimal_b)?.1;
        report.beta_tilde_error = Some((tilde - &data.beta).norm());
        report.theta_tilde_error = Some(sweep.optimal_error);
        report.b_n_tilde = Some(sweep.optimal_b);
        report.support_tilde_exact = Some(kept == truth_support);
        report.separable_tilde = Some(separates(tilde, truth_support));
    }
    Ok(report)
}

/// All replicates of an experiment, run in parallel, in replicate order.
pub fn run_experiment(config: &SimulationConfig) -> Result<Vec<SimulationReport>> {
    config.validate()?;
    (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = if config.replicates == 1 {
                config.seed
            } else {
                derive_seed(config.seed, r as u64)
            };
            run_case(config, seed)
        })
        .collect()
}

/// Table with one row per method, columns mirroring the published layout.
pub fn table_csv(report: &SimulationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| crate::Error::Parse {
        path: "<table>".into(),
        message: e.to_string(),
    };
    w.write_record([
        "method",
        "beta_hat_error",
        "k0",
        "beta_tilde_error",
        "theta_hat_error",
        "theta_tilde_error",
        "b_n_hat",
        "b_n_tilde",
    ])
    .map_err(io)?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in &report.methods {
        w.write_record([
            m.method.clone(),
            f(m.beta_hat_error),
            m.k0.map(|k| k.to_string()).unwrap_or_default(),
            f(m.beta_tilde_error),
            f(m.theta_hat_error),
            f(m.theta_tilde_error),
            f(m.b_n_hat),
            f(m.b_n_tilde),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Parse {
        path: "<table>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
