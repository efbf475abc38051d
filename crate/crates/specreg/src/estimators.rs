//! Plain and debiased spectral estimators, thresholding, variance and τ
//! statistics, and the closed-form baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::filters::{FilterSpec, Method};
use crate::solvers::{run, two_pass_debias, RunOutcome, SolverConfig, StoppingRule};
use crate::spectral::{apply_spectral_filter, decompose, RegressionProblem, SpectralDecomposition};

/// `β̂_α = (1/n) V g_α(Λ²/n) Λ Uᵀ Y`.
pub fn estimate_spectral(
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    y: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    apply_spectral_filter(dec, |l| spec.generator_value(l), y, n)
}

/// `β̃_α` from the closed form `(1 + r_α) g_α`.
pub fn debias_spectral(
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    y: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    apply_spectral_filter(dec, |l| spec.debiased_generator_value(l), y, n)
}

/// `β̃ = β̂ + r_α(XᵀX/n) β̂` for an arbitrary `β̂`.
///
/// Components of `β̂` outside the row space of `X` see `r = 1` (the limit
/// `λ → 0`), except for least squares where `r ≡ 0`.
pub fn debias_estimate(
    dec: &SpectralDecomposition,
    spec: &FilterSpec,
    beta_hat: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    let nf = n as f64;
    let r = dec
        .singular_values
        .iter()
        .map(|s| spec.bias_value(s * s / nf))
        .collect::<Result<Vec<_>>>()?;
    let null_bias = if spec.method == Method::LeastSquares { 0.0 } else { 1.0 };
    let correction = dec.apply_in_coefficient_space(&r, beta_hat, null_bias)?;
    Ok(beta_hat + correction)
}

/// Keep entries with `|β_i| > b` (strict). Returns the thresholded vector and kept indices.
pub fn threshold(beta: &DVector<f64>, b_n: f64) -> Result<(DVector<f64>, Vec<usize>)> {
    if !(b_n >= 0.0) {
        return input(format!("threshold must be nonnegative, got {b_n}"));
    }
    let mut theta = DVector::zeros(beta.len());
    let mut kept = Vec::new();
    for (i, &v) in beta.iter().enumerate() {
        if v.abs() > b_n {
            theta[i] = v;
            kept.push(i);
        }
    }
    Ok((theta, kept))
}

/// `(1/n) ‖Y − Xθ‖²`.
pub fn residual_variance(problem: &RegressionProblem, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != problem.p() {
        return input("coefficient length differs from the number of columns");
    }
    let resid = problem.y() - problem.x() * theta;
    Ok(resid.norm_squared() / problem.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    /// Normalizer for the debiased estimator.
    Debiased,
    /// Normalizer for the plain estimator.
    Plain,
}

/// Per-coordinate normalizers of the max statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauVector {
    pub values: Vec<f64>,
    pub kind: TauKind,
}

/// `τ_i = √(Σ_k v_{ik}² (1+r)² g² λ_k/n² + 1/n)`, spectral functions at `λ_k/n`.
pub fn tau_debiased(dec: &SpectralDecomposition, spec: &FilterSpec, n: usize) -> Result<TauVector> {
    tau_with(dec, n, TauKind::Debiased, |l| spec.debiased_generator_value(l))
}

/// `τ*_i`, the same without the `(1 + r)` factor.
pub fn tau_plain(dec: &SpectralDecomposition, spec: &FilterSpec, n: usize) -> Result<TauVector> {
    tau_with(dec, n, TauKind::Plain, |l| spec.generator_value(l))
}

fn tau_with<F>(dec: &SpectralDecomposition, n: usize, kind: TauKind, h: F) -> Result<TauVector>
where
    F: Fn(f64) -> Result<f64>,
{
    if n == 0 {
        return input("n must be positive");
    }
    let nf = n as f64;
    let weights = dec
        .singular_values
        .iter()
        .map(|&s| {
            let lam = s * s;
            let hv = h(lam / nf)?;
            Ok(hv * hv * lam / (nf * nf))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = (0..dec.p())
        .map(|i| {
            let acc: f64 = dec
                .v
                .row(i)
                .iter()
                .zip(&weights)
                .map(|(v, w)| v * v * w)
                .sum();
            (acc + 1.0 / nf).sqrt()
        })
        .collect();
    Ok(TauVector { values, kind })
}

/// How an estimate is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitter {
    /// Closed form on the thin SVD.
    Spectral(FilterSpec),
    /// Iterative solver with a stopping rule; debiased by the two-pass scheme.
    Iterative {
        config: SolverConfig,
        stop: StoppingRule,
    },
}

/// Everything produced by one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBundle {
    /// Filter realized by the fit (for iterative fits, the one identified with `k₀`).
    pub spec: Option<FilterSpec>,
    pub beta_hat: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub n_hat: Vec<usize>,
    pub n_tilde: Vec<usize>,
    pub b_n: f64,
    pub k0: Option<usize>,
    pub residual_history: Option<Vec<f64>>,
    pub sigma2_hat: f64,
    pub sigma2_tilde: f64,
}

impl EstimateBundle {
    /// Threshold both estimates at `b_n` and compute the residual variances.
    pub fn assemble(
        problem: &RegressionProblem,
        beta_hat: DVector<f64>,
        beta_tilde: DVector<f64>,
        b_n: f64,
    ) -> Result<Self> {
        let (theta_hat, n_hat) = threshold(&beta_hat, b_n)?;
        let (theta_tilde, n_tilde) = threshold(&beta_tilde, b_n)?;
        Ok(Self {
            spec: None,
            sigma2_hat: residual_variance(problem, &theta_hat)?,
            sigma2_tilde: residual_variance(problem, &theta_tilde)?,
            beta_hat: beta_hat.as_slice().to_vec(),
            beta_tilde: beta_tilde.as_slice().to_vec(),
            theta_hat: theta_hat.as_slice().to_vec(),
            theta_tilde: theta_tilde.as_slice().to_vec(),
            n_hat,
            n_tilde,
            b_n,
            k0: None,
            residual_history: None,
        })
    }

    pub fn beta_hat(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    pub fn beta_tilde(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_tilde)
    }

    pub fn theta_hat(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_hat)
    }

    pub fn theta_tilde(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_tilde)
    }
}

/// Plain and debiased estimates before thresholding.
#[derive(Debug, Clone)]
pub struct RawFit {
    pub beta_hat: DVector<f64>,
    pub beta_tilde: DVector<f64>,
    /// `None` only for an iterative fit stopped at `k₀ = 0`.
    pub spec: Option<FilterSpec>,
    pub run: Option<RunOutcome>,
}

/// Fit `problem` without thresholding.
pub fn fit_raw(problem: &RegressionProblem, fitter: &Fitter) -> Result<RawFit> {
    match fitter {
        Fitter::Spectral(spec) => {
            let dec = decompose(problem)?;
            Ok(RawFit {
                beta_hat: estimate_spectral(&dec, spec, problem.y(), problem.n())?,
                beta_tilde: debias_spectral(&dec, spec, problem.y(), problem.n())?,
                spec: Some(*spec),
                run: None,
            })
        }
        Fitter::Iterative { config, stop } => {
            let outcome = run(problem, config, stop)?;
            let k0 = outcome.k0;
            let (beta_tilde, spec) = if k0 == 0 {
                (DVector::zeros(problem.p()), None)
            } else {
                (
                    two_pass_debias(problem, config, k0)?,
                    Some(config.filter_at(k0, problem.n())?),
                )
            };
            Ok(RawFit {
                beta_hat: outcome.state.beta.clone(),
                beta_tilde,
                spec,
                run: Some(outcome),
            })
        }
    }
}

/// Fit, debias, threshold at `b_n`, and collect the bundle.
pub fn fit(problem: &RegressionProblem, fitter: &Fitter, b_n: f64) -> Result<EstimateBundle> {
    let raw = fit_raw(problem, fitter)?;
    let mut bundle = EstimateBundle::assemble(problem, raw.beta_hat, raw.beta_tilde, b_n)?;
    bundle.spec = raw.spec;
    if let Some(outcome) = raw.run {
        bundle.k0 = Some(outcome.k0);
        bundle.residual_history = Some(outcome.state.history);
    }
    Ok(bundle)
}

/// Closed-form comparison estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// Minimum-norm least squares.
    LeastSquares,
    /// Keep the `k_r` largest singular modes.
    SpectralCutoff { k_r: usize },
    /// `(XᵀX + αI)⁻¹ XᵀY`; `α = 0` is least squares.
    Ridge { alpha: f64 },
    /// `argmin (1/2n)‖Y − Xβ‖² + α‖β‖₁`.
    Lasso { alpha: f64 },
}

/// Evaluate a baseline estimator.
pub fn baseline_estimate(kind: Baseline, problem: &RegressionProblem) -> Result<DVector<f64>> {
    match kind {
        Baseline::Lasso { alpha } => {
            let fit = lasso(problem, alpha, &LassoOptions::default(), None)?;
            if !fit.converged {
                return Err(Error::Contract(format!(
                    "lasso did not converge after {} sweeps (stationarity gap {:e})",
                    fit.iterations, fit.gap
                )));
            }
            Ok(fit.beta)
        }
        other => {
            let dec = decompose(problem)?;
            baseline_on_decomposition(other, &dec, problem.y())
        }
    }
}

/// Spectral baselines reusing an existing decomposition.
pub fn baseline_on_decomposition(
    kind: Baseline,
    dec: &SpectralDecomposition,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m: Vec<f64> = match kind {
        Baseline::LeastSquares => dec.singular_values.iter().map(|s| 1.0 / s).collect(),
        Baseline::SpectralCutoff { k_r } => dec
            .singular_values
            .iter()
            .enumerate()
            .map(|(i, s)| if i < k_r { 1.0 / s } else { 0.0 })
            .collect(),
        Baseline::Ridge { alpha } => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return input("ridge alpha must be finite and nonnegative");
            }
            dec.singular_values
                .iter()
                .map(|s| s / (s * s + alpha))
                .collect()
        }
        Baseline::Lasso { .. } => return input("lasso has no spectral form"),
    };
    dec.apply_multiplier(&m, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stationarity tolerance, relative to `max(1, ‖XᵀY‖_∞/n)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Final gradient-mapping norm (sup norm).
    pub gap: f64,
    pub converged: bool,
}

/// Accelerated proximal gradient with adaptive restart.
pub fn lasso(
    problem: &RegressionProblem,
    alpha: f64,
    options: &LassoOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    let op = LassoOperator::new(problem)?;
    op.solve(alpha, options, warm_start)
}

/// Reusable pieces of the lasso problem for solving along an α path.
pub struct LassoOperator {
    gram: Option<DMatrix<f64>>,
    x: DMatrix<f64>,
    xty: DVector<f64>,
    n: f64,
    lipschitz: f64,
}

impl LassoOperator {
    pub fn new(problem: &RegressionProblem) -> Result<Self> {
        let x = problem.x().clone();
        let n = problem.n() as f64;
        let gram = (x.ncols() <= 2 * x.nrows()).then(|| x.tr_mul(&x));
        let xty = x.tr_mul(problem.y());
        let smax = x.clone().singular_values().max();
        if smax <= 0.0 {
            return Err(Error::RankZero);
        }
        Ok(Self {
            gram,
            lipschitz: smax * smax / n,
            x,
            xty,
            n,
        })
    }

    /// `∇f(β) = (XᵀXβ − XᵀY)/n`.
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let xtx_b = match &self.gram {
            Some(g) => g * beta,
            None => self.x.tr_mul(&(&self.x * beta)),
        };
        (xtx_b - &self.xty) / self.n
    }

    pub fn solve(
        &self,
        alpha: f64,
        options: &LassoOptions,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<LassoFit> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return input("lasso alpha must be finite and nonnegative");
        }
        let p = self.xty.len();
        let step = 1.0 / self.lipschitz;
        let shrink = alpha * step;
        let scale = (self.xty.amax() / self.n).max(1.0);
        let target = options.tol * scale;

        let mut beta = match warm_start {
            Some(w) if w.len() == p => w.clone(),
            Some(_) => return input("warm start has the wrong length"),
            None => DVector::zeros(p),
        };
        let mut z = beta.clone();
        let mut momentum = 1.0f64;
        let mut gap = f64::INFINITY;
        for it in 1..=options.max_iter {
            let grad = self.gradient(&z);
            let mut next = &z - grad * step;
            next.apply(|v| *v = soft(*v, shrink));
            gap = (&z - &next).amax() * self.lipschitz;
            if gap <= target {
                return Ok(LassoFit {
                    beta: next,
                    iterations: it,
                    gap,
                    converged: true,
                });
            }
            // Restart when the momentum direction opposes the step.
            if (&z - &next).dot(&(&next - &beta)) > 0.0 {
                momentum = 1.0;
                z = next.clone();
                beta = next;
                continue;
            }
            let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            z = &next + (&next - &beta) * ((momentum - 1.0) / m_next);
            beta = next;
            momentum = m_next;
        }
        Ok(LassoFit {
            beta,
            iterations: options.max_iter,
            gap,
            converged: false,
        })
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
