//! Generator functions `g_α(λ)` and bias functions `r_α(λ) = 1 − λ g_α(λ)`.
//!
//! All filters act on eigenvalues of `XᵀX / n`. Iteration-indexed methods
//! store their stopping index through `α`: Landweber `k = ⌊1/α⌋`,
//! Showalter `t = 1/α`, SOAR `α = ρ/t²`, HBF `t = 1/α`, FAR `α = 1/t^ϑ`,
//! AR^κ `α = (κ+1)/t^{κ+1}` and Nesterov `α = 1/k²`.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::special::{gegenbauer_normalized, mittag_leffler_neg, normalized_bessel};

/// Relative slack when converting `1/α` back to an integer step count.
const INDEX_SLACK: f64 = 1e-9;

/// Regularization method and its α-independent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    LeastSquares,
    SpectralCutoff,
    Ridge,
    Landweber { dt: f64 },
    Showalter,
    Soar { s_star: f64, rho: f64 },
    HeavyBall { eta: f64 },
    Fractional { vartheta: f64 },
    Accelerated { kappa: f64 },
    Nesterov { dt: f64, omega: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::LeastSquares => "least_squares",
            Method::SpectralCutoff => "spectral_cutoff",
            Method::Ridge => "ridge",
            Method::Landweber { .. } => "landweber",
            Method::Showalter => "showalter",
            Method::Soar { .. } => "soar",
            Method::HeavyBall { .. } => "heavy_ball",
            Method::Fractional { .. } => "fractional",
            Method::Accelerated { .. } => "accelerated",
            Method::Nesterov { .. } => "nesterov",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                input(format!("{what} must be positive and finite, got {v}"))
            }
        };
        match *self {
            Method::LeastSquares | Method::SpectralCutoff | Method::Ridge | Method::Showalter => {
                Ok(())
            }
            Method::Landweber { dt } => positive(dt, "dt"),
            Method::Soar { s_star, rho } => {
                if !(s_star > -0.5 && s_star.is_finite()) {
                    return input(format!("s_star must exceed -1/2, got {s_star}"));
                }
                positive(rho, "rho")
            }
            Method::HeavyBall { eta } => positive(eta, "eta"),
            Method::Fractional { vartheta } => {
                if vartheta > 0.0 && vartheta < 2.0 {
                    Ok(())
                } else {
                    input(format!("vartheta must lie in (0, 2), got {vartheta}"))
                }
            }
            Method::Accelerated { kappa } => {
                if kappa > -1.0 && kappa.is_finite() {
                    Ok(())
                } else {
                    input(format!("kappa must exceed -1, got {kappa}"))
                }
            }
            Method::Nesterov { dt, omega } => {
                if !(omega > -1.0 && omega.is_finite()) {
                    return input(format!("omega must exceed -1, got {omega}"));
                }
                positive(dt, "dt")
            }
        }
    }

    /// One representative of every method with the default verification settings.
    pub fn catalog() -> Vec<Method> {
        vec![
            Method::LeastSquares,
            Method::SpectralCutoff,
            Method::Ridge,
            Method::Landweber { dt: 0.1 },
            Method::Showalter,
            Method::Soar {
                s_star: 0.5,
                rho: 1.0,
            },
            Method::HeavyBall { eta: 5.0 },
            Method::Fractional { vartheta: 0.5 },
            Method::Accelerated { kappa: 1.5 },
            Method::Nesterov {
                dt: 0.1,
                omega: 5.0,
            },
        ]
    }
}

/// A method together with its regularization parameter α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(flatten)]
    pub method: Method,
    pub alpha: f64,
}

/// Number of iterations encoded by `α` for methods with `k = ⌊1/α⌋`.
pub fn steps_from_inverse(inv: f64) -> u64 {
    (inv * (1.0 + INDEX_SLACK)).floor().max(0.0) as u64
}

impl FilterSpec {
    pub fn new(method: Method, alpha: f64) -> Result<Self> {
        method.validate()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return input(format!("alpha must be positive and finite, got {alpha}"));
        }
        Ok(Self { method, alpha })
    }

    /// Least squares ignores α; it is stored as 1.
    pub fn least_squares() -> Self {
        Self {
            method: Method::LeastSquares,
            alpha: 1.0,
        }
    }

    /// Landweber iterations `k = ⌊1/α⌋`.
    pub fn landweber_steps(&self) -> u64 {
        steps_from_inverse(1.0 / self.alpha)
    }

    /// Nesterov iterations from `α = 1/k²`.
    pub fn nesterov_steps(&self) -> u64 {
        steps_from_inverse(1.0 / self.alpha.sqrt())
    }

    /// `g_α(λ)`.
    pub fn generator_value(&self, lambda: f64) -> Result<f64> {
        Ok(self.evaluate(lambda)?.0)
    }

    /// `r_α(λ)`, from an independent closed form where one exists.
    pub fn bias_value(&self, lambda: f64) -> Result<f64> {
        Ok(self.evaluate(lambda)?.1)
    }

    /// `(1 + r_α(λ)) g_α(λ)`.
    pub fn debiased_generator_value(&self, lambda: f64) -> Result<f64> {
        let (g, r) = self.evaluate(lambda)?;
        Ok((1.0 + r) * g)
    }

    /// `(g_α(λ), r_α(λ))`.
    pub fn evaluate(&self, lambda: f64) -> Result<(f64, f64)> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return input(format!("lambda must be positive and finite, got {lambda}"));
        }
        let alpha = self.alpha;
        let out = match self.method {
            Method::LeastSquares => (1.0 / lambda, 0.0),
            Method::SpectralCutoff => {
                if lambda >= alpha {
                    (1.0 / lambda, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Method::Ridge => (1.0 / (lambda + alpha), alpha / (lambda + alpha)),
            Method::Landweber { dt } => landweber(self.landweber_steps(), dt, lambda),
            Method::Showalter | Method::Accelerated { .. } => exponential(lambda / alpha, lambda),
            Method::Soar { s_star, rho } => {
                let z = (rho * lambda / alpha).sqrt();
                let (lam, one_minus) = normalized_bessel(s_star, z)?;
                (one_minus / lambda, lam)
            }
            Method::HeavyBall { eta } => heavy_ball(eta, 1.0 / alpha, lambda),
            Method::Fractional { vartheta } => {
                let x = lambda / alpha;
                let r = mittag_leffler_neg(vartheta, 1.0, x)?;
                let g = mittag_leffler_neg(vartheta, vartheta + 1.0, x)? / alpha;
                (g, r)
            }
            Method::Nesterov { dt, omega } => nesterov(self.nesterov_steps(), dt, omega, lambda)?,
        };
        Ok(out)
    }
}

fn landweber(k: u64, dt: f64, lambda: f64) -> (f64, f64) {
    if k == 0 {
        return (0.0, 1.0);
    }
    if dt * lambda < 1.0 {
        // exp(k·ln(1 − Δtλ)) avoids the k·ε drift of powering a rounded q.
        let e = (k as f64) * (-dt * lambda).ln_1p();
        return (-e.exp_m1() / lambda, e.exp());
    }
    let q = 1.0 - dt * lambda;
    let r = if k <= i32::MAX as u64 {
        q.powi(k as i32)
    } else {
        q.powf(k as f64)
    };
    ((1.0 - r) / lambda, r)
}

fn exponential(x: f64, lambda: f64) -> (f64, f64) {
    (-(-x).exp_m1() / lambda, (-x).exp())
}

fn heavy_ball(eta: f64, t: f64, lambda: f64) -> (f64, f64) {
    let disc = eta * eta - 4.0 * lambda;
    let damp = (-0.5 * eta * t).exp();
    if disc.abs() < 1e-8 * eta * eta {
        let r = damp * (0.5 * eta * t + 1.0);
        let g = (1.0 - damp * (0.5 * eta * t + 1.0)) / lambda;
        (g, r)
    } else if disc > 0.0 {
        let delta = disc.sqrt();
        let slow = 2.0 * lambda / (eta + delta);
        let fast = 0.5 * (eta + delta);
        let e_slow = (-slow * t).exp();
        let e_fast = (-fast * t).exp();
        let big = (eta + delta) / (2.0 * delta);
        let small = 2.0 * lambda / ((eta + delta) * delta);
        let r = big * e_slow - small * e_fast;
        let g = (-(-slow * t).exp_m1() - small * (e_slow - e_fast)) / lambda;
        (g, r)
    } else {
        let omega = (-disc).sqrt();
        let phase = 0.5 * omega * t;
        let osc = eta / omega * phase.sin() + phase.cos();
        let r = damp * osc;
        let g = (1.0 - damp * osc) / lambda;
        (g, r)
    }
}

fn nesterov(k: u64, dt: f64, omega: f64, lambda: f64) -> Result<(f64, f64)> {
    let q = 1.0 - dt * lambda;
    let (g, r_rec) = nesterov_recursion(k, dt, omega, lambda);
    if k == 0 || !(0.0..=1.0).contains(&q) {
        return Ok((g, r_rec));
    }
    let mu = 0.5 * (omega + 1.0);
    let poly = gegenbauer_normalized((k - 1) as usize, mu, q.sqrt())?;
    let r = q.powf(0.5 * (k as f64 + 1.0)) * poly;
    Ok((g, r))
}

/// Polynomial recursion of the Nesterov iterate on a single spectral mode.
fn nesterov_recursion(k: u64, dt: f64, omega: f64, lambda: f64) -> (f64, f64) {
    if k == 0 {
        return (0.0, 1.0);
    }
    let q = 1.0 - dt * lambda;
    let (mut g_prev, mut g) = (0.0, dt);
    let (mut r_prev, mut r) = (1.0, q);
    for j in 1..k {
        let c = (j as f64 - 1.0) / (j as f64 + omega);
        let gz = g + c * (g - g_prev);
        let rz = r + c * (r - r_prev);
        g_prev = g;
        r_prev = r;
        g = gz + dt * (1.0 - lambda * gz);
        r = q * rz;
    }
    (g, r)
}

/// Outcome of checking the generator conditions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub method: String,
    /// Largest `|r_α(λ)|` at the smallest α over grid λ at or above the decay floor.
    pub d11_max_residual_bias: f64,
    /// Observed `sup |r_α(λ)|`.
    pub d12_cr: f64,
    /// Observed `sup g_α(λ)·√(λα)`.
    pub d13_c0: f64,
    /// Observed `sup g_α(λ)·λ/2`.
    pub d13_lambda: f64,
    pub qualification_ratio: Option<f64>,
    pub passed: ConditionFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub d11: bool,
    pub d12: bool,
    pub d13: bool,
}

impl ConditionFlags {
    pub fn all(&self) -> bool {
        self.d11 && self.d12 && self.d13
    }
}

/// Grid settings for [`verify_generator_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGrid {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// λ at or above which the bias must have decayed at the smallest α.
    pub decay_floor: f64,
    pub decay_tol: f64,
}

impl Default for ConditionGrid {
    fn default() -> Self {
        Self {
            lambdas: log_grid(1e-6, 10.0, 200),
            alphas: log_grid(1e-6, 1.0, 100),
            decay_floor: 1e-2,
            decay_tol: 1e-2,
        }
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Check the generator conditions for a family `(α, λ) ↦ (g, r)`.
///
/// `c0_bound = None` marks an α-free family, for which only `g ≤ 2/λ` is checked.
pub fn verify_conditions_with<F>(
    name: &str,
    family: F,
    grid: &ConditionGrid,
    c_r_bound: f64,
    c0_bound: Option<f64>,
) -> Result<ConditionReport>
where
    F: Fn(f64, f64) -> Result<(f64, f64)>,
{
    if grid.lambdas.is_empty() || grid.alphas.is_empty() {
        return input("verification grids must be nonempty");
    }
    let alpha_min = grid.alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut d11: f64 = 0.0;
    let mut d12: f64 = 0.0;
    let mut c0: f64 = 0.0;
    let mut lam2: f64 = 0.0;
    let mut d13_ok = true;
    for &alpha in &grid.alphas {
        for &lambda in &grid.lambdas {
            let (g, r) = family(alpha, lambda)?;
            d12 = d12.max(r.abs());
            let two = g * lambda / 2.0;
            lam2 = lam2.max(two);
            let scaled = g * (lambda * alpha).sqrt();
            c0 = c0.max(scaled);
            if two > 1.0 + 1e-12 {
                d13_ok = false;
            }
            if let Some(b) = c0_bound {
                if scaled > b * (1.0 + 1e-12) {
                    d13_ok = false;
                }
            }
            if alpha == alpha_min && lambda >= grid.decay_floor {
                d11 = d11.max(r.abs());
            }
        }
    }
    Ok(ConditionReport {
        method: name.to_string(),
        d11_max_residual_bias: d11,
        d12_cr: d12,
        d13_c0: c0,
        d13_lambda: lam2,
        qualification_ratio: None,
        passed: ConditionFlags {
            d11: d11 <= grid.decay_tol,
            d12: d12 <= c_r_bound * (1.0 + 1e-12),
            d13: d13_ok,
        },
    })
}

/// Check the generator conditions for `method` over α on the grid.
pub fn verify_generator_conditions(
    method: Method,
    grid: &ConditionGrid,
    c_r_bound: f64,
    c0_bound: Option<f64>,
) -> Result<ConditionReport> {
    method.validate()?;
    verify_conditions_with(
        method.name(),
        |alpha, lambda| FilterSpec { method, alpha }.evaluate(lambda),
        grid,
        c_r_bound,
        c0_bound,
    )
}

/// `max_α sup_λ |r_α(λ)| λ^d / α^d` over the grids.
pub fn verify_qualification(
    method: Method,
    d: f64,
    lambdas: &[f64],
    alphas: &[f64],
) -> Result<f64> {
    if !(d > 0.0) {
        return input("qualification order d must be positive");
    }
    method.validate()?;
    let mut worst: f64 = 0.0;
    for &alpha in alphas {
        for &lambda in lambdas {
            let r = FilterSpec { method, alpha }.bias_value(lambda)?;
            worst = worst.max(r.abs() * (lambda / alpha).powf(d));
        }
    }
    Ok(worst)
}

/// Analytic bound on `sup g_α(λ)√(λα)` used for the default verification.
///
/// `None` for least squares, which has no α.
pub fn default_c0_bound(method: Method) -> Option<f64> {
    match method {
        Method::LeastSquares => None,
        Method::SpectralCutoff => Some(1.0),
        Method::Ridge => Some(0.5),
        Method::Landweber { dt } => Some(dt.sqrt()),
        Method::Showalter | Method::Accelerated { .. } | Method::Fractional { .. } => Some(1.0),
        Method::Soar { rho, .. } => Some(rho.sqrt()),
        Method::HeavyBall { eta } => Some((2.0 / eta).sqrt().max(1.0)),
        Method::Nesterov { dt, .. } => Some(2.0 * dt.sqrt()),
    }
}

/// Check every catalog method on the default grid and attach its order-`d` qualification ratio.
pub fn verify_catalog(d: f64) -> Result<Vec<ConditionReport>> {
    let grid = ConditionGrid::default();
    Method::catalog()
        .into_iter()
        .map(|method| {
            let mut report = if method == Method::LeastSquares {
                verify_conditions_with(method.name(), |_, l| FilterSpec::least_squares().evaluate(l), &grid, 1.0, None)?
            } else {
                verify_generator_conditions(method, &grid, 1.0, default_c0_bound(method))?
            };
            report.qualification_ratio = Some(verify_qualification(method, d, &grid.lambdas, &grid.alphas)?);
            Ok(report)
        })
        .collect()
}
