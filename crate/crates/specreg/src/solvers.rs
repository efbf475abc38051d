//! Iterative schemes driven by matrix–vector products, with stopping rules.
//!
//! Solvers work on the raw normal equations `XᵀX β = XᵀY` with raw step
//! sizes. [`SolverConfig::filter_at`] gives the scaled [`FilterSpec`] whose
//! closed form reproduces the iterate at step `k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::filters::{FilterSpec, Method};
use crate::spectral::RegressionProblem;

/// Residual growth factor treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Largest step budget accepted by the fractional scheme (full-history sums).
pub const FRACTIONAL_MAX_STEPS: usize = 50_000;
/// Default step cap for the fractional scheme.
pub const FRACTIONAL_DEFAULT_K_MAX: usize = 5000;

/// Time-stepping scheme and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// `β_{k+1} = β_k + Δt Xᵀ(Y − Xβ_k)`.
    Landweber,
    /// RK4 on `β̇ = Xᵀ(Y − Xβ)`.
    Showalter,
    /// Störmer–Verlet on `β̈ + ((1+2s)/t) β̇ = Xᵀ(Y − Xβ)`.
    Soar {
        s_star: f64,
        #[serde(default = "one")]
        rho: f64,
        /// Evaluate the second force at the extrapolated point `q_{k+1}`
        /// with damping frozen at `t_k` instead of the symmetric update.
        #[serde(default)]
        extrapolated: bool,
    },
    /// RK4 on `β̈ + η β̇ = Xᵀ(Y − Xβ)`.
    HeavyBall { eta: f64 },
    /// Adams–Moulton predictor–corrector on `D^ϑ β = Xᵀ(Y − Xβ)`.
    Fractional { vartheta: f64 },
    /// Semi-implicit symplectic Euler on
    /// `tβ̈ + (t^{−κ} − κ)β̇ + t^{κ+1}XᵀXβ̇ + XᵀXβ = XᵀY`.
    Accelerated { kappa: f64 },
    /// `z_k = β_k + ((k−1)/(k+ω))(β_k − β_{k−1})`, `β_{k+1} = z_k + Δt Xᵀ(Y − Xz_k)`.
    Nesterov { omega: f64 },
}

fn one() -> f64 {
    1.0
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Landweber => "landweber",
            Scheme::Showalter => "showalter",
            Scheme::Soar { .. } => "soar",
            Scheme::HeavyBall { .. } => "heavy_ball",
            Scheme::Fractional { .. } => "fractional",
            Scheme::Accelerated { .. } => "accelerated",
            Scheme::Nesterov { .. } => "nesterov",
        }
    }
}

/// Scheme plus raw step size Δt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub scheme: Scheme,
    pub dt: f64,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Result<Self> {
        let cfg = Self { scheme, dt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return input(format!("dt must be positive and finite, got {}", self.dt));
        }
        // Reuse the filter-side parameter checks.
        self.spectral_method(1)?.validate()
    }

    fn spectral_method(&self, n: usize) -> Result<Method> {
        let nf = n as f64;
        Ok(match self.scheme {
            Scheme::Landweber => Method::Landweber { dt: nf * self.dt },
            Scheme::Showalter => Method::Showalter,
            Scheme::Soar { s_star, rho, .. } => Method::Soar { s_star, rho },
            Scheme::HeavyBall { eta } => Method::HeavyBall {
                eta: eta / nf.sqrt(),
            },
            Scheme::Fractional { vartheta } => Method::Fractional { vartheta },
            Scheme::Accelerated { kappa } => Method::Accelerated { kappa },
            Scheme::Nesterov { omega } => Method::Nesterov {
                dt: nf * self.dt,
                omega,
            },
        })
    }

    /// Scaled filter equal to the exact flow (or recursion) after `k` steps.
    pub fn filter_at(&self, k: usize, n: usize) -> Result<FilterSpec> {
        if k == 0 {
            return input("filter_at requires k ≥ 1");
        }
        let nf = n as f64;
        let kf = k as f64;
        let t = kf * self.dt;
        let alpha = match self.scheme {
            Scheme::Landweber => 1.0 / kf,
            Scheme::Nesterov { .. } => 1.0 / (kf * kf),
            Scheme::Showalter => 1.0 / (nf * t),
            Scheme::Soar { rho, .. } => rho / (nf * t * t),
            Scheme::HeavyBall { .. } => 1.0 / (nf.sqrt() * t),
            Scheme::Fractional { vartheta } => 1.0 / (nf * t.powf(vartheta)),
            Scheme::Accelerated { kappa } => (kappa + 1.0) / (nf * t.powf(kappa + 1.0)),
        };
        FilterSpec::new(self.spectral_method(n)?, alpha)
    }
}

/// Which stopping rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Discrepancy,
    AdjustedOptimal,
    FixedK,
}

/// Stopping rule and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    pub kind: StopKind,
    pub varsigma: f64,
    pub noise_norm: Option<f64>,
    pub k_min: usize,
    pub k_max: usize,
    pub truth: Option<DVector<f64>>,
}

impl StoppingRule {
    /// Stop at the first `k` with `‖Y − Xβ_k‖ ≤ ς·noise_norm`, or at `k_max`.
    pub fn discrepancy(varsigma: f64, noise_norm: f64, k_max: usize) -> Self {
        Self {
            kind: StopKind::Discrepancy,
            varsigma,
            noise_norm: Some(noise_norm),
            k_min: 1,
            k_max,
            truth: None,
        }
    }

    /// Stop at the first local minimum of `‖β_k − β‖`, clamped to `[k_min, k_max]`.
    pub fn adjusted_optimal(truth: DVector<f64>, k_min: usize, k_max: usize) -> Self {
        Self {
            kind: StopKind::AdjustedOptimal,
            varsigma: 1.0,
            noise_norm: None,
            k_min,
            k_max,
            truth: Some(truth),
        }
    }

    /// Run exactly `k` steps.
    pub fn fixed(k: usize) -> Self {
        Self {
            kind: StopKind::FixedK,
            varsigma: 1.0,
            noise_norm: None,
            k_min: k,
            k_max: k,
            truth: None,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k_min > self.k_max {
            return input("k_min must not exceed k_max");
        }
        match self.kind {
            StopKind::Discrepancy => {
                if self.k_max == 0 {
                    return input("k_max must be at least 1");
                }
                if !(self.varsigma > 0.0 && self.varsigma.is_finite()) {
                    return input("varsigma must be positive");
                }
                match self.noise_norm {
                    Some(v) if v >= 0.0 && v.is_finite() => Ok(()),
                    _ => input("discrepancy stopping requires a finite nonnegative noise norm"),
                }
            }
            StopKind::AdjustedOptimal => {
                if self.k_max == 0 {
                    return input("k_max must be at least 1");
                }
                match &self.truth {
                    Some(t) if t.len() == p => Ok(()),
                    Some(_) => input("truth length differs from the number of coefficients"),
                    None => input("adjusted optimal stopping requires the true coefficients"),
                }
            }
            StopKind::FixedK => Ok(()),
        }
    }
}

/// `k₀ = min(k_max, k*)` with `k*` the first (1-based) step whose residual is `≤ bound`.
pub fn stop_discrepancy(history: &[f64], bound: f64, k_max: usize) -> usize {
    history
        .iter()
        .position(|&r| r <= bound)
        .map(|i| i + 1)
        .unwrap_or(k_max)
        .min(k_max)
}

/// `k₀ = min(k_max, max(k*, k_min))` with `k*` the first local minimum of the error history.
pub fn stop_adjusted_optimal(errors: &[f64], k_min: usize, k_max: usize) -> usize {
    match first_local_min(errors) {
        Some(k_star) => k_star.max(k_min).min(k_max),
        None => k_max,
    }
}

fn first_local_min(errors: &[f64]) -> Option<usize> {
    errors.windows(2).position(|w| w[0] <= w[1]).map(|i| i + 1)
}

/// Snapshot of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub beta: DVector<f64>,
    /// `ż` for second-order schemes, `β_{k−1}` for Nesterov.
    pub velocity: Option<DVector<f64>>,
    /// Extrapolated point `q_k` of the extrapolated SOAR variant.
    pub aux: Option<DVector<f64>>,
    pub k: usize,
    pub t: f64,
    pub residual_norm: f64,
    /// Residual norms at steps `1..=k` (1-based).
    pub history: Vec<f64>,
}

/// Result of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: IterationState,
    pub k0: usize,
    /// `‖β_k − β‖` per step when the true coefficients were supplied.
    pub error_history: Option<Vec<f64>>,
}

/// `XᵀX` products, through the Gram matrix when it is cheaper.
struct NormalOperator<'a> {
    x: &'a DMatrix<f64>,
    gram: Option<DMatrix<f64>>,
    xty: DVector<f64>,
}

impl<'a> NormalOperator<'a> {
    fn new(problem: &'a RegressionProblem) -> Self {
        let x = problem.x();
        let gram = (x.ncols() <= 2 * x.nrows()).then(|| x.tr_mul(x));
        Self {
            x,
            gram,
            xty: x.tr_mul(problem.y()),
        }
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.gram {
            Some(g) => g * v,
            None => self.x.tr_mul(&(self.x * v)),
        }
    }

    /// `Xᵀ(Y − Xv)`.
    fn force(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.xty - self.apply(v)
    }
}

trait Stepper {
    /// Advance from step `k` to `k + 1`.
    fn step(&mut self, k: usize, op: &NormalOperator) -> Result<()>;
    fn beta(&self) -> &DVector<f64>;
    fn velocity(&self) -> Option<&DVector<f64>> {
        None
    }
    fn aux(&self) -> Option<&DVector<f64>> {
        None
    }
}

struct LandweberStep {
    beta: DVector<f64>,
    dt: f64,
}

impl Stepper for LandweberStep {
    fn step(&mut self, _k: usize, op: &NormalOperator) -> Result<()> {
        let f = op.force(&self.beta);
        self.beta.axpy(self.dt, &f, 1.0);
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
}

struct ShowalterStep {
    beta: DVector<f64>,
    dt: f64,
}

impl Stepper for ShowalterStep {
    fn step(&mut self, _k: usize, op: &NormalOperator) -> Result<()> {
        let h = self.dt;
        let k1 = op.force(&self.beta);
        let k2 = op.force(&(&self.beta + &k1 * (0.5 * h)));
        let k3 = op.force(&(&self.beta + &k2 * (0.5 * h)));
        let k4 = op.force(&(&self.beta + &k3 * h));
        let incr = (k1 + k4 + (k2 + k3) * 2.0) * (h / 6.0);
        self.beta += incr;
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
}

struct HeavyBallStep {
    beta: DVector<f64>,
    vel: DVector<f64>,
    dt: f64,
    eta: f64,
}

impl Stepper for HeavyBallStep {
    fn step(&mut self, _k: usize, op: &NormalOperator) -> Result<()> {
        let h = self.dt;
        let eta = self.eta;
        let rhs = |b: &DVector<f64>, v: &DVector<f64>| (v.clone(), op.force(b) - v * eta);
        let (a1, b1) = rhs(&self.beta, &self.vel);
        let (a2, b2) = rhs(&(&self.beta + &a1 * (0.5 * h)), &(&self.vel + &b1 * (0.5 * h)));
        let (a3, b3) = rhs(&(&self.beta + &a2 * (0.5 * h)), &(&self.vel + &b2 * (0.5 * h)));
        let (a4, b4) = rhs(&(&self.beta + &a3 * h), &(&self.vel + &b3 * h));
        self.beta += (a1 + a4 + (a2 + a3) * 2.0) * (h / 6.0);
        self.vel += (b1 + b4 + (b2 + b3) * 2.0) * (h / 6.0);
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn velocity(&self) -> Option<&DVector<f64>> {
        Some(&self.vel)
    }
}

struct SoarStep {
    beta: DVector<f64>,
    z: DVector<f64>,
    q: DVector<f64>,
    /// Force at the current β, reused across steps.
    force: Option<DVector<f64>>,
    dt: f64,
    damping: f64,
    extrapolated: bool,
}

impl Stepper for SoarStep {
    fn step(&mut self, k: usize, op: &NormalOperator) -> Result<()> {
        let h = self.dt;
        let c = self.damping;
        let f_k = match self.force.take() {
            Some(f) => f,
            None => op.force(&self.beta),
        };
        if self.extrapolated {
            let t = |j: usize| (j.max(1)) as f64 * h;
            let half = (&self.z + &f_k * (0.5 * h)) / (1.0 + 0.5 * h * c / t(k));
            self.beta.axpy(h, &half, 1.0);
            let a = (1.0 - 0.5 * h * c / t(k + 1)) / (1.0 + 0.5 * h * c / t(k + 2));
            self.q = &self.beta + &half * (2.0 * h * a);
            let f_q = op.force(&self.q);
            self.z = &half * (1.0 - 0.5 * h * c / t(k)) + f_q * (0.5 * h);
        } else {
            // Damping coefficient at the midpoint time (k + 1/2)Δt.
            let gamma = c / ((k as f64 + 0.5) * h);
            let half = (&self.z + &f_k * (0.5 * h)) / (1.0 + 0.5 * h * gamma);
            self.beta.axpy(h, &half, 1.0);
            let f_next = op.force(&self.beta);
            self.z = &half * (1.0 - 0.5 * h * gamma) + &f_next * (0.5 * h);
            self.q.copy_from(&self.beta);
            self.force = Some(f_next);
        }
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn velocity(&self) -> Option<&DVector<f64>> {
        Some(&self.z)
    }
    fn aux(&self) -> Option<&DVector<f64>> {
        Some(&self.q)
    }
}

struct FractionalStep {
    beta: DVector<f64>,
    /// Column `j` holds `Xᵀ(Y − Xβ_j)`.
    forces: DMatrix<f64>,
    b_weights: Vec<f64>,
    d_weights: Vec<f64>,
    predictor_scale: f64,
    corrector_scale: f64,
    vartheta: f64,
}

impl FractionalStep {
    fn new(p: usize, k_max: usize, dt: f64, vartheta: f64, op: &NormalOperator) -> Result<Self> {
        if k_max > FRACTIONAL_MAX_STEPS {
            return input(format!(
                "fractional scheme keeps the full history; k_max {k_max} exceeds {FRACTIONAL_MAX_STEPS}"
            ));
        }
        let th = vartheta;
        let b_weights = (0..=k_max)
            .map(|m| (m as f64 + 1.0).powf(th) - (m as f64).powf(th))
            .collect();
        let d_weights = (0..=k_max)
            .map(|m| {
                let m = m as f64;
                (m + 2.0).powf(th + 1.0) + m.powf(th + 1.0) - 2.0 * (m + 1.0).powf(th + 1.0)
            })
            .collect();
        let hth = dt.powf(th);
        let mut forces = DMatrix::zeros(p, k_max + 1);
        let beta = DVector::zeros(p);
        forces.set_column(0, &op.force(&beta));
        Ok(Self {
            beta,
            forces,
            b_weights,
            d_weights,
            predictor_scale: hth / (th * libm::tgamma(th)),
            corrector_scale: hth / libm::tgamma(th + 2.0),
            vartheta: th,
        })
    }
}

impl Stepper for FractionalStep {
    fn step(&mut self, k: usize, op: &NormalOperator) -> Result<()> {
        let th = self.vartheta;
        let kf = k as f64;
        let hist = self.forces.columns(0, k + 1);
        // Predictor weights b_{j,k+1} for j = 0..=k depend on k − j.
        let wb = DVector::from_iterator(k + 1, (0..=k).map(|j| self.b_weights[k - j]));
        let predictor = (&hist * wb) * self.predictor_scale;
        let mut wa = DVector::zeros(k + 1);
        wa[0] = kf.powf(th + 1.0) - (kf - th) * (kf + 1.0).powf(th);
        for j in 1..=k {
            wa[j] = self.d_weights[k - j];
        }
        let history_sum = &hist * wa;
        let f_pred = op.force(&predictor);
        self.beta = (f_pred + history_sum) * self.corrector_scale;
        let f_new = op.force(&self.beta);
        self.forces.set_column(k + 1, &f_new);
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
}

struct AcceleratedStep {
    beta: DVector<f64>,
    z: DVector<f64>,
    dt: f64,
    kappa: f64,
}

impl Stepper for AcceleratedStep {
    fn step(&mut self, k: usize, op: &NormalOperator) -> Result<()> {
        let h = self.dt;
        let kappa = self.kappa;
        let t = (k as f64 + 1.0) * h;
        self.beta.axpy(h, &self.z, 1.0);
        let diag = 1.0 + h * (t.powf(-kappa) - kappa) / t;
        let coupling = h * t.powf(kappa);
        if !(diag > 0.0 && diag.is_finite() && coupling.is_finite()) {
            return Err(Error::Contract(format!(
                "implicit velocity system is not positive definite at step {k}"
            )));
        }
        let rhs = &self.z + op.force(&self.beta) * (h / t);
        self.z = conjugate_gradient(
            |v| op.apply(v) * coupling + v * diag,
            &rhs,
            &self.z,
            1e-10,
        )?;
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn velocity(&self) -> Option<&DVector<f64>> {
        Some(&self.z)
    }
}

/// Conjugate gradients for an SPD operator, relative residual tolerance `tol`.
fn conjugate_gradient<F>(
    apply: F,
    rhs: &DVector<f64>,
    start: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let target = tol * rhs.norm();
    let mut x = start.clone();
    let mut r = rhs - apply(&x);
    if r.norm() <= target {
        return Ok(x);
    }
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    let max_iter = 10 * rhs.len().max(10);
    for _ in 0..max_iter {
        let ad = apply(&d);
        let curv = d.dot(&ad);
        if !(curv > 0.0) {
            return Err(Error::Contract("implicit velocity system is singular".into()));
        }
        let step = rr / curv;
        x.axpy(step, &d, 1.0);
        r.axpy(-step, &ad, 1.0);
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= target {
            return Ok(x);
        }
        d = &r + &d * (rr_new / rr);
        rr = rr_new;
    }
    Err(Error::Contract(
        "conjugate gradients did not reach tolerance for the implicit velocity system".into(),
    ))
}

struct NesterovStep {
    beta: DVector<f64>,
    prev: DVector<f64>,
    dt: f64,
    omega: f64,
}

impl Stepper for NesterovStep {
    fn step(&mut self, k: usize, op: &NormalOperator) -> Result<()> {
        if k == 0 {
            self.prev.copy_from(&self.beta);
            self.beta = &op.xty * self.dt;
            return Ok(());
        }
        let c = (k as f64 - 1.0) / (k as f64 + self.omega);
        let z = &self.beta + (&self.beta - &self.prev) * c;
        let next = &z + op.force(&z) * self.dt;
        self.prev = std::mem::replace(&mut self.beta, next);
        Ok(())
    }
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn velocity(&self) -> Option<&DVector<f64>> {
        Some(&self.prev)
    }
}

fn make_stepper(
    config: &SolverConfig,
    p: usize,
    k_max: usize,
    op: &NormalOperator,
) -> Result<Box<dyn Stepper>> {
    let zero = DVector::zeros(p);
    let dt = config.dt;
    Ok(match config.scheme {
        Scheme::Landweber => Box::new(LandweberStep { beta: zero, dt }),
        Scheme::Showalter => Box::new(ShowalterStep { beta: zero, dt }),
        Scheme::HeavyBall { eta } => Box::new(HeavyBallStep {
            beta: zero.clone(),
            vel: zero,
            dt,
            eta,
        }),
        Scheme::Soar {
            s_star,
            extrapolated,
            ..
        } => Box::new(SoarStep {
            beta: zero.clone(),
            z: zero.clone(),
            q: zero,
            force: None,
            dt,
            damping: 1.0 + 2.0 * s_star,
            extrapolated,
        }),
        Scheme::Fractional { vartheta } => {
            Box::new(FractionalStep::new(p, k_max, dt, vartheta, op)?)
        }
        Scheme::Accelerated { kappa } => Box::new(AcceleratedStep {
            beta: zero.clone(),
            z: zero,
            dt,
            kappa,
        }),
        Scheme::Nesterov { omega } => Box::new(NesterovStep {
            beta: zero.clone(),
            prev: zero,
            dt,
            omega,
        }),
    })
}

fn snapshot(stepper: &dyn Stepper, k: usize, dt: f64, residual: f64, history: &[f64]) -> IterationState {
    IterationState {
        beta: stepper.beta().clone(),
        velocity: stepper.velocity().cloned(),
        aux: stepper.aux().cloned(),
        k,
        t: k as f64 * dt,
        residual_norm: residual,
        history: history.to_vec(),
    }
}

/// Run `config` on `problem` until `stop` fires.
pub fn run(problem: &RegressionProblem, config: &SolverConfig, stop: &StoppingRule) -> Result<RunOutcome> {
    config.validate()?;
    stop.validate(problem.p())?;
    let op = NormalOperator::new(problem);
    let x = problem.x();
    let y = problem.y();
    let mut stepper = make_stepper(config, problem.p(), stop.k_max, &op)?;

    let initial = y.norm();
    let limit = DIVERGENCE_FACTOR * initial;
    let bound = stop.varsigma * stop.noise_norm.unwrap_or(0.0);
    let mut history: Vec<f64> = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    let mut previous: Option<IterationState> = None;
    let mut k_star: Option<usize> = None;

    if stop.k_max == 0 {
        let state = snapshot(stepper.as_ref(), 0, config.dt, initial, &history);
        return Ok(RunOutcome {
            state,
            k0: 0,
            error_history: None,
        });
    }

    for k in 1..=stop.k_max {
        stepper.step(k - 1, &op)?;
        let residual = (y - x * stepper.beta()).norm();
        if !residual.is_finite() || (initial > 0.0 && residual >= limit) {
            return Err(Error::Divergence { step: k, residual });
        }
        history.push(residual);
        match stop.kind {
            StopKind::FixedK => {}
            StopKind::Discrepancy => {
                if residual <= bound {
                    let state = snapshot(stepper.as_ref(), k, config.dt, residual, &history);
                    return Ok(RunOutcome {
                        state,
                        k0: k,
                        error_history: None,
                    });
                }
            }
            StopKind::AdjustedOptimal => {
                let truth = stop.truth.as_ref().expect("validated");
                errors.push((stepper.beta() - truth).norm());
                if k_star.is_none() && k >= 2 && errors[k - 2] <= errors[k - 1] {
                    k_star = Some(k - 1);
                }
                if let Some(ks) = k_star {
                    let k0 = ks.max(stop.k_min).min(stop.k_max);
                    if k0 == k - 1 {
                        let mut state = previous.take().expect("previous iterate retained");
                        state.history = history[..k - 1].to_vec();
                        errors.truncate(k - 1);
                        return Ok(RunOutcome {
                            state,
                            k0,
                            error_history: Some(errors),
                        });
                    }
                    if k0 == k {
                        let state = snapshot(stepper.as_ref(), k, config.dt, residual, &history);
                        return Ok(RunOutcome {
                            state,
                            k0,
                            error_history: Some(errors),
                        });
                    }
                }
                if k_star.is_none() || stop.k_min > k {
                    previous = Some(snapshot(stepper.as_ref(), k, config.dt, residual, &[]));
                }
            }
        }
        if k == stop.k_max {
            let state = snapshot(stepper.as_ref(), k, config.dt, residual, &history);
            let error_history = (stop.kind == StopKind::AdjustedOptimal).then_some(errors);
            return Ok(RunOutcome {
                state,
                k0: k,
                error_history,
            });
        }
    }
    unreachable!("loop returns at k_max")
}

/// Landweber iteration.
pub fn landweber_run(problem: &RegressionProblem, dt: f64, stop: &StoppingRule) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::Landweber, dt)?, stop)
}

/// Showalter flow by RK4.
pub fn showalter_rk4_run(problem: &RegressionProblem, dt: f64, stop: &StoppingRule) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::Showalter, dt)?, stop)
}

/// SOAR flow by Störmer–Verlet (ρ = 1).
pub fn soar_sv_run(
    problem: &RegressionProblem,
    dt: f64,
    s_star: f64,
    stop: &StoppingRule,
) -> Result<RunOutcome> {
    let scheme = Scheme::Soar {
        s_star,
        rho: 1.0,
        extrapolated: false,
    };
    run(problem, &SolverConfig::new(scheme, dt)?, stop)
}

/// Heavy-ball flow by RK4.
pub fn hbf_rk4_run(problem: &RegressionProblem, dt: f64, eta: f64, stop: &StoppingRule) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::HeavyBall { eta }, dt)?, stop)
}

/// Fractional flow by the Adams–Moulton predictor–corrector.
pub fn far_adams_moulton_run(
    problem: &RegressionProblem,
    dt: f64,
    vartheta: f64,
    stop: &StoppingRule,
) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::Fractional { vartheta }, dt)?, stop)
}

/// AR^κ flow by semi-implicit symplectic Euler.
pub fn ark_symplectic_run(
    problem: &RegressionProblem,
    dt: f64,
    kappa: f64,
    stop: &StoppingRule,
) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::Accelerated { kappa }, dt)?, stop)
}

/// Nesterov acceleration.
pub fn nesterov_run(problem: &RegressionProblem, dt: f64, omega: f64, stop: &StoppingRule) -> Result<RunOutcome> {
    run(problem, &SolverConfig::new(Scheme::Nesterov { omega }, dt)?, stop)
}

/// `β̃ = 2β_k(X, Y) − β_k(X, Xβ_k(X, Y))` with the same scheme and `k` in both passes.
pub fn two_pass_debias(
    problem: &RegressionProblem,
    config: &SolverConfig,
    k: usize,
) -> Result<DVector<f64>> {
    let first = run(problem, config, &StoppingRule::fixed(k))?;
    let refit = problem.with_response(problem.x() * &first.state.beta)?;
    let second = run(&refit, config, &StoppingRule::fixed(k))?;
    combine_passes(&first.state, &second.state)
}

/// Combine two passes; their step counts must match.
pub fn combine_passes(first: &IterationState, second: &IterationState) -> Result<DVector<f64>> {
    if first.k != second.k {
        return Err(Error::Contract(format!(
            "debiasing passes ran {} and {} steps",
            first.k, second.k
        )));
    }
    if first.beta.len() != second.beta.len() {
        return Err(Error::Contract("debiasing passes differ in dimension".into()));
    }
    Ok(&first.beta * 2.0 - &second.beta)
}
