use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specreg::filters::{FilterSpec, Method};
use specreg::special::mittag_leffler_neg;
use specreg::solvers::*;
use specreg::spectral::{apply_spectral_filter, decompose, RegressionProblem};
use specreg::Error;

fn random_problem(n: usize, p: usize, seed: u64) -> RegressionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    RegressionProblem::new(x, y).unwrap()
}

/// `X = [√λ]`, `Y = [√λ]`, so `β(t) = 1 − r(t, λ)`.
fn scalar(lambda: f64) -> RegressionProblem {
    let s = lambda.sqrt();
    RegressionProblem::new(DMatrix::from_element(1, 1, s), DVector::from_element(1, s)).unwrap()
}

fn scalar_beta(config: &SolverConfig, lambda: f64, k: usize) -> f64 {
    run(&scalar(lambda), config, &StoppingRule::fixed(k)).unwrap().state.beta[0]
}

fn spectral_oracle(problem: &RegressionProblem, spec: &FilterSpec) -> DVector<f64> {
    let dec = decompose(problem).unwrap();
    apply_spectral_filter(&dec, |l| spec.generator_value(l), problem.y(), problem.n()).unwrap()
}

fn spectral_norm_sq(problem: &RegressionProblem) -> f64 {
    let dec = decompose(problem).unwrap();
    dec.singular_values[0].powi(2)
}

fn max_abs(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn landweber_scalar_unroll() {
    let p = RegressionProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap();
    let out = landweber_run(&p, 0.5, &StoppingRule::fixed(3)).unwrap();
    assert!((out.state.beta[0] - 0.875).abs() < 1e-15);
    assert_eq!(out.k0, 3);
    assert_eq!(out.state.history.len(), 3);
    assert!((out.state.t - 1.5).abs() < 1e-15);
}

#[test]
fn landweber_matches_spectral_form() {
    for (seed, (n, p), k) in [(1, (10, 8), 50), (2, (50, 40), 200), (3, (30, 25), 1)] {
        let problem = random_problem(n, p, seed);
        let dt = 1.0 / spectral_norm_sq(&problem);
        let cfg = SolverConfig::new(Scheme::Landweber, dt).unwrap();
        let it = run(&problem, &cfg, &StoppingRule::fixed(k)).unwrap();
        let oracle = spectral_oracle(&problem, &cfg.filter_at(k, n).unwrap());
        assert!(max_abs(&it.state.beta, &oracle) < 1e-8, "seed {seed}");
    }
}

#[test]
fn landweber_converges_to_truth_without_noise() {
    let x = DMatrix::<f64>::identity(4, 4) * 2.0;
    let truth = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let problem = RegressionProblem::new(x.clone(), &x * &truth).unwrap();
    let out = landweber_run(&problem, 0.2, &StoppingRule::fixed(200)).unwrap();
    assert!(max_abs(&out.state.beta, &truth) < 1e-12);
}

#[test]
fn landweber_residuals_monotone() {
    for seed in 0..5 {
        let problem = random_problem(20, 15, 100 + seed);
        let dt = 1.0 / spectral_norm_sq(&problem);
        let out = landweber_run(&problem, dt, &StoppingRule::fixed(300)).unwrap();
        for w in out.state.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
    }
}

#[test]
fn showalter_scalar_value() {
    let cfg = SolverConfig::new(Scheme::Showalter, 1e-3).unwrap();
    let b = scalar_beta(&cfg, 1.0, 1000);
    assert!((b - 0.632_120_558_828_557_7).abs() < 1e-6);
}

#[test]
fn showalter_matches_spectral_form() {
    let problem = random_problem(10, 8, 7);
    let cfg = SolverConfig::new(Scheme::Showalter, 1e-3).unwrap();
    let out = run(&problem, &cfg, &StoppingRule::fixed(2000)).unwrap();
    let oracle = spectral_oracle(&problem, &cfg.filter_at(2000, 10).unwrap());
    assert!(max_abs(&out.state.beta, &oracle) < 1e-6);
}

#[test]
fn rk4_self_convergence() {
    let exact = |cfg: &SolverConfig, lambda: f64, k: usize| {
        1.0 - cfg.filter_at(k, 1).unwrap().bias_value(lambda).unwrap()
    };
    for (scheme, lambda) in [
        (Scheme::Showalter, 1.0),
        (Scheme::HeavyBall { eta: 5.0 }, 1.0),
        (Scheme::HeavyBall { eta: 2.0 }, 4.0),
    ] {
        let mut errs = Vec::new();
        for dt in [0.2, 0.1] {
            let cfg = SolverConfig::new(scheme, dt).unwrap();
            let k = (2.0 / dt).round() as usize;
            errs.push((scalar_beta(&cfg, lambda, k) - exact(&cfg, lambda, k)).abs());
        }
        assert!(errs[0] / errs[1] >= 8.0, "{scheme:?}: {errs:?}");
    }
}

#[test]
fn soar_bessel_identity() {
    let k = 3142;
    let dt = std::f64::consts::PI / k as f64;
    let cfg = SolverConfig::new(
        Scheme::Soar {
            s_star: 0.5,
            rho: 1.0,
            extrapolated: false,
        },
        dt,
    )
    .unwrap();
    let b = scalar_beta(&cfg, 1.0, k);
    assert!((b - 1.0).abs() < 2e-3, "{b}");
    let oracle = 1.0 - cfg.filter_at(k, 1).unwrap().bias_value(1.0).unwrap();
    assert!((b - oracle).abs() < 1e-6);
}

#[test]
fn soar_self_convergence() {
    let scheme = Scheme::Soar {
        s_star: 0.5,
        rho: 1.0,
        extrapolated: false,
    };
    let horizon = 3.0;
    let at = |dt: f64| {
        let cfg = SolverConfig::new(scheme, dt).unwrap();
        scalar_beta(&cfg, 1.0, (horizon / dt).round() as usize)
    };
    let reference = at(1e-5);
    let e1 = (at(2e-3) - reference).abs();
    let e2 = (at(1e-3) - reference).abs();
    assert!(e1 / e2 >= 3.0, "{e1} {e2}");
}

#[test]
fn soar_extrapolated_variant_is_consistent() {
    let scheme = Scheme::Soar {
        s_star: 0.5,
        rho: 1.0,
        extrapolated: true,
    };
    let cfg = SolverConfig::new(scheme, 1e-3).unwrap();
    let k = 3000;
    let b = scalar_beta(&cfg, 1.0, k);
    let oracle = 1.0 - cfg.filter_at(k, 1).unwrap().bias_value(1.0).unwrap();
    assert!((b - oracle).abs() < 2e-3);
}

#[test]
fn heavy_ball_branches() {
    // overdamped, oscillatory, critical
    for (lambda, eta) in [(1.0, 5.0), (4.0, 2.0), (1.0, 2.0)] {
        let cfg = SolverConfig::new(Scheme::HeavyBall { eta }, 1e-3).unwrap();
        let b = scalar_beta(&cfg, lambda, 2000);
        let oracle = 1.0 - cfg.filter_at(2000, 1).unwrap().bias_value(lambda).unwrap();
        assert!((b - oracle).abs() < 1e-5, "λ={lambda} η={eta}");
    }
}

#[test]
fn fractional_order_one_is_showalter() {
    let cfg = SolverConfig::new(Scheme::Fractional { vartheta: 1.0 }, 1e-2).unwrap();
    let b = scalar_beta(&cfg, 1.0, 100);
    assert!((b - (1.0 - (-1.0f64).exp())).abs() < 5e-3);
}

#[test]
fn fractional_half_order_matches_mittag_leffler() {
    let cfg = SolverConfig::new(Scheme::Fractional { vartheta: 0.5 }, 1e-3).unwrap();
    let b = scalar_beta(&cfg, 1.0, 1000);
    // β(1) = t^ϑ E_{ϑ,ϑ+1}(−t^ϑ) at t = 1
    let oracle = mittag_leffler_neg(0.5, 1.5, 1.0).unwrap();
    assert!((b - oracle).abs() < 1e-2, "{b} {oracle}");
}

#[test]
fn fractional_memory_guard() {
    let cfg = SolverConfig::new(Scheme::Fractional { vartheta: 0.5 }, 1e-3).unwrap();
    let err = run(&scalar(1.0), &cfg, &StoppingRule::fixed(FRACTIONAL_MAX_STEPS + 1)).unwrap_err();
    assert!(matches!(err, Error::Input(_)));
}

#[test]
fn accelerated_flows() {
    let target = 1.0 - (-1.0f64).exp();
    let cfg = SolverConfig::new(Scheme::Accelerated { kappa: 0.0 }, 1e-3).unwrap();
    assert!((scalar_beta(&cfg, 1.0, 1000) - target).abs() < 1e-2);

    let kappa = 1.5;
    let t_end = (kappa + 1.0f64).powf(1.0 / (kappa + 1.0));
    let k = 2000;
    let cfg = SolverConfig::new(Scheme::Accelerated { kappa }, t_end / k as f64).unwrap();
    assert!((scalar_beta(&cfg, 1.0, k) - target).abs() < 1e-2);
}

#[test]
fn accelerated_matrix_problem_tracks_closed_form() {
    let problem = random_problem(12, 10, 11);
    let dt = 2e-3;
    let k = 500;
    let cfg = SolverConfig::new(Scheme::Accelerated { kappa: 0.5 }, dt).unwrap();
    let out = run(&problem, &cfg, &StoppingRule::fixed(k)).unwrap();
    let oracle = spectral_oracle(&problem, &cfg.filter_at(k, 12).unwrap());
    let rel = (&out.state.beta - &oracle).norm() / oracle.norm();
    assert!(rel < 2e-2, "{rel}");
}

#[test]
fn nesterov_first_step_and_unroll() {
    let p = RegressionProblem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap();
    let dt = 0.5;
    let b1 = nesterov_run(&p, dt, 5.0, &StoppingRule::fixed(1)).unwrap().state.beta[0];
    assert!((b1 - dt).abs() < 1e-15);
    // k = 1 momentum coefficient is zero, so z₁ = β₁.
    let b2 = nesterov_run(&p, dt, 5.0, &StoppingRule::fixed(2)).unwrap().state.beta[0];
    assert!((b2 - (b1 + dt * (1.0 - b1))).abs() < 1e-15);
}

#[test]
fn nesterov_bias_bound_and_recursion() {
    let (lambda, dt) = (0.5, 1.0);
    for k in 1..=20 {
        let cfg = SolverConfig::new(Scheme::Nesterov { omega: 5.0 }, dt).unwrap();
        let b = scalar_beta(&cfg, lambda, k);
        let r = 1.0 - b;
        assert!(r.abs() <= (1.0 - dt * lambda).powf((k as f64 + 1.0) / 2.0) * (1.0 + 1e-12));
        let closed = cfg.filter_at(k, 1).unwrap().bias_value(lambda).unwrap();
        assert!((r - closed).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn zero_response_stays_zero() {
    let x = random_problem(6, 5, 3).x().clone();
    let problem = RegressionProblem::new(x, DVector::zeros(6)).unwrap();
    let schemes = [
        Scheme::Landweber,
        Scheme::Showalter,
        Scheme::Soar {
            s_star: 0.5,
            rho: 1.0,
            extrapolated: false,
        },
        Scheme::Soar {
            s_star: 0.5,
            rho: 1.0,
            extrapolated: true,
        },
        Scheme::HeavyBall { eta: 3.0 },
        Scheme::Fractional { vartheta: 0.7 },
        Scheme::Accelerated { kappa: 1.0 },
        Scheme::Nesterov { omega: 3.0 },
    ];
    for scheme in schemes {
        let cfg = SolverConfig::new(scheme, 1e-2).unwrap();
        let out = run(&problem, &cfg, &StoppingRule::fixed(50)).unwrap();
        assert!(out.state.beta.iter().all(|&v| v == 0.0), "{scheme:?}");
        assert!(out.state.history.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn initial_state_is_zero() {
    let cfg = SolverConfig::new(Scheme::HeavyBall { eta: 1.0 }, 0.1).unwrap();
    let out = run(&random_problem(4, 3, 9), &cfg, &StoppingRule::fixed(0)).unwrap();
    assert_eq!(out.k0, 0);
    assert_eq!(out.state.t, 0.0);
    assert!(out.state.beta.iter().all(|&v| v == 0.0));
    assert!(out.state.velocity.unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn discrepancy_rule_examples() {
    assert_eq!(stop_discrepancy(&[5.0, 3.0, 1.9, 1.5], 2.0, 10), 3);
    assert_eq!(stop_discrepancy(&[5.0, 4.0, 3.0, 2.5], 2.0, 4), 4);
    assert_eq!(stop_discrepancy(&[5.0, 4.0], 6.0, 4), 1);
}

#[test]
fn adjusted_optimal_rule_examples() {
    let h = [3.0, 2.0, 1.0, 2.0];
    assert_eq!(stop_adjusted_optimal(&h, 1, 10), 3);
    assert_eq!(stop_adjusted_optimal(&h, 5, 10), 5);
    assert_eq!(stop_adjusted_optimal(&[4.0, 3.0, 2.0, 1.0], 1, 10), 10);
}

#[test]
fn discrepancy_run_agrees_with_history_rule() {
    let problem = random_problem(30, 20, 21);
    let dt = 1.0 / spectral_norm_sq(&problem);
    let full = landweber_run(&problem, dt, &StoppingRule::fixed(400)).unwrap();
    let bound = full.state.history[40];
    let expected = stop_discrepancy(&full.state.history, bound, 400);
    let stopped = landweber_run(&problem, dt, &StoppingRule::discrepancy(1.0, bound, 400)).unwrap();
    assert_eq!(stopped.k0, expected);
    assert_eq!(stopped.state.k, expected);
    assert_eq!(stopped.state.beta, {
        landweber_run(&problem, dt, &StoppingRule::fixed(expected)).unwrap().state.beta
    });
}

#[test]
fn adjusted_optimal_run_agrees_with_history_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random_problem(30, 30, 22);
    let truth = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
    let noise = DVector::from_fn(30, |_, _| rng.random_range(-0.5..0.5));
    let problem = base.with_response(base.x() * &truth + noise).unwrap();
    let dt = 1.0 / spectral_norm_sq(&problem);
    let k_max = 3000;
    let cfg = SolverConfig::new(Scheme::Landweber, dt).unwrap();
    let full = run(&problem, &cfg, &StoppingRule::adjusted_optimal(truth.clone(), k_max, k_max)).unwrap();
    let errors = full.error_history.unwrap();
    for k_min in [1, 700] {
        let expected = stop_adjusted_optimal(&errors, k_min, k_max);
        let out = run(&problem, &cfg, &StoppingRule::adjusted_optimal(truth.clone(), k_min, k_max)).unwrap();
        assert_eq!(out.k0, expected, "k_min={k_min}");
        assert_eq!(out.state.k, expected);
        let direct = run(&problem, &cfg, &StoppingRule::fixed(expected)).unwrap();
        assert_eq!(out.state.beta, direct.state.beta);
    }
}

#[test]
fn stopping_rule_validation() {
    let cfg = SolverConfig::new(Scheme::Landweber, 0.1).unwrap();
    let p = random_problem(4, 3, 1);
    let mut rule = StoppingRule::discrepancy(1.0, 1.0, 10);
    rule.noise_norm = None;
    assert!(matches!(run(&p, &cfg, &rule), Err(Error::Input(_))));
    let mut rule = StoppingRule::adjusted_optimal(DVector::zeros(3), 1, 10);
    rule.truth = None;
    assert!(matches!(run(&p, &cfg, &rule), Err(Error::Input(_))));
    let rule = StoppingRule::adjusted_optimal(DVector::zeros(3), 11, 10);
    assert!(matches!(run(&p, &cfg, &rule), Err(Error::Input(_))));
}

#[test]
fn oversized_step_reports_divergence() {
    let problem = random_problem(10, 8, 4);
    let dt = 10.0 / spectral_norm_sq(&problem);
    let err = landweber_run(&problem, dt, &StoppingRule::fixed(500)).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }));
}

#[test]
fn two_pass_landweber_doubles_steps() {
    let problem = random_problem(30, 25, 31);
    let dt = 1.0 / spectral_norm_sq(&problem);
    let cfg = SolverConfig::new(Scheme::Landweber, dt).unwrap();
    for k in [1, 10, 100] {
        let debiased = two_pass_debias(&problem, &cfg, k).unwrap();
        let doubled = run(&problem, &cfg, &StoppingRule::fixed(2 * k)).unwrap();
        assert!(max_abs(&debiased, &doubled.state.beta) < 1e-8);
    }
}

#[test]
fn two_pass_matches_debiased_closed_form() {
    let problem = random_problem(15, 12, 41);
    let cfg = SolverConfig::new(Scheme::Showalter, 1e-3).unwrap();
    let k = 1500;
    let two_pass = two_pass_debias(&problem, &cfg, k).unwrap();
    let spec = cfg.filter_at(k, 15).unwrap();
    let dec = decompose(&problem).unwrap();
    let closed =
        apply_spectral_filter(&dec, |l| spec.debiased_generator_value(l), problem.y(), 15).unwrap();
    assert!(max_abs(&two_pass, &closed) < 1e-7);
}

#[test]
fn mismatched_passes_are_rejected() {
    let problem = random_problem(6, 4, 2);
    let a = landweber_run(&problem, 0.01, &StoppingRule::fixed(3)).unwrap();
    let b = landweber_run(&problem, 0.01, &StoppingRule::fixed(4)).unwrap();
    assert!(matches!(combine_passes(&a.state, &b.state), Err(Error::Contract(_))));
}

#[test]
fn filter_mapping_identifies_steps() {
    let cfg = SolverConfig::new(Scheme::Landweber, 1e-3).unwrap();
    for k in [1, 7, 999, 5000] {
        assert_eq!(cfg.filter_at(k, 300).unwrap().landweber_steps(), k as u64);
    }
    let cfg = SolverConfig::new(Scheme::Nesterov { omega: 2.0 }, 1e-3).unwrap();
    for k in [1, 7, 999] {
        assert_eq!(cfg.filter_at(k, 300).unwrap().nesterov_steps(), k as u64);
    }
    let spec = SolverConfig::new(Scheme::Landweber, 1e-3).unwrap().filter_at(4, 300).unwrap();
    assert_eq!(spec.method, Method::Landweber { dt: 0.3 });
}
