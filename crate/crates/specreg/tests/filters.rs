use proptest::prelude::*;
use specreg::filters::*;

fn spec(method: Method, alpha: f64) -> FilterSpec {
    FilterSpec::new(method, alpha).unwrap()
}

#[test]
fn generator_examples() {
    assert_eq!(spec(Method::Ridge, 1.0).generator_value(1.0).unwrap(), 0.5);
    assert_eq!(spec(Method::Ridge, 1.0).bias_value(1.0).unwrap(), 0.5);
    let show = spec(Method::Showalter, 1.0).generator_value(1.0).unwrap();
    assert!((show - 0.632_120_558_828_557_7).abs() < 1e-15);
    let lw = spec(Method::Landweber { dt: 1.0 }, 0.5).generator_value(0.5).unwrap();
    assert!((lw - 1.5).abs() < 1e-15);
    assert_eq!(spec(Method::SpectralCutoff, 0.5).generator_value(0.3).unwrap(), 0.0);
    assert_eq!(spec(Method::SpectralCutoff, 0.5).generator_value(0.5).unwrap(), 2.0);
}

#[test]
fn soar_half_order_zero_at_pi() {
    let s = spec(Method::Soar { s_star: 0.5, rho: 1.0 }, 1.0);
    // √(ρλ/α) = π
    let r = s.bias_value(std::f64::consts::PI.powi(2)).unwrap();
    assert!(r.abs() < 1e-15);
}

#[test]
fn least_squares_has_no_bias() {
    let ls = FilterSpec::least_squares();
    for &l in &[1e-4, 0.3, 7.0] {
        assert_eq!(ls.bias_value(l).unwrap(), 0.0);
        assert_eq!(ls.debiased_generator_value(l).unwrap(), ls.generator_value(l).unwrap());
    }
}

#[test]
fn invalid_arguments() {
    assert!(FilterSpec::new(Method::Ridge, 0.0).is_err());
    assert!(FilterSpec::new(Method::Ridge, f64::NAN).is_err());
    assert!(FilterSpec::new(Method::Soar { s_star: -0.5, rho: 1.0 }, 0.1).is_err());
    assert!(FilterSpec::new(Method::Fractional { vartheta: 2.0 }, 0.1).is_err());
    assert!(FilterSpec::new(Method::Accelerated { kappa: -1.0 }, 0.1).is_err());
    assert!(FilterSpec::new(Method::Nesterov { dt: 0.1, omega: -1.0 }, 0.1).is_err());
    assert!(FilterSpec::new(Method::HeavyBall { eta: 0.0 }, 0.1).is_err());
    assert!(spec(Method::Ridge, 1.0).generator_value(0.0).is_err());
    assert!(spec(Method::Ridge, 1.0).generator_value(-1.0).is_err());
}

#[test]
fn landweber_debias_doubles_iterations() {
    let dt = 0.05;
    for k in [1u32, 3, 10, 250] {
        let once = spec(Method::Landweber { dt }, 1.0 / k as f64);
        let twice = spec(Method::Landweber { dt }, 1.0 / (2 * k) as f64);
        for &l in &[0.01, 0.5, 3.0, 15.0] {
            let a = once.debiased_generator_value(l).unwrap();
            let b = twice.generator_value(l).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "k={k} λ={l}");
        }
    }
}

#[test]
fn showalter_debias_halves_alpha() {
    for &alpha in &[1e-3, 0.1, 2.0] {
        for &l in &[1e-3, 0.2, 5.0] {
            let a = spec(Method::Showalter, alpha).debiased_generator_value(l).unwrap();
            let b = spec(Method::Showalter, alpha / 2.0).generator_value(l).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.max(1.0));
        }
    }
}

fn grid50() -> (Vec<f64>, Vec<f64>) {
    (log_grid(1e-6, 10.0, 50), log_grid(1e-6, 1.0, 50))
}

#[test]
fn defining_identity_on_grid() {
    let (lambdas, alphas) = grid50();
    for method in Method::catalog() {
        for &alpha in &alphas {
            let s = if method == Method::LeastSquares { FilterSpec::least_squares() } else { spec(method, alpha) };
            for &l in &lambdas {
                let (g, r) = s.evaluate(l).unwrap();
                assert!(g.is_finite() && r.is_finite());
                assert!((r + l * g - 1.0).abs() <= 1e-9, "{} α={alpha} λ={l}: {}", method.name(), r + l * g - 1.0);
            }
        }
    }
}

#[test]
fn debiased_generator_identity_on_grid() {
    let (lambdas, alphas) = grid50();
    for method in Method::catalog() {
        for &alpha in &alphas {
            let s = if method == Method::LeastSquares { FilterSpec::least_squares() } else { spec(method, alpha) };
            for &l in &lambdas {
                let r = s.bias_value(l).unwrap();
                let lhs = s.debiased_generator_value(l).unwrap();
                // Multiplied through by λ: (1 − r²)/λ divides rounding in r by λ ≥ 1e−6.
                let gap = (l * lhs - (1.0 - r * r)).abs();
                assert!(gap <= 1e-10, "{} α={alpha} λ={l}: {gap:e}", method.name());
            }
        }
    }
}

#[test]
fn fractional_order_one_is_showalter() {
    for &alpha in &[1e-3, 0.05, 1.0] {
        for &ratio in &[1e-3, 0.5, 1.0, 7.0, 30.0] {
            let l = ratio * alpha;
            let (gf, rf) = spec(Method::Fractional { vartheta: 1.0 }, alpha).evaluate(l).unwrap();
            let (gs, rs) = spec(Method::Showalter, alpha).evaluate(l).unwrap();
            assert!((rf - rs).abs() < 1e-8);
            assert!((gf - gs).abs() < 1e-8 * gs.max(1.0));
        }
    }
}

#[test]
fn accelerated_matches_showalter_exactly() {
    for &alpha in &[1e-4, 0.3] {
        for &l in &[1e-5, 0.2, 9.0] {
            let a = spec(Method::Accelerated { kappa: 1.5 }, alpha).evaluate(l).unwrap();
            let b = spec(Method::Showalter, alpha).evaluate(l).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn nesterov_bias_bound() {
    let dt = 0.1;
    for k in [1u64, 2, 5, 20, 100, 400] {
        let alpha = 1.0 / (k * k) as f64;
        let s = spec(Method::Nesterov { dt, omega: 5.0 }, alpha);
        assert_eq!(s.nesterov_steps(), k);
        for i in 1..100 {
            let l = i as f64 / 100.0 / dt;
            let r = s.bias_value(l).unwrap();
            let bound = (1.0 - dt * l).powf((k as f64 + 1.0) / 2.0);
            assert!(r.abs() <= bound * (1.0 + 1e-9) + 1e-15, "k={k} λ={l}");
        }
    }
}

#[test]
fn heavy_ball_branches_are_continuous() {
    let eta = 2.0;
    let s = spec(Method::HeavyBall { eta }, 0.5);
    let edge = eta * eta / 4.0;
    let below = s.bias_value(edge * (1.0 - 1e-6)).unwrap();
    let at = s.bias_value(edge).unwrap();
    let above = s.bias_value(edge * (1.0 + 1e-6)).unwrap();
    assert!((below - at).abs() < 1e-5 && (above - at).abs() < 1e-5);
}

#[test]
fn ridge_and_showalter_pass_definition_one() {
    let grid = ConditionGrid::default();
    let ridge = verify_generator_conditions(Method::Ridge, &grid, 1.0, Some(0.5)).unwrap();
    assert!(ridge.passed.all(), "{ridge:?}");
    let show = verify_generator_conditions(Method::Showalter, &grid, 1.0, Some(1.0)).unwrap();
    assert!(show.passed.all(), "{show:?}");
}

#[test]
fn every_method_passes_definition_one() {
    let grid = ConditionGrid::default();
    for method in Method::catalog() {
        let report = if method == Method::LeastSquares {
            verify_conditions_with("least_squares", |_, l| FilterSpec::least_squares().evaluate(l), &grid, 1.0, None)
        } else {
            verify_generator_conditions(method, &grid, 1.0, default_c0_bound(method))
        }
        .unwrap();
        assert!(report.passed.all(), "{report:?}");
        assert!(report.d12_cr.is_finite() && report.d13_c0.is_finite());
    }
}

#[test]
fn fake_generator_fails_condition_three() {
    let grid = ConditionGrid::default();
    let report = verify_conditions_with("fake", |_, l| Ok((3.0 / l, -2.0)), &grid, 1.0, None).unwrap();
    assert!(!report.passed.d13);
    assert!(!report.passed.d12);
}

#[test]
fn qualification_ratios() {
    let (lambdas, alphas) = (log_grid(1e-6, 10.0, 400), log_grid(1e-6, 1.0, 60));
    let show = verify_qualification(Method::Showalter, 1.0, &lambdas, &alphas).unwrap();
    assert!(show <= (-1f64).exp() * (1.0 + 1e-6), "{show}");
    assert!(show > 0.3);
    let ls = verify_qualification(Method::LeastSquares, 2.0, &lambdas, &alphas).unwrap();
    assert_eq!(ls, 0.0);
    // α·λ/(λ + α) ≤ α, so the order-one ratio stays below one.
    let ridge = verify_qualification(Method::Ridge, 1.0, &lambdas, &alphas).unwrap();
    assert!(ridge <= 1.0, "{ridge}");
    let half = verify_qualification(Method::Ridge, 0.5, &lambdas, &alphas).unwrap();
    assert!(half <= 0.5 * (1.0 + 1e-6), "{half}");
    assert!(verify_qualification(Method::Ridge, 0.0, &lambdas, &alphas).is_err());
}

#[test]
fn spec_json_roundtrip() {
    for method in Method::catalog() {
        let s = if method == Method::LeastSquares { FilterSpec::least_squares() } else { spec(method, 0.25) };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<FilterSpec>(&text).unwrap(), s);
    }
    let parsed: FilterSpec = serde_json::from_str(r#"{"method":"landweber","dt":0.5,"alpha":0.1}"#).unwrap();
    assert_eq!(parsed.landweber_steps(), 10);
}

proptest! {
    #[test]
    fn showalter_filter_is_bounded(log_alpha in -12.0f64..2.0, log_lambda in -12.0f64..3.0) {
        let (alpha, lambda) = (log_alpha.exp(), log_lambda.exp());
        let (g, r) = spec(Method::Showalter, alpha).evaluate(lambda).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(g * lambda <= 1.0 + 1e-15);
        prop_assert!(g <= 1.0 / alpha * (1.0 + 1e-12));
    }

    #[test]
    fn ridge_identity_holds(log_alpha in -12.0f64..2.0, log_lambda in -12.0f64..3.0) {
        let (alpha, lambda) = (log_alpha.exp(), log_lambda.exp());
        let s = spec(Method::Ridge, alpha);
        let (g, r) = s.evaluate(lambda).unwrap();
        prop_assert!((r + lambda * g - 1.0).abs() <= 1e-12);
        let tilde = s.debiased_generator_value(lambda).unwrap();
        prop_assert!((tilde - (1.0 + r) * g).abs() <= 1e-15 * tilde);
    }
}
