use libm::erfc;
use specreg::special::*;

#[test]
fn ml_half_order_matches_erfc_form() {
    for &x in &[0.1f64, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let got = mittag_leffler_neg(0.5, 1.0, x).unwrap();
        let want = (x * x).exp() * erfc(x);
        assert!((got - want).abs() <= 1e-10 * want.max(1e-3), "x={x} {got} {want}");
    }
}

#[test]
fn ml_order_two_is_cosine() {
    for &y in &[0.3f64, 1.0, 2.5, 4.0] {
        let got = mittag_leffler_neg(1.999_999_999, 1.0, y * y).unwrap();
        assert!((got - y.cos()).abs() < 1e-6, "y={y} {got}");
    }
}

#[test]
fn ml_recurrence_between_parameters() {
    for &a in &[0.3, 0.5, 0.8, 1.3, 1.7] {
        for &x in &[0.5, 3.0, 12.0, 30.0, 1e3] {
            let e1 = mittag_leffler_neg(a, 1.0, x).unwrap();
            let e2 = mittag_leffler_neg(a, a + 1.0, x).unwrap();
            assert!((e1 - (1.0 - x * e2)).abs() < 1e-9, "a={a} x={x}");
        }
    }
}

#[test]
fn bessel_half_order_is_sinc() {
    for &z in &[0.01f64, 1.0, 3.14159, 7.9, 8.1, 10.0, 16.9, 40.0, 41.5, 500.0] {
        let (lam, one_minus) = normalized_bessel(0.5, z).unwrap();
        assert!((lam - z.sin() / z).abs() < 1e-12, "z={z}");
        assert!((lam + one_minus - 1.0).abs() < 1e-15);
    }
}

#[test]
fn bessel_three_halves_closed_form() {
    for &z in &[0.5f64, 5.0, 8.5, 18.0, 25.0, 45.0, 100.0] {
        let want = 3.0 * (z.sin() - z * z.cos()) / (z * z * z);
        let (lam, _) = normalized_bessel(1.5, z).unwrap();
        assert!((lam - want).abs() < 1e-11, "z={z} {lam} {want}");
    }
}

#[test]
fn gegenbauer_low_orders() {
    let mu = 2.0;
    let x = 0.3;
    // C_2^{(μ)}(x) = 2μ(μ+1)x² − μ
    let c2 = |t: f64| 2.0 * mu * (mu + 1.0) * t * t - mu;
    let got = gegenbauer_normalized(2, mu, x).unwrap();
    assert!((got - c2(x) / c2(1.0)).abs() < 1e-14);
    assert_eq!(gegenbauer_normalized(7, mu, 1.0).unwrap(), 1.0);
}

#[test]
fn ml_matches_high_precision_reference() {
    // (a, x, E_a(−x), E_{a,a+1}(−x)) from 40-digit series summation
    let table = [
        (0.3, 2.0, 0.290232226167875353, 0.354883886916062323),
        (0.3, 10.0, 0.0726497290727720854, 0.0927350270927227915),
        (0.3, 25.0, 0.0301011475303109935, 0.0387959540987875603),
        (0.7, 2.0, 0.213786727015297265, 0.393106636492351367),
        (0.7, 10.0, 0.0361732655423091533, 0.0963826734457690847),
        (0.7, 25.0, 0.0138063443771699994, 0.0394477462249132),
        (1.5, 2.0, 0.0294306856028264717, 0.485284657198586764),
        (1.5, 10.0, -0.109713054252740147, 0.110971305425274015),
        (1.5, 25.0, -0.00302258524382774955, 0.04012090340975311),
    ];
    for &(a, x, e1, e2) in &table {
        let g1 = mittag_leffler_neg(a, 1.0, x).unwrap();
        let g2 = mittag_leffler_neg(a, a + 1.0, x).unwrap();
        assert!((g1 - e1).abs() < 1e-11, "a={a} x={x} {g1} {e1}");
        assert!((g2 - e2).abs() < 1e-11, "a={a} x={x} {g2} {e2}");
    }
}

