use proptest::prelude::*;

use inflab::gaussian_model::{contraction_factor, heatmap, Functional, QuadraticModel, Range};

proptest! {
    #[test]
    fn orbit_converges_to_equilibrium(alpha in 0.05..3.0f64, mu in -5.0..5.0f64, s2 in 0.01..5.0f64) {
        let m = QuadraticModel::new(alpha).unwrap();
        let (mu_n, s2_n) = *m.orbit(mu, s2, 2000).last().unwrap();
        prop_assert!(mu_n.abs() < 1e-8 * (1.0 + mu.abs()));
        prop_assert!((s2_n - 1.0 / m.beta).abs() < 1e-10);
    }

    #[test]
    fn beta_is_the_curvature_fixed_point(alpha in 0.01..10.0f64) {
        let b = QuadraticModel::new(alpha).unwrap().beta;
        prop_assert!((alpha + 2.0 * b / (1.0 + 2.0 * b) - b).abs() < 1e-12 * b);
    }
}

#[test]
fn heatmap_on_the_equilibrium_variance_is_the_squared_rate() {
    let m = QuadraticModel::new(0.45).unwrap();
    for f in [Functional::Kl, Functional::Fisher2] {
        let h = heatmap(&m, f, Range { lo: -4.0, hi: 4.0, count: 9 }, Range { lo: 0.2, hi: 2.0, count: 5 }).unwrap();
        for v in h.grey_line_values.iter().filter(|v| v.is_finite()) {
            assert!((v - m.rate().powi(2)).abs() < 1e-6, "{v}");
        }
    }
    // small shifts near equilibrium contract at the squared rate
    let f = contraction_factor(&m, 1e-3, 1.0 / m.beta, Functional::Kl).unwrap();
    assert!((f - m.rate().powi(2)).abs() < 1e-6);
}

#[test]
fn kl_factor_exceeds_squared_rate_in_the_sharp_far_corner() {
    let m = QuadraticModel::new(0.45).unwrap();
    assert!(contraction_factor(&m, 1e3, 1e-3, Functional::Kl).unwrap() > m.rate().powi(2));
    assert!(contraction_factor(&m, 1e3, 1e-3, Functional::Kl).unwrap() <= (1.0 + m.alpha).powi(-2) + 1e-6);
}
