use proptest::prelude::*;

use inflab::functionals::{
    fisher_information_inf, fisher_information_p, gaussian_divergence, kl_divergence, l1_distance, DivergenceKind,
};
use inflab::grid::{GridDensity, GridSpec};
use inflab::logconcave::{
    argmin_shift_check, convexity_range, convolve, gaussian_density, second_moment_about_argmin, GaussianParams,
};

fn line() -> GridSpec {
    GridSpec::line(-10.0, 10.0, 801).unwrap()
}

fn gauss(m: f64, v: f64, grid: &GridSpec) -> GridDensity {
    gaussian_density(&GaussianParams::univariate(m, v).unwrap(), grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_divergences_match_gaussian_closed_forms(
        m1 in -1.0..1.0f64, m2 in -1.0..1.0f64, v1 in 0.5..1.5f64, v2 in 0.5..1.5f64,
    ) {
        let g = line();
        let (a, b) = (GaussianParams::univariate(m1, v1).unwrap(), GaussianParams::univariate(m2, v2).unwrap());
        let (nu, mu) = (gauss(m1, v1, &g), gauss(m2, v2, &g));
        let kl = gaussian_divergence(&a, &b, DivergenceKind::Kl).unwrap();
        prop_assert!((kl_divergence(&nu, &mu).unwrap() - kl).abs() < 1e-4 * (1.0 + kl));
        let i2 = gaussian_divergence(&a, &b, DivergenceKind::FisherP(2.0)).unwrap();
        prop_assert!((fisher_information_p(&nu, &mu, 2.0).unwrap() - i2).abs() < 1e-3 * (1.0 + i2));
    }

    #[test]
    fn pinsker(m1 in -1.0..1.0f64, m2 in -1.0..1.0f64, v1 in 0.4..1.5f64, v2 in 0.4..1.5f64) {
        let g = line();
        let (nu, mu) = (gauss(m1, v1, &g), gauss(m2, v2, &g));
        let tv = 0.5 * l1_distance(&nu, &mu).unwrap();
        prop_assert!(tv <= (0.5 * kl_divergence(&nu, &mu).unwrap()).sqrt() + 1e-6);
    }

    #[test]
    fn fisher_p_increases_towards_sup(t in 0.05..0.8f64) {
        // bounded score ratio: tilt by a Lipschitz function
        let g = line();
        let mu = gauss(0.0, 1.0, &g);
        let nu = mu.map_log(|x, l| l + t * (1.0 + x[0] * x[0]).sqrt()).unwrap();
        let inf = fisher_information_inf(&nu, &mu).unwrap();
        let roots: Vec<f64> = [2.0, 4.0, 16.0, 64.0]
            .iter()
            .map(|&p| fisher_information_p(&nu, &mu, p).unwrap().powf(1.0 / p))
            .collect();
        for w in roots.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-9);
        }
        prop_assert!(roots[3] <= inf + 1e-9);
        prop_assert!(roots[3] > 0.8 * inf);
    }

    #[test]
    fn convolution_adds_inverse_curvatures(v1 in 0.3..1.2f64, v2 in 0.3..1.2f64) {
        let g = GridSpec::line(-8.0, 8.0, 401).unwrap();
        let c = convolve(&gauss(0.0, v1, &g), &gauss(0.0, v2, &g)).unwrap();
        let window = c.map_log(|x, l| if x[0].abs() <= 4.0 { l } else { f64::NEG_INFINITY }).unwrap();
        let r = convexity_range(&window).unwrap();
        let expected = 1.0 / (v1 + v2);
        prop_assert!((r.kappa_min - expected).abs() < 1e-3 * expected);
        prop_assert!((r.kappa_max - expected).abs() < 1e-3 * expected);
    }

    #[test]
    fn second_moment_below_inverse_curvature(k in 0.5..3.0f64, s in -0.8..0.45f64, c in -1.0..1.0f64) {
        let g = line();
        let f = GridDensity::from_log_fn(g, |x| -0.5 * k * x[0] * x[0] + s * (1.0 + (x[0] - c).powi(2)).sqrt()).unwrap();
        let kappa = convexity_range(&f).unwrap().kappa_min;
        prop_assert!(second_moment_about_argmin(&f).unwrap() <= 1.0 / kappa + 1e-3);
    }

    #[test]
    fn argmin_shift_inequality(a in 0.5..3.0f64, b in 0.2..2.0f64, y in -3.0..3.0f64, x in -1.0..1.0f64) {
        let g = GridSpec::line(-6.0, 6.0, 1201).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| 0.5 * a * (g.coord(0, i) - x).powi(2)).collect();
        let u: Vec<f64> = (0..g.len()).map(|i| 0.5 * b * (g.coord(0, i) - y).powi(2)).collect();
        prop_assert!(argmin_shift_check(&g, &v, &u, a, b).unwrap().holds);
    }
}

#[test]
fn heat_flow_preserves_curvature_bound_for_non_gaussian() {
    // f ∝ exp(−x² − 0.5 cosh-like tail), κ(f) ≥ 2; f ∗ N(0, t) has κ ≥ 1/(1/2 + t)
    let g = GridSpec::line(-8.0, 8.0, 401).unwrap();
    let f = GridDensity::from_log_fn(g.clone(), |x| -x[0] * x[0] - 0.5 * (1.0 + x[0] * x[0]).sqrt()).unwrap();
    let kf = convexity_range(&f.map_log(|x, l| if x[0].abs() <= 4.0 { l } else { f64::NEG_INFINITY }).unwrap())
        .unwrap()
        .kappa_min;
    assert!(kf >= 2.0 - 1e-6);
    for t in [0.1, 0.5, 1.0] {
        let c = convolve(&f, &gauss(0.0, t, &g)).unwrap();
        let w = c.map_log(|x, l| if x[0].abs() <= 3.0 { l } else { f64::NEG_INFINITY }).unwrap();
        let kc = convexity_range(&w).unwrap().kappa_min;
        assert!(kc >= 1.0 / (1.0 / kf + t) - 1e-3, "t = {t}: {kc}");
    }
}

#[test]
fn tensorization_of_kl_on_the_plane() {
    let g2 = GridSpec::square(-7.0, 7.0, 141).unwrap();
    let a = GaussianParams::diagonal(vec![0.3, -0.2], &[0.8, 1.2]).unwrap();
    let b = GaussianParams::diagonal(vec![0.0, 0.0], &[1.0, 1.0]).unwrap();
    let joint = kl_divergence(&gaussian_density(&a, &g2).unwrap(), &gaussian_density(&b, &g2).unwrap()).unwrap();
    let g1 = GridSpec::line(-7.0, 7.0, 141).unwrap();
    let sum = kl_divergence(&gauss(0.3, 0.8, &g1), &gauss(0.0, 1.0, &g1)).unwrap()
        + kl_divergence(&gauss(-0.2, 1.2, &g1), &gauss(0.0, 1.0, &g1)).unwrap();
    assert!((joint - sum).abs() < 1e-6 * (1.0 + sum), "{joint} vs {sum}");
}
