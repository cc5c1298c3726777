use std::f64::consts::PI;

use proptest::prelude::*;

use inflab::gaussian_model::QuadraticModel;
use inflab::grid::{GridDensity, GridSpec};
use inflab::infinitesimal::{
    kernel_density, reproduction, solve_quasi_equilibrium, step, ModelConfig, Mortality,
};
use inflab::logconcave::{convexity_range, gaussian_density, second_moment_about_argmin, GaussianParams};

fn central(f: &GridDensity, r: f64) -> GridDensity {
    f.map_log(|x, l| if x[0].abs() <= r { l } else { f64::NEG_INFINITY }).unwrap()
}

/// Direct double sum of `∫∫ G(x − (y+y')/2) F(y)F(y') dy dy'`.
fn reproduction_oracle(f: &GridDensity) -> Vec<f64> {
    let g = f.grid();
    let p = f.normalized().unwrap().values();
    let w = g.weights();
    (0..g.len())
        .map(|k| {
            let x = g.coord(0, k);
            let mut s = 0.0;
            for i in 0..g.len() {
                for j in 0..g.len() {
                    let m = 0.5 * (g.coord(0, i) + g.coord(0, j));
                    s += w[i] * w[j] * p[i] * p[j] * (-0.5 * (x - m).powi(2)).exp();
                }
            }
            s / (2.0 * PI).sqrt()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reproduction_matches_double_integral(k in 0.8..3.0f64, s in -0.6..0.6f64, c in -0.5..0.5f64) {
        let g = GridSpec::line(-8.0, 8.0, 161).unwrap();
        let f = GridDensity::from_log_fn(g, |x| -0.5 * k * x[0] * x[0] + s * (1.0 + (x[0] - c).powi(2)).sqrt()).unwrap();
        let got = reproduction(&f.normalized().unwrap()).unwrap().values();
        let want = reproduction_oracle(&f);
        let top = want.iter().copied().fold(0.0, f64::max);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-4 * top, "{a} vs {b}");
        }
    }

    #[test]
    fn curvature_propagates_through_one_generation(k in 0.6..3.0f64, s in 0.0..0.5f64) {
        let alpha = 0.45;
        let g = GridSpec::line(-8.0, 8.0, 321).unwrap();
        let cfg = ModelConfig::new(Mortality::quadratic(alpha).unwrap(), None, g.clone(), 10, 1e-9).unwrap();
        let f = GridDensity::from_log_fn(g, |x| -0.5 * k * x[0] * x[0] - s * (1.0 + x[0] * x[0]).sqrt()).unwrap();
        let kf = convexity_range(&central(&f, 5.0)).unwrap().kappa_min;
        let (next, _) = step(&f, &cfg).unwrap();
        let kn = convexity_range(&central(&next, 3.0)).unwrap().kappa_min;
        prop_assert!(kn >= alpha + 2.0 * kf / (1.0 + 2.0 * kf) - 1e-4, "{kn}");
    }

    #[test]
    fn gaussian_step_follows_the_recursion(mu in -1.0..1.0f64, s2 in 0.3..1.5f64) {
        let model = QuadraticModel::new(0.45).unwrap();
        let g = GridSpec::line(-10.0, 10.0, 801).unwrap();
        let cfg = ModelConfig::new(Mortality::quadratic(0.45).unwrap(), None, g.clone(), 10, 1e-9).unwrap();
        let f = gaussian_density(&GaussianParams::univariate(mu, s2).unwrap(), &g).unwrap();
        let (next, ratio) = step(&f, &cfg).unwrap();
        let (m1, v1) = model.recursion_step(mu, s2);
        prop_assert!((next.mean().unwrap()[0] - m1).abs() < 1e-5);
        prop_assert!((next.variance().unwrap() - v1).abs() < 1e-5);
        prop_assert!((ratio - model.mass_ratio(mu, s2)).abs() < 1e-6);
    }
}

#[test]
fn localised_equilibrium_second_moment_for_several_radii() {
    for r in [4.0, 6.0, 8.0] {
        let g = GridSpec::line(-r - 2.0, r + 2.0, 2 * (8 * (r as usize + 2)) + 1).unwrap();
        let cfg = ModelConfig::new(Mortality::quadratic(0.45).unwrap(), Some(r), g, 300, 1e-9).unwrap();
        let q = solve_quasi_equilibrium(&cfg).unwrap();
        assert!(q.report.converged);
        let m2 = second_moment_about_argmin(&q.density).unwrap();
        assert!(m2 <= 1.0 / cfg.beta() + 1e-6, "R = {r}: {m2}");
    }
}

#[test]
fn kernel_is_the_analytic_bivariate_gaussian() {
    let sigma2 = 0.8;
    let g = GridSpec::line(-7.0, 7.0, 141).unwrap();
    let f = gaussian_density(&GaussianParams::univariate(0.0, sigma2).unwrap(), &g).unwrap();
    for x in [0.0, 0.7, -1.5] {
        let p = kernel_density(&f, x).unwrap();
        // precision (1/σ²)I + ¼𝟙𝟙ᵀ, linear term (x/2)(1, 1)
        let m = 0.5 * x / (1.0 / sigma2 + 0.5);
        let a = 1.0 / sigma2 + 0.25;
        let det = a * a - 0.0625;
        let (var, cov) = (a / det, -0.25 / det);
        let mean = p.mean().unwrap();
        let c = p.covariance().unwrap();
        assert!((mean[0] - m).abs() < 1e-6 && (mean[1] - m).abs() < 1e-6, "{mean:?}");
        assert!((c[0] - var).abs() < 1e-4 && (c[3] - var).abs() < 1e-4, "{c:?}");
        assert!((c[1] - cov).abs() < 1e-4, "{c:?}");
    }
}
