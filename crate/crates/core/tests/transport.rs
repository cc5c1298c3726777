use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use inflab::grid::GridSpec;
use inflab::logconcave::{gaussian_density, GaussianParams};
use inflab::transport::{
    bottleneck_distance, bound_anisotropic, bound_generic, bound_generic_sweep, wasserstein_1d, ConvexitySpec,
    DirectionalBound, GroundNorm, Regime,
};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_bottleneck(a: &[Vec<f64>], b: &[Vec<f64>], norm: GroundNorm) -> f64 {
    permutations(a.len())
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| norm.distance(&a[i], &b[j])).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bottleneck_matches_permutation_search((a, b) in (1usize..=6).prop_flat_map(|n| (cloud(n), cloud(n)))) {
        for norm in [GroundNorm::Euclidean, GroundNorm::PairL1] {
            let fast = bottleneck_distance(&a, &b, norm).unwrap();
            prop_assert!((fast - brute_bottleneck(&a, &b, norm)).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_norm_within_sqrt2_of_euclidean((a, b) in (1usize..=20).prop_flat_map(|n| (cloud(n), cloud(n)))) {
        let e = bottleneck_distance(&a, &b, GroundNorm::Euclidean).unwrap();
        let l = bottleneck_distance(&a, &b, GroundNorm::PairL1).unwrap();
        prop_assert!(e <= l + 1e-12);
        prop_assert!(l <= std::f64::consts::SQRT_2 * e + 1e-12);
    }

    #[test]
    fn translate_costs_its_length(a in cloud(30), v in prop::collection::vec(-2.0..2.0f64, 2)) {
        let b: Vec<Vec<f64>> = a.iter().rev().map(|p| vec![p[0] + v[0], p[1] + v[1]]).collect();
        let d = bottleneck_distance(&a, &b, GroundNorm::Euclidean).unwrap();
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        // any matching moves the centroid by v, so |v| is also a lower bound
        prop_assert!((d - norm).abs() < 1e-9);
    }

    #[test]
    fn wp_monotone_and_above_mean_gap(
        m1 in -1.0..1.0f64, m2 in -1.0..1.0f64, v1 in 0.3..1.5f64, v2 in 0.3..1.5f64,
    ) {
        let grid = GridSpec::line(-12.0, 12.0, 1201).unwrap();
        let mu = gaussian_density(&GaussianParams::univariate(m1, v1).unwrap(), &grid).unwrap();
        let nu = gaussian_density(&GaussianParams::univariate(m2, v2).unwrap(), &grid).unwrap();
        let ws: Vec<f64> = [1.0, 2.0, 4.0, f64::INFINITY].iter().map(|&p| wasserstein_1d(&mu, &nu, p).unwrap()).collect();
        for w in ws.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-9);
        }
        prop_assert!(ws[0] >= (m1 - m2).abs() - 1e-3);
        // Gaussian W₂ closed form
        let w2 = ((m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2)).sqrt();
        prop_assert!((ws[1] - w2).abs() < 5e-3);
    }

    #[test]
    fn sweep_matches_dense_angle_scan(
        a in 0.3..4.0f64, c in 0.3..4.0f64, b in -0.9..0.9f64, l in 0.1..3.0f64, w in 0.0..2.0f64,
    ) {
        let off = b * (a * c).sqrt();
        let k = DMatrix::from_row_slice(2, 2, &[a, off, off, c]);
        let ell = move |z: &[f64]| l * z[0].abs() + w * z[1].max(0.0);
        let spec = ConvexitySpec::new(k.clone(), DirectionalBound::Custom(Arc::new(ell))).unwrap();
        let sweep = bound_generic_sweep(&spec);
        let n = 200_000;
        let dense = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                let z = [t.cos(), t.sin()];
                ell(&z) / spec.quad(&z)
            })
            .fold(0.0, f64::max);
        prop_assert!(sweep.value >= dense * (1.0 - 1e-9));
        prop_assert!(sweep.value <= dense * (1.0 + 1e-6));
        prop_assert!(sweep.witness_feasible(&spec));
    }
}

#[test]
fn anisotropic_closed_form_agrees_with_sweep_at_many_angles() {
    for (ka, kb) in [(1.0, 1.0), (1.5, 1.0), (3.0, 1.0), (9.0, 0.25)] {
        let closed = bound_anisotropic(ka, kb, 1.3).unwrap();
        for deg in [0.0, 17.0, 45.0, 133.0] {
            let spec = ConvexitySpec::anisotropic_plane(ka, kb, 1.3, f64::to_radians(deg)).unwrap();
            let sweep = bound_generic_sweep(&spec);
            assert!((sweep.value - closed.value).abs() < 1e-9 * closed.value);
            assert_eq!(bound_generic(&spec).unwrap().regime, closed.regime);
        }
    }
    assert_eq!(bound_anisotropic(2.0, 1.0, 1.0).unwrap().regime, Regime::AnisoCase1);
    assert_eq!(bound_anisotropic(2.5, 1.0, 1.0).unwrap().regime, Regime::AnisoCase2);
}
