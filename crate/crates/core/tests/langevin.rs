use inflab::langevin::{empirical_wp, simulate_coupled, simulate_from, CoupledProblem};

#[test]
fn same_seed_same_ensemble_regardless_of_threads() {
    let p = CoupledProblem::gaussian_linear(1.5, vec![0.4, -0.3]).unwrap();
    let a = simulate_coupled(&p, 64, 1e-2, 2.0, 9).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| simulate_coupled(&p, 64, 1e-2, 2.0, 9).unwrap());
    assert_eq!(a.paths, b.paths);
    let c = simulate_coupled(&p, 64, 1e-2, 2.0, 10).unwrap();
    assert_ne!(a.paths, c.paths);
}

#[test]
fn halving_dt_reduces_the_error_of_the_deterministic_gap() {
    // for U = κ|x|²/2 and H linear the coupled gap solves ġ = l − κg exactly
    let (kappa, l) = (2.0f64, 0.5f64);
    let p = CoupledProblem::gaussian_linear(kappa, vec![l]).unwrap();
    let t = 1.0;
    let exact = (l / kappa) * (1.0 - (-kappa * t).exp());
    let err = |dt: f64| {
        let r = simulate_from(&p, vec![0.3], vec![0.3], dt, t, 1).unwrap();
        ((r.y[0] - r.x[0]).abs() - exact).abs()
    };
    let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
    assert!(e2 < 0.6 * e1 && e3 < 0.6 * e2, "{e1} {e2} {e3}");
}

#[test]
fn running_sup_grows_with_horizon() {
    let p = CoupledProblem::gaussian_linear(1.0, vec![0.2, 0.1]).unwrap();
    let mut last = 0.0;
    for t in [0.5, 1.0, 2.0, 4.0] {
        let r = simulate_from(&p, vec![1.0, 0.0], vec![0.5, 0.5], 1e-2, t, 3).unwrap();
        assert!(r.sup_gap >= last);
        last = r.sup_gap;
    }
}

#[test]
fn wp_estimate_is_monotone_in_p() {
    let p = CoupledProblem::gaussian_linear(1.0, vec![0.5]).unwrap();
    let ens = simulate_coupled(&p, 200, 1e-2, 1.0, 4).unwrap();
    let ws: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&q| empirical_wp(&ens, q).unwrap().value).collect();
    for w in ws.windows(2) {
        assert!(w[0] <= w[1] + 1e-12);
    }
}
