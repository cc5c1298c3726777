//! The acceptance suite: one check per headline numerical claim, each with a
//! tolerance and a runtime budget.

use std::f64::consts::{FRAC_PI_6, SQRT_2};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::functionals::{fisher_information_p, kl_divergence, l1_distance};
use crate::gaussian_model::{contraction_factor, Functional, QuadraticModel};
use crate::grid::{GridDensity, GridSpec};
use crate::infinitesimal::{
    convergence_report, kernel_density, solve_from, solve_quasi_equilibrium, ModelConfig, Mortality, GAP_NOISE_FLOOR,
};
use crate::langevin::{empirical_wp, pathwise_sup_report, simulate_coupled, CoupledProblem, InitialSampler};
use crate::logconcave::{convexity_range, convolve, gaussian_density, second_moment_about_argmin, GaussianParams};
use crate::transport::{
    bottleneck_distance, bound_anisotropic, bound_generic, bound_generic_sweep, ti_check, w_infinity_quantized,
    wasserstein_1d, ConvexitySpec, GroundNorm,
};

/// Full sizes, or reduced Monte-Carlo and trial counts for a fast smoke run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Quick,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
    pub budget_s: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<28} {:>8.3}s / {:>6}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed_s,
            self.budget_s,
            self.detail
        )
    }
}

type Check = fn(Mode) -> Result<(bool, String)>;

/// Names, budgets and check functions, in report order.
pub const CRITERIA: &[(&str, f64, Check)] = &[
    ("beta_landmarks", 1e-3, beta_landmarks),
    ("shifted_gaussian_sharpness", 1.0, shifted_gaussian_sharpness),
    ("anisotropic_vs_sweep", 10.0, anisotropic_vs_sweep),
    ("coupled_pathwise_bound", 60.0, coupled_pathwise_bound),
    ("lp_transport_information", 60.0, lp_transport_information),
    ("quasi_equilibrium", 30.0, quasi_equilibrium),
    ("kernel_contraction", 60.0, kernel_contraction),
    ("convergence_rates", 30.0, convergence_rates),
    ("gaussian_exceedance", 1e-3, gaussian_exceedance),
    ("property_suites", 120.0, property_suites),
];

pub fn run_one(name: &'static str, budget: f64, check: Check, mode: Mode) -> CriterionResult {
    let start = Instant::now();
    let outcome = check(mode);
    let elapsed = start.elapsed();
    let within = elapsed <= Duration::from_secs_f64(budget);
    let (ok, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if !within {
        detail.push_str(&format!("; over the {budget}s budget"));
    }
    CriterionResult {
        name,
        passed: ok && within,
        detail,
        elapsed_s: elapsed.as_secs_f64(),
        budget_s: budget,
    }
}

pub fn run_all(mode: Mode) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|&(name, budget, check)| run_one(name, budget, check, mode))
        .collect()
}

const ALPHA: f64 = 0.45;

fn beta_landmarks(_: Mode) -> Result<(bool, String)> {
    let m = QuadraticModel::new(ALPHA)?;
    let inv = 1.0 / m.beta;
    let sq = m.rate().powi(2);
    let lim = (1.0 + ALPHA).powi(-2);
    let ok = (inv - 0.87).abs() <= 0.01 && (sq - 0.37).abs() <= 0.01 && (lim - 0.48).abs() <= 0.01;
    Ok((ok, format!("1/β = {inv:.4}, (½+β)⁻² = {sq:.4}, (1+α)⁻² = {lim:.4}")))
}

fn shifted_gaussian_sharpness(_: Mode) -> Result<(bool, String)> {
    let grid = GridSpec::line(-12.0, 12.0, 4801)?;
    let mut worst_w: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for kappa in [0.5, 1.0, 2.0] {
        for delta in [0.1, 1.0] {
            let mu = gaussian_density(&GaussianParams::univariate(0.0, 1.0 / kappa)?, &grid)?;
            let nu = gaussian_density(&GaussianParams::univariate(delta, 1.0 / kappa)?, &grid)?;
            let w = wasserstein_1d(&mu, &nu, f64::INFINITY)?;
            let ti = ti_check(&mu, &nu, f64::INFINITY)?;
            worst_w = worst_w.max((w - delta).abs());
            worst_eq = worst_eq.max((ti.lhs - ti.rhs).abs());
        }
    }
    Ok((
        worst_w <= 1e-3 && worst_eq <= 1e-3,
        format!("max |W∞ − δ| = {worst_w:.2e}, max |lhs − rhs| = {worst_eq:.2e}"),
    ))
}

fn anisotropic_vs_sweep(mode: Mode) -> Result<(bool, String)> {
    let trials = if mode == Mode::Full { 1000 } else { 200 };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for _ in 0..trials {
        let ka = rng.random_range(0.1..10.0);
        let kb = rng.random_range(0.1..10.0);
        let la = rng.random_range(0.1..10.0);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let spec = ConvexitySpec::anisotropic_plane(ka, kb, la, theta)?;
        let sweep = bound_generic_sweep(&spec);
        let closed = bound_anisotropic(ka, kb, la)?;
        worst = worst.max((sweep.value - closed.value).abs());
        if !sweep.witness_feasible(&spec) {
            infeasible += 1;
        }
    }
    Ok((
        worst <= 1e-6 && infeasible == 0,
        format!("{trials} trials, max |sweep − closed form| = {worst:.2e}, infeasible witnesses = {infeasible}"),
    ))
}

/// `K = 4 P_A + P_B` with `A` at 30°, `H = L√(1 + ⟨a,x⟩²)`, `L = 2`.
pub fn anisotropic_problem() -> Result<CoupledProblem> {
    let (ka, kb, lip) = (4.0, 1.0, 2.0);
    let spec = ConvexitySpec::anisotropic_plane(ka, kb, lip, FRAC_PI_6)?;
    let a = [FRAC_PI_6.cos(), FRAC_PI_6.sin()];
    CoupledProblem::quadratic(
        spec,
        Arc::new(move |x| lip * (1.0 + (a[0] * x[0] + a[1] * x[1]).powi(2)).sqrt()),
        Arc::new(move |x, out| {
            let s = a[0] * x[0] + a[1] * x[1];
            let g = lip * s / (1.0 + s * s).sqrt();
            out[0] = g * a[0];
            out[1] = g * a[1];
        }),
        lip,
    )
}

fn coupled_pathwise_bound(mode: Mode) -> Result<(bool, String)> {
    let n_paths = if mode == Mode::Full { 10_000 } else { 1_000 };
    let prob = anisotropic_problem()?;
    let bound = bound_generic(prob.spec())?;
    let horizon = 8.0 / prob.spec().kappa_min();
    let ens = simulate_coupled(&prob, n_paths, 1e-3, horizon, 7)?;
    let rep = pathwise_sup_report(&ens, bound.value);
    Ok((
        rep.violation_fraction == 0.0,
        format!(
            "{n_paths} paths, M = {:.4} ({:?}), max sup|X−Y| = {:.4}, violations = {}",
            bound.value, bound.regime, rep.max_sup, rep.violation_fraction
        ),
    ))
}

struct LpPair {
    name: &'static str,
    kappa: f64,
    u: fn(f64) -> f64,
    h: fn(f64) -> f64,
    problem: CoupledProblem,
}

fn lp_pairs() -> Result<Vec<LpPair>> {
    let second = CoupledProblem::quadratic(
        ConvexitySpec::isotropic(1, 2.0, 1.0)?,
        Arc::new(|x| (1.0 + x[0] * x[0]).sqrt()),
        Arc::new(|x, out| out[0] = x[0] / (1.0 + x[0] * x[0]).sqrt()),
        1.0,
    )?;
    let third = CoupledProblem::new(
        Arc::new(|x, out| out[0] = x[0] + x[0].tanh()),
        2.0,
        Arc::new(|x, out| out[0] = x[0] / (1.0 + x[0] * x[0])),
        1.0,
        ConvexitySpec::isotropic(1, 1.0, 0.5)?,
        InitialSampler::Rejection {
            u: Arc::new(|x| 0.5 * x[0] * x[0] + x[0].cosh().ln()),
            h: Arc::new(|x| 0.5 * (1.0 + x[0] * x[0]).ln()),
            center: vec![0.0],
        },
    )?;
    Ok(vec![
        LpPair {
            name: "gaussian/linear",
            kappa: 1.0,
            u: |x| 0.5 * x * x,
            h: |x| 0.8 * x,
            problem: CoupledProblem::gaussian_linear(1.0, vec![0.8])?,
        },
        LpPair {
            name: "quadratic/hyperbolic",
            kappa: 2.0,
            u: |x| x * x,
            h: |x| (1.0 + x * x).sqrt(),
            problem: second,
        },
        LpPair {
            name: "logcosh/logistic-tail",
            kappa: 1.0,
            u: |x| 0.5 * x * x + x.cosh().ln(),
            h: |x| 0.5 * (1.0 + x * x).ln(),
            problem: third,
        },
    ])
}

fn lp_transport_information(mode: Mode) -> Result<(bool, String)> {
    let n_paths = if mode == Mode::Full { 10_000 } else { 2_000 };
    let grid = GridSpec::line(-12.0, 12.0, 4801)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, pair) in lp_pairs()?.into_iter().enumerate() {
        let (u, h) = (pair.u, pair.h);
        let mu = GridDensity::from_log_fn(grid.clone(), |x| -u(x[0]))?;
        let nu = GridDensity::from_log_fn(grid.clone(), |x| -u(x[0]) - h(x[0]))?;
        let ens = simulate_coupled(&pair.problem, n_paths, 1e-3, 8.0 / pair.kappa, 100 + i as u64)?;
        let mut worst_margin = f64::INFINITY;
        for p in [1.0, 2.0, 4.0] {
            let est = empirical_wp(&ens, p)?;
            let rhs = fisher_information_p(&nu, &mu, p)?.powf(1.0 / p) / pair.kappa;
            let margin = rhs + 3.0 * est.stderr + ens.tol_dt - est.value;
            worst_margin = worst_margin.min(margin);
            ok &= margin >= 0.0;
        }
        parts.push(format!("{}: min slack {worst_margin:.3e}", pair.name));
    }
    Ok((ok, parts.join("; ")))
}

/// Settings of the reference localised problem.
pub fn reference_config() -> Result<ModelConfig> {
    ModelConfig::new(
        Mortality::quadratic(ALPHA)?,
        Some(6.0),
        GridSpec::line(-8.0, 8.0, 513)?,
        500,
        1e-9,
    )
}

fn quasi_equilibrium(_: Mode) -> Result<(bool, String)> {
    let cfg = reference_config()?;
    let beta = cfg.beta();
    let rate = 1.0 / (0.5 + beta);
    let q = solve_quasi_equilibrium(&cfg)?;
    let var = q.density.variance()?;
    let kmin = convexity_range(&q.density)?.kappa_min;
    // the reference start is already near the fixed point, so the gap ratios
    // are measured from a tilted start as well
    let tilted = cfg.initial_datum()?.map_log(|x, l| l + 0.5 * x[0])?;
    let qt = solve_from(&cfg, tilted)?;
    let mut ratios = q.report.gap_ratios(GAP_NOISE_FLOOR);
    ratios.extend(qt.report.gap_ratios(GAP_NOISE_FLOOR));
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let spread = l1_distance(&q.density, &qt.density)?;
    let ok = q.report.converged
        && qt.report.converged
        && (var - 1.0 / beta).abs() <= 0.01
        && kmin >= beta - 0.02
        && q.lambda > 0.0
        && q.lambda < 1.0
        && ratios.len() >= 5
        && max_ratio <= rate + 0.02;
    Ok((
        ok,
        format!(
            "var = {var:.5} (1/β = {:.5}), κ_min = {kmin:.5} (β = {beta:.5}), λ = {:.6}, \
             {} gap ratios ≤ {max_ratio:.4} (bound {:.4}), L1 between starts = {spread:.1e}",
            1.0 / beta,
            q.lambda,
            ratios.len(),
            rate + 0.02
        ),
    ))
}

fn kernel_contraction(_: Mode) -> Result<(bool, String)> {
    let model = QuadraticModel::new(ALPHA)?;
    let grid = GridSpec::line(-7.0, 7.0, 257)?;
    let f = gaussian_density(&model.equilibrium(), &grid)?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [0.5, 1.0, 2.0] {
        let p = kernel_density(&f, -0.5 * d)?;
        let pt = kernel_density(&f, 0.5 * d)?;
        let w = w_infinity_quantized(&p, &pt, 1024, GroundNorm::Euclidean)?;
        let expect = model.rate() * d / SQRT_2;
        let rel = (w.value - expect).abs() / expect;
        worst = worst.max(rel);
        parts.push(format!("|x−x̃| = {d}: {:.5} vs {expect:.5}", w.value));
    }
    Ok((worst <= 0.02, format!("{}; max rel err {worst:.2e}", parts.join(", "))))
}

fn convergence_rates(_: Mode) -> Result<(bool, String)> {
    let cfg = reference_config()?;
    let rate = 1.0 / (0.5 + cfg.beta());
    let q = solve_quasi_equilibrium(&cfg)?;
    let f0 = q.density.map_log(|x, l| l + 0.5 * x[0])?;
    let rep = convergence_report(&f0, &cfg, 15, &q.density, q.lambda)?;
    let (inf, kl) = (rep.inf_rate.unwrap_or(f64::NAN), rep.kl_rate.unwrap_or(f64::NAN));
    Ok((
        inf <= rate + 0.02 && kl <= rate * rate + 0.05,
        format!(
            "I∞ rate {inf:.4} (bound {:.4}), KL rate {kl:.4} (bound {:.4})",
            rate + 0.02,
            rate * rate + 0.05
        ),
    ))
}

fn gaussian_exceedance(_: Mode) -> Result<(bool, String)> {
    let m = QuadraticModel::new(ALPHA)?;
    let thr = m.rate().powi(2);
    let cap = (1.0 + ALPHA).powi(-2) + 1e-3;
    let kl = contraction_factor(&m, 1e3, 1e-3, Functional::Kl)?;
    let f2 = contraction_factor(&m, 1e3, 1e-3, Functional::Fisher2)?;
    let ok = kl > thr && f2 > thr && kl < cap && f2 < cap;
    Ok((ok, format!("KL {kl:.4}, I₂ {f2:.4}, threshold {thr:.4}, cap {cap:.4}")))
}

fn permutation_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn rec(a: &[Vec<f64>], b: &[Vec<f64>], used: &mut Vec<bool>, i: usize, cur: f64, best: &mut f64) {
        if i == a.len() {
            *best = best.min(cur);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                let d = GroundNorm::Euclidean.distance(&a[i], &b[j]);
                rec(a, b, used, i + 1, cur.max(d), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}

fn property_suites(mode: Mode) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();

    let instances = if mode == Mode::Full { 1000 } else { 200 };
    let mut mismatches = 0;
    for _ in 0..instances {
        let pts = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
        };
        let (a, b) = (pts(&mut rng), pts(&mut rng));
        if bottleneck_distance(&a, &b, GroundNorm::Euclidean)? != permutation_oracle(&a, &b) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        failures.push(format!("bottleneck: {mismatches}/{instances} mismatches"));
    }

    let grid = GridSpec::line(-8.0, 8.0, 513)?;
    let h2 = grid.spacing(0).powi(2);
    let mut conv_err: f64 = 0.0;
    let mut heat_excess: f64 = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (v1, v2) = (rng.random_range(0.3..1.0), rng.random_range(0.3..1.0));
        let (m1, m2) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let f = gaussian_density(&GaussianParams::univariate(m1, v1)?, &grid)?;
        let g = gaussian_density(&GaussianParams::univariate(m2, v2)?, &grid)?;
        let c = central_window(&convolve(&f, &g)?, m1 + m2, 5.0)?;
        let r = convexity_range(&c)?;
        let expect = 1.0 / (v1 + v2);
        conv_err = conv_err.max((r.kappa_min - expect).abs()).max((r.kappa_max - expect).abs());
        let t = v2;
        let heat = central_window(&convolve(&f, &gaussian_density(&GaussianParams::univariate(0.0, t)?, &grid)?)?, m1, 5.0)?;
        heat_excess = heat_excess.max(convexity_range(&heat)?.kappa_max - 1.0 / t);
    }
    if conv_err > h2 {
        failures.push(format!("convolution law error {conv_err:.2e} > h² = {h2:.2e}"));
    }
    if heat_excess > h2 {
        failures.push(format!("heat-flow excess {heat_excess:.2e} > h²"));
    }

    let mut moment_excess: f64 = f64::NEG_INFINITY;
    let sq = GridSpec::square(-8.0, 8.0, 129)?;
    for i in 0..20 {
        let a = rng.random_range(0.5..2.0);
        let b = rng.random_range(0.0..2.0);
        let c: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g, d) = if i % 2 == 0 { (grid.clone(), 1) } else { (sq.clone(), 2) };
        let f = GridDensity::from_log_fn(g, |x| {
            let q: f64 = x.iter().zip(&c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
            let r: f64 = x.iter().zip(&e).map(|(xi, ei)| (xi - ei).powi(2)).sum();
            -0.5 * a * q - b * (1.0 + r).sqrt()
        })?;
        let kappa = convexity_range(&f)?.kappa_min;
        let m2 = second_moment_about_argmin(&f)?;
        moment_excess = moment_excess.max(m2 - d as f64 / kappa);
    }
    if moment_excess > 1e-3 {
        failures.push(format!("second-moment bound exceeded by {moment_excess:.2e}"));
    }

    let mut pinsker_excess: f64 = f64::NEG_INFINITY;
    let mut tensor_err: f64 = 0.0;
    let small = GridSpec::line(-8.0, 8.0, 129)?;
    for _ in 0..20 {
        let (m, v) = (rng.random_range(-0.5..0.5), rng.random_range(0.4..1.0));
        let nu = gaussian_density(&GaussianParams::univariate(m, v)?, &grid)?;
        let mu = gaussian_density(&GaussianParams::univariate(0.0, 1.0)?, &grid)?;
        let kl = kl_divergence(&nu, &mu)?;
        pinsker_excess = pinsker_excess.max(l1_distance(&nu, &mu)? - (2.0 * kl).sqrt());

        let nu1 = gaussian_density(&GaussianParams::univariate(m, v)?, &small)?;
        let mu1 = gaussian_density(&GaussianParams::univariate(0.0, 1.0)?, &small)?;
        let nu2 = gaussian_density(&GaussianParams::diagonal(vec![m, m], &[v, v])?, &sq)?;
        let mu2 = gaussian_density(&GaussianParams::diagonal(vec![0.0, 0.0], &[1.0, 1.0])?, &sq)?;
        let k1 = kl_divergence(&nu1, &mu1)?;
        let k2 = kl_divergence(&nu2, &mu2)?;
        tensor_err = tensor_err.max((k2 - 2.0 * k1).abs() / k1.max(1e-12));
    }
    if pinsker_excess > 1e-6 {
        failures.push(format!("Pinsker violated by {pinsker_excess:.2e}"));
    }
    if tensor_err > 1e-9 {
        failures.push(format!("tensorization relative error {tensor_err:.2e}"));
    }

    let summary = format!(
        "bottleneck {mismatches}/{instances} mismatches, conv err {conv_err:.1e}, heat excess {heat_excess:.1e}, \
         moment excess {moment_excess:.1e}, Pinsker excess {pinsker_excess:.1e}, tensor err {tensor_err:.1e}"
    );
    if failures.is_empty() {
        Ok((true, summary))
    } else {
        Ok((false, format!("{summary}; {}", failures.join("; "))))
    }
}

/// Restricts a 1D density to `|x − c| ≤ half_width`, away from the
/// truncation effects at the ends of a sum grid.
fn central_window(f: &GridDensity, c: f64, half_width: f64) -> Result<GridDensity> {
    f.map_log(|x, l| if (x[0] - c).abs() <= half_width { l } else { f64::NEG_INFINITY })
}
