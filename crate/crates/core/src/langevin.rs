//! Synchronously coupled Langevin dynamics.
//!
//! `X` follows `dX = −∇U(X) dt + √2 dB` and `Y` follows
//! `dY = −∇U(Y) dt − ∇H(Y) dt + √2 dB` with the same Brownian increments and
//! `X₀ = Y₀ ∼ ν = e^{−H}μ`. The running supremum of `|X − Y|` and the
//! terminal gap are recorded per path.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logconcave::GaussianParams;
use crate::transport::ConvexitySpec;

/// Vector field `x ↦ out`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Scalar potential.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How the common starting point `X₀ = Y₀ ∼ ν` is drawn.
#[derive(Clone)]
pub enum InitialSampler {
    /// `ν` is exactly this Gaussian.
    Gaussian(GaussianParams),
    /// Rejection from `N(center, (2/κ_min) I)`, valid when `U` is
    /// `κ_min`-convex with minimiser `center` and `H` is `L`-Lipschitz.
    Rejection {
        u: ScalarField,
        h: ScalarField,
        center: Vec<f64>,
    },
}

impl std::fmt::Debug for InitialSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian(g) => write!(f, "Gaussian({g:?})"),
            Self::Rejection { center, .. } => write!(f, "Rejection {{ center: {center:?} }}"),
        }
    }
}

/// Potentials, Lipschitz constants and the curvature data behind the bound.
#[derive(Clone)]
pub struct CoupledProblem {
    dim: usize,
    grad_u: VectorField,
    lip_grad_u: f64,
    grad_h: VectorField,
    lip_grad_h: f64,
    spec: ConvexitySpec,
    sampler: InitialSampler,
}

fn sample_normal(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

impl CoupledProblem {
    /// Validates dimensions and spot-checks `⟨∇H(x), z⟩ ≤ ℓ(z)` and
    /// `⟨∇U(x) − ∇U(y), x − y⟩ ≥ ⟨x − y, K(x − y)⟩` at seeded random points.
    pub fn new(
        grad_u: VectorField,
        lip_grad_u: f64,
        grad_h: VectorField,
        lip_grad_h: f64,
        spec: ConvexitySpec,
        sampler: InitialSampler,
    ) -> Result<Self> {
        let dim = spec.dim();
        for (name, lip) in [("∇U", lip_grad_u), ("∇H", lip_grad_h)] {
            if !(lip.is_finite() && lip >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "Lipschitz constant of {name} must be finite, got {lip}"
                )));
            }
        }
        match &sampler {
            InitialSampler::Gaussian(g) if g.dim() != dim => {
                return Err(Error::SizeMismatch(g.dim(), dim));
            }
            InitialSampler::Rejection { center, .. } if center.len() != dim => {
                return Err(Error::SizeMismatch(center.len(), dim));
            }
            _ => {}
        }
        let problem = Self {
            dim,
            grad_u,
            lip_grad_u,
            grad_h,
            lip_grad_h,
            spec,
            sampler,
        };
        problem.spot_check()?;
        Ok(problem)
    }

    fn spot_check(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
        let d = self.dim;
        let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..256 {
            let x: Vec<f64> = sample_normal(&mut rng, d).iter().map(|v| 3.0 * v).collect();
            let y: Vec<f64> = sample_normal(&mut rng, d).iter().map(|v| 3.0 * v).collect();
            let z = sample_normal(&mut rng, d);
            (self.grad_h)(&x, &mut gx);
            let lhs: f64 = gx.iter().zip(&z).map(|(a, b)| a * b).sum();
            let ell = self.spec.ell().eval(&z);
            if lhs > ell + 1e-9 * (1.0 + ell.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "⟨∇H(x), z⟩ = {lhs} exceeds ℓ(z) = {ell} at x = {x:?}"
                )));
            }
            (self.grad_u)(&x, &mut gx);
            (self.grad_u)(&y, &mut gy);
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let mono: f64 = gx.iter().zip(&gy).zip(&diff).map(|((a, b), c)| (a - b) * c).sum();
            let quad = self.spec.quad(&diff);
            if mono < quad - 1e-9 * (1.0 + quad) {
                return Err(Error::InvalidParameter(format!(
                    "∇U is not K-monotone: {mono} < {quad}"
                )));
            }
        }
        Ok(())
    }

    /// `U = κ|x|²/2`, `H = ⟨l, x⟩`, so `ν = N(−l/κ, I/κ)`.
    pub fn gaussian_linear(kappa: f64, l: Vec<f64>) -> Result<Self> {
        let d = l.len();
        let lip = l.iter().map(|v| v * v).sum::<f64>().sqrt();
        let spec = ConvexitySpec::isotropic(d, kappa, lip)?;
        let mean: Vec<f64> = l.iter().map(|v| -v / kappa).collect();
        let sampler = InitialSampler::Gaussian(GaussianParams::new(
            mean,
            DMatrix::identity(d, d) / kappa,
        )?);
        let l2 = l.clone();
        Self::new(
            Arc::new(move |x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = kappa * v;
                }
            }),
            kappa,
            Arc::new(move |_, out| out.copy_from_slice(&l2)),
            0.0,
            spec,
            sampler,
        )
    }

    /// `U = ½⟨x, Kx⟩` with `K` taken from `spec`, and a caller-supplied `H`.
    /// The initial law is sampled by rejection.
    pub fn quadratic(
        spec: ConvexitySpec,
        h: ScalarField,
        grad_h: VectorField,
        lip_grad_h: f64,
    ) -> Result<Self> {
        let k = spec.k().clone();
        let d = spec.dim();
        let lip_u = spec.kappa_max();
        let k_u = k.clone();
        let u: ScalarField = Arc::new(move |x| {
            let v = DVector::from_row_slice(x);
            0.5 * v.dot(&(&k_u * &v))
        });
        let grad_u: VectorField = Arc::new(move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..d).map(|j| k[(i, j)] * x[j]).sum();
            }
        });
        Self::new(
            grad_u,
            lip_u,
            grad_h,
            lip_grad_h,
            spec,
            InitialSampler::Rejection {
                u,
                h,
                center: vec![0.0; d],
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &ConvexitySpec {
        &self.spec
    }

    pub fn lip_grad_u(&self) -> f64 {
        self.lip_grad_u
    }

    pub fn lip_grad_h(&self) -> f64 {
        self.lip_grad_h
    }

    /// Largest step accepted by [`simulate_coupled`].
    pub fn max_dt(&self) -> f64 {
        0.1 / (self.spec.kappa_max() + self.lip_grad_u + self.lip_grad_h)
    }

    /// Draws one sample from `ν`.
    pub fn sample_initial(&self, rng: &mut impl Rng) -> Vec<f64> {
        match &self.sampler {
            InitialSampler::Gaussian(g) => {
                let l = g.covariance().clone().cholesky().expect("validated SPD").l();
                let z = DVector::from_vec(sample_normal(rng, self.dim));
                (g.mean() + l * z).iter().copied().collect()
            }
            InitialSampler::Rejection { u, h, center } => {
                // U + H − (U + H)(c) ≥ κ r²/4 − L²/κ with r = |x − c|
                let kappa = self.spec.kappa_min();
                let lip = self.spec.lipschitz();
                let sd = (2.0 / kappa).sqrt();
                let base = u(center) + h(center);
                loop {
                    let z = sample_normal(rng, self.dim);
                    let x: Vec<f64> = center.iter().zip(&z).map(|(c, v)| c + sd * v).collect();
                    let r2: f64 = z.iter().map(|v| v * v).sum::<f64>() * sd * sd;
                    let log_acc = -(u(&x) + h(&x) - base) + 0.25 * kappa * r2 - lip * lip / kappa;
                    let uni: f64 = rng.random();
                    if uni.ln() < log_acc.min(0.0) {
                        return x;
                    }
                }
            }
        }
    }
}

/// Terminal state and running sup of one coupled path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sup_gap: f64,
}

fn run_path(
    problem: &CoupledProblem,
    mut x: Vec<f64>,
    mut y: Vec<f64>,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
    path: usize,
) -> Result<PathRecord> {
    let d = problem.dim;
    let (mut gx, mut gy, mut gh) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let noise = (2.0 * dt).sqrt();
    let gap = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut sup_gap = gap(&x, &y);
    for n in 0..steps {
        (problem.grad_u)(&x, &mut gx);
        (problem.grad_u)(&y, &mut gy);
        (problem.grad_h)(&y, &mut gh);
        for i in 0..d {
            let xi: f64 = rng.sample(StandardNormal);
            x[i] += -gx[i] * dt + noise * xi;
            y[i] += -(gy[i] + gh[i]) * dt + noise * xi;
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                path,
                time: (n + 1) as f64 * dt,
            });
        }
        sup_gap = sup_gap.max(gap(&x, &y));
    }
    Ok(PathRecord { x, y, sup_gap })
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn check_step(problem: &CoupledProblem, dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && dt <= problem.max_dt() * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} outside (0, {}]",
            problem.max_dt()
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad horizon {horizon}")));
    }
    Ok((horizon / dt).round().max(1.0) as usize)
}

/// Monte-Carlo ensemble of coupled paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// `5·dt·(Lip ∇U + Lip ∇H)`.
    pub tol_dt: f64,
    pub paths: Vec<PathRecord>,
}

impl CoupledEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }
}

/// Euler–Maruyama for the coupled pair, one independent ChaCha stream per
/// path. Results are bit-identical for a fixed seed regardless of threading.
pub fn simulate_coupled(
    problem: &CoupledProblem,
    n_paths: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<CoupledEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be ≥ 1".into()));
    }
    let steps = check_step(problem, dt, horizon)?;
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let x0 = problem.sample_initial(&mut rng);
            run_path(problem, x0.clone(), x0, dt, steps, &mut rng, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledEnsemble {
        dt,
        horizon,
        seed,
        tol_dt: 5.0 * dt * (problem.lip_grad_u + problem.lip_grad_h),
        paths,
    })
}

/// Single coupled path from prescribed starting points `x0`, `y0`.
pub fn simulate_from(
    problem: &CoupledProblem,
    x0: Vec<f64>,
    y0: Vec<f64>,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<PathRecord> {
    if x0.len() != problem.dim || y0.len() != problem.dim {
        return Err(Error::SizeMismatch(x0.len(), problem.dim));
    }
    let steps = check_step(problem, dt, horizon)?;
    run_path(problem, x0, y0, dt, steps, &mut path_rng(seed, 0), 0)
}

/// Running-sup statistics against a bound `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathwiseReport {
    pub max_sup: f64,
    pub violation_fraction: f64,
    pub bound: f64,
    pub tol_dt: f64,
}

/// Fraction of paths whose running sup exceeds `M·(1 + tol_dt)`.
pub fn pathwise_sup_report(ens: &CoupledEnsemble, bound: f64) -> PathwiseReport {
    let limit = bound * (1.0 + ens.tol_dt);
    let max_sup = ens.paths.iter().map(|p| p.sup_gap).fold(0.0, f64::max);
    let violations = ens.paths.iter().filter(|p| p.sup_gap > limit).count();
    PathwiseReport {
        max_sup,
        violation_fraction: violations as f64 / ens.paths.len() as f64,
        bound,
        tol_dt: ens.tol_dt,
    }
}

/// `(mean |X_T − Y_T|^p)^{1/p}` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WpEstimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn empirical_wp(ens: &CoupledEnsemble, p: f64) -> Result<WpEstimate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be in [1, ∞), got {p}")));
    }
    let samples: Vec<f64> = ens
        .paths
        .iter()
        .map(|r| {
            r.x.iter()
                .zip(&r.y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                .powf(p)
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(WpEstimate { value: 0.0, stderr: 0.0 });
    }
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let value = mean.powf(1.0 / p);
    Ok(WpEstimate {
        value,
        stderr: value / (p * mean) * (var / n).sqrt(),
    })
}

/// Summary written next to every `couple` run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub max_sup: f64,
    pub violation_fraction: f64,
    pub empirical_wp: BTreeMap<String, f64>,
}

pub fn summarize(ens: &CoupledEnsemble, bound: f64, ps: &[f64]) -> Result<EnsembleSummary> {
    let rep = pathwise_sup_report(ens, bound);
    let mut empirical = BTreeMap::new();
    for &p in ps {
        empirical.insert(p.to_string(), empirical_wp(ens, p)?.value);
    }
    Ok(EnsembleSummary {
        n_paths: ens.n_paths(),
        dt: ens.dt,
        horizon: ens.horizon,
        seed: ens.seed,
        max_sup: rep.max_sup,
        violation_fraction: rep.violation_fraction,
        empirical_wp: empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_drift_gap_is_deterministic() {
        let kappa = 2.0;
        let prob = CoupledProblem::gaussian_linear(kappa, vec![0.6, -0.8]).unwrap();
        let dt = 1e-3;
        let t = 1.5;
        let ens = simulate_coupled(&prob, 32, dt, t, 11).unwrap();
        let expect = 0.5 * (1.0 - (-kappa * t).exp());
        for p in &ens.paths {
            let gap = p.x.iter().zip(&p.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!((gap - expect).abs() < 2.0 * dt, "{gap} vs {expect}");
        }
        let rep = pathwise_sup_report(&ens, 0.5);
        assert_eq!(rep.violation_fraction, 0.0);
        let w2 = empirical_wp(&ens, 2.0).unwrap();
        assert!((w2.value - expect).abs() < 2.0 * dt);
    }

    #[test]
    fn zero_perturbation_keeps_paths_equal() {
        let prob = CoupledProblem::gaussian_linear(1.0, vec![0.0]).unwrap();
        let ens = simulate_coupled(&prob, 16, 1e-2, 1.0, 3).unwrap();
        assert!(ens.paths.iter().all(|p| p.x == p.y && p.sup_gap == 0.0));
        assert_eq!(pathwise_sup_report(&ens, 0.0).max_sup, 0.0);
        assert_eq!(empirical_wp(&ens, 4.0).unwrap().value, 0.0);
        assert!(empirical_wp(&ens, 0.5).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let prob = CoupledProblem::gaussian_linear(1.0, vec![0.3, 0.1]).unwrap();
        let a = simulate_coupled(&prob, 64, 1e-2, 2.0, 99).unwrap();
        let b = simulate_coupled(&prob, 64, 1e-2, 2.0, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_coupled(&prob, 64, 1e-2, 2.0, 100).unwrap();
        assert_ne!(a.paths[0].x, c.paths[0].x);
    }

    #[test]
    fn step_size_guard() {
        let prob = CoupledProblem::gaussian_linear(1.0, vec![0.3]).unwrap();
        assert!(simulate_coupled(&prob, 4, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn rejection_sampler_matches_gaussian_moments() {
        // H ≡ 0 through the rejection path reproduces N(0, 1/κ)
        let spec = ConvexitySpec::isotropic(1, 2.0, 0.0).unwrap();
        let prob = CoupledProblem::quadratic(
            spec,
            Arc::new(|_| 0.0),
            Arc::new(|_, out| out[0] = 0.0),
            0.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..40_000).map(|_| prob.sample_initial(&mut rng)[0]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.02 && (v - 0.5).abs() < 0.02, "{m} {v}");
    }

    #[test]
    fn bad_gradient_is_rejected() {
        let spec = ConvexitySpec::isotropic(1, 1.0, 0.1).unwrap();
        let r = CoupledProblem::quadratic(
            spec,
            Arc::new(|x| x[0]),
            Arc::new(|_, out| out[0] = 1.0),
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn synchronous_coupling_contracts() {
        let prob = CoupledProblem::gaussian_linear(1.5, vec![0.0, 0.0]).unwrap();
        let rec = simulate_from(&prob, vec![1.0, 0.0], vec![-1.0, 0.5], 1e-3, 2.0, 1).unwrap();
        let gap = rec.x.iter().zip(&rec.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let expect = 4.25f64.sqrt() * (-1.5f64 * 2.0).exp();
        assert!((gap - expect).abs() < 1e-2 * expect, "{gap} {expect}");
    }
}
