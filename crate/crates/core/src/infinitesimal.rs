//! Reproduction, selection and the quasi-equilibrium iteration of the
//! infinitesimal model on a 1D trait grid.
//!
//! `R[F](x) = ∫∫ G(x − (x₁+x₂)/2) F(x₁)F(x₂) dx₁dx₂ / ‖F‖` with `G` the
//! standard Gaussian, `S[F] = e^{−m}F`, and `T = S ∘ R`.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{fisher_information_inf, kl_divergence};
use crate::gaussian_model::solve_beta;
use crate::grid::{GridDensity, GridSpec};
use crate::logconcave::{convexity_range, convolve};

/// Relative mass lost off the grid by reproduction before it is an error.
pub const COVERAGE_TOL: f64 = 1e-6;

/// Gaps below this are treated as numerical noise when forming ratios.
pub const GAP_NOISE_FLOOR: f64 = 1e-8;

/// Iterations averaged for the final `λ`.
pub const LAMBDA_TAIL: usize = 5;

/// Mortality `m ≥ 0` with `m(0) = 0` and declared convexity constant `α`.
#[derive(Clone)]
pub struct Mortality {
    alpha: f64,
    m: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    quadratic: bool,
}

impl std::fmt::Debug for Mortality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mortality")
            .field("alpha", &self.alpha)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

impl Mortality {
    /// `m(x) = α|x|²/2`.
    pub fn quadratic(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            alpha,
            m: Arc::new(move |x| 0.5 * alpha * x.iter().map(|v| v * v).sum::<f64>()),
            quadratic: true,
        })
    }

    /// Caller-supplied `m`, assumed `α`-convex.
    pub fn custom(alpha: f64, m: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        let at0 = m(&[0.0]);
        if at0.abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("m(0) must be 0, got {at0}")));
        }
        Ok(Self {
            alpha,
            m,
            quadratic: false,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_quadratic(&self) -> bool {
        self.quadratic
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.m)(x)
    }
}

/// Model and solver settings.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub mortality: Mortality,
    /// Radius of the closed ball outside which the population is removed.
    pub r_loc: Option<f64>,
    pub grid: GridSpec,
    pub max_iter: usize,
    /// Stop once `I∞` between successive normalized iterates drops below this.
    pub tol_inf: f64,
}

impl ModelConfig {
    pub fn new(mortality: Mortality, r_loc: Option<f64>, grid: GridSpec, max_iter: usize, tol_inf: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("the iteration runs on a 1D trait grid".into()));
        }
        if let Some(r) = r_loc {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("R_loc must be > 0, got {r}")));
            }
        }
        if !(tol_inf > 0.0) || max_iter == 0 {
            return Err(Error::InvalidParameter("need tol_inf > 0 and max_iter ≥ 1".into()));
        }
        for k in 0..grid.len() {
            let v = mortality.eval(&grid.node(k));
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mortality must be ≥ 0, got {v} at {:?}",
                    grid.node(k)
                )));
            }
        }
        Ok(Self {
            mortality,
            r_loc,
            grid,
            max_iter,
            tol_inf,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.mortality.alpha()
    }

    /// Curvature of the reference initial datum.
    pub fn beta(&self) -> f64 {
        solve_beta(self.alpha()).expect("alpha validated")
    }

    fn inside(&self, x: &[f64]) -> bool {
        match self.r_loc {
            None => true,
            Some(r) => x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r * (1.0 + 1e-12),
        }
    }

    /// `F₀ = exp(−β|x|²/2)` on the ball.
    pub fn initial_datum(&self) -> Result<GridDensity> {
        let beta = self.beta();
        GridDensity::from_log_fn(self.grid.clone(), |x| {
            if self.inside(x) {
                -0.5 * beta * x.iter().map(|v| v * v).sum::<f64>()
            } else {
                f64::NEG_INFINITY
            }
        })
    }
}

fn gaussian_kernel_row(grid: &GridSpec) -> Vec<f64> {
    let n = grid.points();
    let h = grid.spacing(0);
    let c = (2.0 * PI).sqrt();
    (0..2 * n - 1)
        .map(|k| {
            let d = (k as f64 - (n - 1) as f64) * h;
            (-0.5 * d * d).exp() / c
        })
        .collect()
}

/// `R[F]` on the grid of `F`. Mass is preserved; the zero density maps to zero.
pub fn reproduction(f: &GridDensity) -> Result<GridDensity> {
    let grid = f.grid().clone();
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("reproduction is implemented on 1D grids".into()));
    }
    if f.is_zero() {
        return Ok(GridDensity::zero(grid));
    }
    let fh = f.normalized()?;
    // density of X₁ + X₂ at s = 2x sits on every other node of the sum grid
    let sum = convolve(&fh, &fh)?;
    let n = grid.points();
    let mid_logs: Vec<f64> = (0..n).map(|j| LN_2 + sum.log_values()[2 * j]).collect();
    let mid = GridDensity::from_log_values(grid.clone(), mid_logs)?.normalized()?;

    let top = mid.log_values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wq: Vec<f64> = (0..n)
        .map(|i| grid.weight(i) * (mid.log_values()[i] - top).exp())
        .collect();
    let kernel = gaussian_kernel_row(&grid);
    let logs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let s: f64 = (0..n).map(|i| wq[i] * kernel[j + n - 1 - i]).sum();
            s.ln() + top
        })
        .collect();
    let out = GridDensity::from_log_values(grid, logs)?;
    let deficit = 1.0 - out.mass();
    if deficit > COVERAGE_TOL {
        return Err(Error::Coverage(format!(
            "reproduction loses {deficit:.3e} of the mass off the grid"
        )));
    }
    Ok(out.shifted_log(f.mass().ln() - out.mass().ln()))
}

/// `S[F] = e^{−m}F`, restricted to the closed ball when localised.
pub fn selection(f: &GridDensity, cfg: &ModelConfig) -> Result<GridDensity> {
    f.map_log(|x, l| {
        if cfg.inside(x) {
            l - cfg.mortality.eval(x)
        } else {
            f64::NEG_INFINITY
        }
    })
}

/// `T[F]` and the mass ratio `‖T[F]‖/‖F‖`.
pub fn step(f: &GridDensity, cfg: &ModelConfig) -> Result<(GridDensity, f64)> {
    if f.is_zero() {
        return Err(Error::InvalidParameter("step needs a nonzero density".into()));
    }
    let next = selection(&reproduction(f)?, cfg)?;
    let ratio = next.mass() / f.mass();
    Ok((next, ratio))
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateRecord {
    pub n: usize,
    pub lambda_est: f64,
    pub inf_gap: f64,
    pub kl_gap: f64,
    pub variance: f64,
    pub kappa_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterateReport {
    pub records: Vec<IterateRecord>,
    pub converged: bool,
    pub beta_reference: f64,
    pub lambda: f64,
}

impl IterateReport {
    /// `I∞` gap ratios of consecutive iterations where both gaps exceed `floor`.
    pub fn gap_ratios(&self, floor: f64) -> Vec<f64> {
        self.records
            .windows(2)
            .filter(|w| w[0].inf_gap > floor && w[1].inf_gap > floor)
            .map(|w| w[1].inf_gap / w[0].inf_gap)
            .collect()
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,lambda_est,inf_gap,kl_gap,variance,kappa_min")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.lambda_est, r.inf_gap, r.kl_gap, r.variance, r.kappa_min
            )?;
        }
        Ok(())
    }
}

/// Normalized limit of the iteration with its eigenvalue estimate.
#[derive(Debug, Clone)]
pub struct QuasiEquilibrium {
    pub density: GridDensity,
    pub lambda: f64,
    pub report: IterateReport,
}

/// Iterates `F_{n+1} = T[F_n]` from the reference datum `exp(−β|x|²/2)`.
pub fn solve_quasi_equilibrium(cfg: &ModelConfig) -> Result<QuasiEquilibrium> {
    solve_from(cfg, cfg.initial_datum()?)
}

/// Same as [`solve_quasi_equilibrium`] from a caller-supplied `F₀`.
pub fn solve_from(cfg: &ModelConfig, f0: GridDensity) -> Result<QuasiEquilibrium> {
    cfg.grid.ensure_same(f0.grid())?;
    let mut cur = f0.normalized()?;
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, cur.clone());
    let mut converged = false;
    for n in 1..=cfg.max_iter {
        let (next, ratio) = step(&cur, cfg)?;
        let next = next.normalized()?;
        let inf_gap = fisher_information_inf(&next, &cur)?;
        let kl_gap = kl_divergence(&next, &cur)?;
        records.push(IterateRecord {
            n,
            lambda_est: ratio,
            inf_gap,
            kl_gap,
            variance: next.variance()?,
            kappa_min: convexity_range(&next).map(|r| r.kappa_min).unwrap_or(f64::NAN),
        });
        cur = next;
        if inf_gap < best.0 {
            best = (inf_gap, cur.clone());
        }
        if inf_gap < cfg.tol_inf {
            converged = true;
            break;
        }
    }
    let tail = &records[records.len().saturating_sub(LAMBDA_TAIL)..];
    let lambda = tail.iter().map(|r| r.lambda_est).sum::<f64>() / tail.len() as f64;
    Ok(QuasiEquilibrium {
        density: if converged { cur } else { best.1 },
        lambda,
        report: IterateReport {
            records,
            converged,
            beta_reference: cfg.beta(),
            lambda,
        },
    })
}

/// Normalized `P(x₁, x₂; x) ∝ F(x₁)F(x₂)G(x − (x₁+x₂)/2)` on the tensor square
/// of `F`'s grid.
pub fn kernel_density(f: &GridDensity, x: f64) -> Result<GridDensity> {
    if f.dim() != 1 {
        return Err(Error::InvalidParameter("kernel_density needs a 1D parent density".into()));
    }
    let sq = f.grid().tensor_square()?;
    let n = f.grid().points();
    let logs: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let (a, b) = (f.log_values()[i], f.log_values()[j]);
            let m = 0.5 * (sq.coord(0, i) + sq.coord(1, j));
            a + b - 0.5 * (x - m).powi(2)
        })
        .collect();
    let p = GridDensity::from_log_values(sq, logs)?.normalized()?;
    let probs = p.probabilities()?;
    let edge: f64 = (0..probs.len()).filter(|&k| p.grid().is_boundary(k)).map(|k| probs[k]).sum();
    if edge > 1e-8 {
        return Err(Error::Coverage(format!(
            "kernel at x = {x} puts {edge:.3e} of its mass on the grid boundary"
        )));
    }
    Ok(p)
}

/// One step of the convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceStep {
    pub n: usize,
    pub inf_gap: f64,
    pub kl_gap: f64,
    /// `|λ_n − λ|`, `NaN` at `n = 0`.
    pub lambda_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<ConvergenceStep>,
    /// `exp` of the least-squares slope of `log I∞(F_n|F*)`; `None` if too few points.
    pub inf_rate: Option<f64>,
    pub kl_rate: Option<f64>,
    pub inf_infinite: bool,
    pub warnings: Vec<String>,
}

/// `exp` of the least-squares slope of `log y` against `n`, using the entries
/// above `floor`. Needs at least three points.
pub fn fit_geometric_rate(series: &[(usize, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, y)| y.is_finite() && *y > floor)
        .map(|(n, y)| (*n as f64, y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Floor below which KL values are excluded from the rate fit.
pub const KL_NOISE_FLOOR: f64 = 1e-14;

/// Runs `n_steps` generations from `f0` and measures the distance to `fstar`.
pub fn convergence_report(
    f0: &GridDensity,
    cfg: &ModelConfig,
    n_steps: usize,
    fstar: &GridDensity,
    lambda: f64,
) -> Result<ConvergenceReport> {
    let fstar = fstar.normalized()?;
    let mut cur = f0.normalized()?;
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut warnings = Vec::new();
    let inf0 = fisher_information_inf(&cur, &fstar)?;
    let inf_infinite = inf0.is_infinite();
    if inf_infinite {
        warnings.push("I∞(F0|F*) is infinite on the grid; only the KL rate is fitted".to_string());
    }
    steps.push(ConvergenceStep {
        n: 0,
        inf_gap: inf0,
        kl_gap: kl_divergence(&cur, &fstar)?,
        lambda_gap: f64::NAN,
    });
    for n in 1..=n_steps {
        let (next, ratio) = step(&cur, cfg)?;
        cur = next.normalized()?;
        steps.push(ConvergenceStep {
            n,
            inf_gap: fisher_information_inf(&cur, &fstar)?,
            kl_gap: kl_divergence(&cur, &fstar)?,
            lambda_gap: (ratio - lambda).abs(),
        });
    }
    let inf_rate = if inf_infinite {
        None
    } else {
        fit_geometric_rate(
            &steps.iter().map(|s| (s.n, s.inf_gap)).collect::<Vec<_>>(),
            GAP_NOISE_FLOOR,
        )
    };
    let kl_rate = fit_geometric_rate(
        &steps.iter().map(|s| (s.n, s.kl_gap)).collect::<Vec<_>>(),
        KL_NOISE_FLOOR,
    );
    Ok(ConvergenceReport {
        steps,
        inf_rate,
        kl_rate,
        inf_infinite,
        warnings,
    })
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,inf_gap,kl_gap,lambda_gap")?;
        for s in &self.steps {
            writeln!(out, "{},{},{},{}", s.n, s.inf_gap, s.kl_gap, s.lambda_gap)?;
        }
        Ok(())
    }
}
