//! Relative entropy and relative Fisher informations on grids, plus the
//! closed forms for Gaussian pairs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{GridDensity, GridSpec};
use crate::logconcave::GaussianParams;

/// Mass of `nu` allowed outside `supp(mu)` before `nu ≪ mu` is declared broken.
pub const SUPPORT_MASS_TOL: f64 = 1e-12;

/// Growth factor of the max-gradient estimate under radius doubling above
/// which `I∞` is reported as infinite. Bounded log-ratio slopes give ≈ 1,
/// linearly growing ones give ≈ 2.
pub const INF_GROWTH_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DivergenceKind {
    Kl,
    FisherP(f64),
    FisherInf,
}

impl DivergenceKind {
    pub fn validate(self) -> Result<Self> {
        match self {
            DivergenceKind::FisherP(p) if !(p.is_finite() && p >= 1.0) => Err(
                Error::InvalidParameter(format!("Fisher exponent must be finite and ≥ 1, got {p}")),
            ),
            k => Ok(k),
        }
    }
}

/// Mass of the normalized `nu` on nodes where `mu` vanishes.
fn mass_outside(nu_p: &[f64], mu: &GridDensity) -> f64 {
    nu_p.iter()
        .zip(mu.log_values())
        .filter(|(_, l)| !l.is_finite())
        .map(|(p, _)| *p)
        .sum()
}

/// `KL(nu | mu) = ∫ ρ log ρ dμ`, evaluated as `Σ q (ρ log ρ − ρ + 1)` so every
/// term is nonnegative.
pub fn kl_divergence(nu: &GridDensity, mu: &GridDensity) -> Result<f64> {
    nu.grid().ensure_same(mu.grid())?;
    let p = nu.probabilities()?;
    let q = mu.probabilities()?;
    if mass_outside(&p, mu) > SUPPORT_MASS_TOL {
        return Ok(f64::INFINITY);
    }
    let shift = nu.mass().ln() - mu.mass().ln();
    let kl = (0..p.len())
        .filter(|&k| q[k] > 0.0)
        .map(|k| {
            let log_rho = nu.log_values()[k] - mu.log_values()[k] - shift;
            if log_rho == f64::NEG_INFINITY {
                q[k]
            } else {
                let rho = log_rho.exp();
                q[k] * (rho * log_rho - rho + 1.0)
            }
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Nodes where the centered gradient of `log(nu/mu)` is defined, with the
/// gradient vectors.
fn log_ratio_gradients(nu: &GridDensity, mu: &GridDensity) -> Result<Vec<(usize, Vec<f64>)>> {
    nu.grid().ensure_same(mu.grid())?;
    let grid = nu.grid();
    let n = grid.points();
    let r: Vec<f64> = nu
        .log_values()
        .iter()
        .zip(mu.log_values())
        .map(|(a, b)| if b.is_finite() { a - b } else { f64::NAN })
        .collect();
    let mut out = Vec::new();
    for k in 0..grid.len() {
        if !r[k].is_finite() {
            continue;
        }
        let [i, j] = grid.multi_index(k);
        let mut grad = Vec::with_capacity(grid.dim());
        let mut ok = true;
        for axis in 0..grid.dim() {
            let c = if axis == 0 { i } else { j };
            if c == 0 || c + 1 == n {
                ok = false;
                break;
            }
            let (lo, hi) = if axis == 0 {
                (grid.flat_index(i - 1, j), grid.flat_index(i + 1, j))
            } else {
                (grid.flat_index(i, j - 1), grid.flat_index(i, j + 1))
            };
            if !(r[lo].is_finite() && r[hi].is_finite()) {
                ok = false;
                break;
            }
            grad.push((r[hi] - r[lo]) / (2.0 * grid.spacing(axis)));
        }
        if ok {
            out.push((k, grad));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `I_p(nu | mu) = ∫ |∇ log(dν/dμ)|^p dν` by central differences.
pub fn fisher_information_p(nu: &GridDensity, mu: &GridDensity, p: f64) -> Result<f64> {
    DivergenceKind::FisherP(p).validate()?;
    let probs = nu.probabilities()?;
    if mass_outside(&probs, mu) > SUPPORT_MASS_TOL {
        return Ok(f64::INFINITY);
    }
    let grads = log_ratio_gradients(nu, mu)?;
    Ok(grads
        .iter()
        .map(|(k, g)| probs[*k] * norm(g).powf(p))
        .sum())
}

/// `I∞(nu | mu)`: the largest gradient magnitude of `log(nu/mu)` over the
/// interior of the support. On a convex support this is the Lipschitz
/// constant of the log-ratio.
pub fn fisher_information_inf(nu: &GridDensity, mu: &GridDensity) -> Result<f64> {
    if nu.is_zero() || mu.is_zero() {
        return Err(Error::EmptySupport);
    }
    let p = nu.probabilities()?;
    if mass_outside(&p, mu) > SUPPORT_MASS_TOL {
        return Ok(f64::INFINITY);
    }
    let grads = log_ratio_gradients(nu, mu)?;
    Ok(grads.iter().map(|(_, g)| norm(g)).fold(0.0, f64::max))
}

/// Result of the two-radius `I∞` protocol.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InfFisherEstimate {
    pub at_radius: f64,
    pub at_double_radius: f64,
    /// `at_radius`, or `+∞` when the estimate grows under radius doubling.
    pub value: f64,
    pub unbounded: bool,
}

/// Evaluates `I∞` on `grid` and on the grid with doubled half-widths (same
/// spacing, same centre). `build` produces `(nu, mu)` on a given grid.
pub fn fisher_information_inf_two_radius(
    grid: &GridSpec,
    build: impl Fn(&GridSpec) -> Result<(GridDensity, GridDensity)>,
) -> Result<InfFisherEstimate> {
    let wide = doubled_grid(grid)?;
    let (nu, mu) = build(grid)?;
    let (nu2, mu2) = build(&wide)?;
    let a = fisher_information_inf(&nu, &mu)?;
    let b = fisher_information_inf(&nu2, &mu2)?;
    let unbounded = a.is_infinite() || b.is_infinite() || b > INF_GROWTH_THRESHOLD * a.max(1e-12);
    Ok(InfFisherEstimate {
        at_radius: a,
        at_double_radius: b,
        value: if unbounded { f64::INFINITY } else { a },
        unbounded,
    })
}

/// Same spacing and centre, twice the half-width on every axis.
pub fn doubled_grid(grid: &GridSpec) -> Result<GridSpec> {
    let d = grid.dim();
    let lower = (0..d)
        .map(|a| {
            let c = 0.5 * (grid.lower(a) + grid.upper(a));
            c - (grid.upper(a) - grid.lower(a))
        })
        .collect();
    let upper = (0..d)
        .map(|a| {
            let c = 0.5 * (grid.lower(a) + grid.upper(a));
            c + (grid.upper(a) - grid.lower(a))
        })
        .collect();
    GridSpec::new(lower, upper, 2 * grid.points() - 1)
}

/// `‖nu − mu‖₁` between the normalized densities.
pub fn l1_distance(nu: &GridDensity, mu: &GridDensity) -> Result<f64> {
    nu.grid().ensure_same(mu.grid())?;
    let p = nu.probabilities()?;
    let q = mu.probabilities()?;
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum())
}

/// Closed-form divergence of `a` relative to `b`.
///
/// KL and `I_2` accept 1D pairs and diagonal pairs in any dimension
/// (coordinates add up). `I_p` for other `p` and `I∞` need equal covariances,
/// where the log-ratio is affine; `I∞` is `+∞` otherwise.
pub fn gaussian_divergence(a: &GaussianParams, b: &GaussianParams, kind: DivergenceKind) -> Result<f64> {
    let kind = kind.validate()?;
    if a.dim() != b.dim() {
        return Err(Error::SizeMismatch(a.dim(), b.dim()));
    }
    let equal_cov = (a.covariance() - b.covariance()).abs().max()
        <= 1e-14 * b.covariance().abs().max();
    let diff: DVector<f64> = a.mean() - b.mean();
    let affine_slope = || -> f64 {
        let chol = b.covariance().clone().cholesky().expect("SPD");
        chol.solve(&diff).norm()
    };
    match kind {
        DivergenceKind::FisherInf => Ok(if equal_cov { affine_slope() } else { f64::INFINITY }),
        DivergenceKind::FisherP(p) if equal_cov => Ok(affine_slope().powf(p)),
        DivergenceKind::Kl | DivergenceKind::FisherP(_) => {
            let is_diag = |m: &nalgebra::DMatrix<f64>| {
                (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
            };
            if a.dim() > 1 && !(is_diag(a.covariance()) && is_diag(b.covariance())) {
                return Err(Error::InvalidParameter(
                    "closed forms need 1D or diagonal covariances".into(),
                ));
            }
            if let DivergenceKind::FisherP(p) = kind {
                if p != 2.0 {
                    return Err(Error::InvalidParameter(format!(
                        "no closed form for I_{p} with unequal variances"
                    )));
                }
            }
            let mut total = 0.0;
            for i in 0..a.dim() {
                let (m, s2) = (a.mean()[i], a.covariance()[(i, i)]);
                let (mb, sb2) = (b.mean()[i], b.covariance()[(i, i)]);
                total += match kind {
                    DivergenceKind::Kl => {
                        0.5 * ((m - mb).powi(2) / sb2 + (sb2 / s2).ln() - 1.0 + s2 / sb2)
                    }
                    _ => (m - mb).powi(2) / sb2.powi(2) + (s2 - sb2).powi(2) / (s2 * sb2.powi(2)),
                };
            }
            Ok(total)
        }
    }
}
