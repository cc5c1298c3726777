//! Grid Gaussians, convolution and log-concavity diagnostics.
//!
//! Convexity is always read off `-log f` by centered second differences on
//! nodes whose full stencil lies inside the support, so hard cut-offs
//! (`-inf` nodes) never enter an estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDensity, GridSpec};

/// Mean vector and SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "covariance must be {d}x{d}"
            )));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 * covariance.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(covariance.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
        })
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean], DMatrix::from_element(1, 1, variance))
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        Self::new(mean, DMatrix::from_diagonal(&DVector::from_row_slice(variances)))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn std_dev(&self, axis: usize) -> f64 {
        self.covariance[(axis, axis)].sqrt()
    }

    /// Normalized log-density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let chol = self
            .covariance
            .clone()
            .cholesky()
            .expect("covariance validated as SPD");
        let diff = DVector::from_row_slice(x) - &self.mean;
        let sol = chol.solve(&diff);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        -0.5 * (diff.dot(&sol) + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Scalar curvature envelope of `-log f` over the support interior.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConvexityRange {
    pub kappa_min: f64,
    pub kappa_max: f64,
}

/// Exact Gaussian log-density sampled on `grid`.
///
/// The grid must cover six standard deviations around the mean on every axis.
pub fn gaussian_density(params: &GaussianParams, grid: &GridSpec) -> Result<GridDensity> {
    if params.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "{}-dimensional Gaussian on a {}-dimensional grid",
            params.dim(),
            grid.dim()
        )));
    }
    for a in 0..grid.dim() {
        let m = params.mean[a];
        let s = params.std_dev(a);
        if m - 6.0 * s < grid.lower(a) || m + 6.0 * s > grid.upper(a) {
            return Err(Error::Coverage(format!(
                "axis {a}: [{}, {}] does not cover mean {m} ± 6·{s}",
                grid.lower(a),
                grid.upper(a)
            )));
        }
    }
    let d = grid.dim();
    let chol = params.covariance.clone().cholesky().expect("SPD");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let norm = -0.5 * (log_det + d as f64 * (2.0 * std::f64::consts::PI).ln());
    let mean = params.mean.clone();
    GridDensity::from_log_fn(grid.clone(), |x| {
        let diff = DVector::from_row_slice(x) - &mean;
        norm - 0.5 * diff.dot(&chol.solve(&diff))
    })
}

/// Linear-space values scaled by the maximum, plus that maximum.
fn scaled_values(f: &GridDensity) -> (Vec<f64>, f64) {
    let top = f
        .log_values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (f.log_values().iter().map(|v| (v - top).exp()).collect(), top)
}

/// Convolution `f ∗ g` on the sum grid (`[2a, 2b]`, same spacing).
///
/// Direct summation of nonnegative terms keeps relative accuracy in the tails,
/// which the curvature and Fisher-information estimators depend on.
pub fn convolve(f: &GridDensity, g: &GridDensity) -> Result<GridDensity> {
    f.grid().ensure_same(g.grid())?;
    let grid = f.grid();
    let out_grid = grid.sum_grid();
    if f.is_zero() || g.is_zero() {
        return Ok(GridDensity::zero(out_grid));
    }
    let (fv, ftop) = scaled_values(f);
    let (gv, gtop) = scaled_values(g);
    let n = grid.points();
    let m = out_grid.points();
    let shift = ftop + gtop;
    let logs: Vec<f64> = if grid.dim() == 1 {
        let w: Vec<f64> = (0..n).map(|j| grid.weight(j) * fv[j]).collect();
        (0..m)
            .into_par_iter()
            .map(|k| {
                let lo = k.saturating_sub(n - 1);
                let hi = k.min(n - 1);
                let s: f64 = (lo..=hi).map(|j| w[j] * gv[k - j]).sum();
                s.ln() + shift
            })
            .collect()
    } else {
        let w: Vec<f64> = (0..n * n).map(|j| grid.weight(j) * fv[j]).collect();
        (0..m * m)
            .into_par_iter()
            .map(|idx| {
                let (k1, k2) = (idx / m, idx % m);
                let mut s = 0.0;
                for j1 in k1.saturating_sub(n - 1)..=k1.min(n - 1) {
                    let row_f = &w[j1 * n..(j1 + 1) * n];
                    let row_g = &gv[(k1 - j1) * n..(k1 - j1 + 1) * n];
                    for j2 in k2.saturating_sub(n - 1)..=k2.min(n - 1) {
                        s += row_f[j2] * row_g[k2 - j2];
                    }
                }
                s.ln() + shift
            })
            .collect()
    };
    GridDensity::from_log_values(out_grid, logs)
}

/// Smallest and largest eigenvalue of the discrete Hessian of `-log f`.
pub fn convexity_range(f: &GridDensity) -> Result<ConvexityRange> {
    let grid = f.grid();
    let l = f.log_values();
    let n = grid.points();
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    let mut used = 0usize;
    if grid.dim() == 1 {
        if f.support_size() < 3 {
            return Err(Error::InsufficientSupport(format!(
                "{} support nodes, need 3",
                f.support_size()
            )));
        }
        let h2 = grid.spacing(0).powi(2);
        for i in 1..n - 1 {
            if l[i - 1].is_finite() && l[i].is_finite() && l[i + 1].is_finite() {
                let k = -(l[i + 1] - 2.0 * l[i] + l[i - 1]) / h2;
                kmin = kmin.min(k);
                kmax = kmax.max(k);
                used += 1;
            }
        }
    } else {
        let (hx, hy) = (grid.spacing(0), grid.spacing(1));
        let at = |i: usize, j: usize| l[i * n + j];
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let stencil = [
                    at(i - 1, j - 1),
                    at(i - 1, j),
                    at(i - 1, j + 1),
                    at(i, j - 1),
                    at(i, j),
                    at(i, j + 1),
                    at(i + 1, j - 1),
                    at(i + 1, j),
                    at(i + 1, j + 1),
                ];
                if stencil.iter().any(|v| !v.is_finite()) {
                    continue;
                }
                let uxx = -(at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / (hx * hx);
                let uyy = -(at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (hy * hy);
                let uxy = -(at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1)
                    + at(i - 1, j - 1))
                    / (4.0 * hx * hy);
                let mid = 0.5 * (uxx + uyy);
                let rad = (0.25 * (uxx - uyy).powi(2) + uxy * uxy).sqrt();
                kmin = kmin.min(mid - rad);
                kmax = kmax.max(mid + rad);
                used += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::InsufficientSupport(
            "no interior node with a full stencil in the support".into(),
        ));
    }
    Ok(ConvexityRange {
        kappa_min: kmin,
        kappa_max: kmax,
    })
}

/// Parabolic vertex offset (in units of `h`) through three potential values.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let curv = left - 2.0 * mid + right;
    if !(curv > 0.0) {
        return 0.0;
    }
    (0.5 * (left - right) / curv).clamp(-0.5, 0.5)
}

/// Minimiser of a potential sampled on `grid`, refined per axis by a parabola
/// through the minimal node and its neighbours. Returns the node index too.
pub fn refined_argmin(grid: &GridSpec, potential: &[f64]) -> (usize, Vec<f64>) {
    let (best, _) = potential
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold((0usize, f64::INFINITY), |acc, (k, &v)| {
            if v < acc.1 {
                (k, v)
            } else {
                acc
            }
        });
    let [i, j] = grid.multi_index(best);
    let n = grid.points();
    let mut x = grid.node(best);
    for (axis, &c) in [i, j].iter().take(grid.dim()).enumerate() {
        if c == 0 || c + 1 == n {
            continue;
        }
        let idx = |c: usize| {
            if axis == 0 {
                grid.flat_index(c, j)
            } else {
                grid.flat_index(i, c)
            }
        };
        let (l, m, r) = (potential[idx(c - 1)], potential[idx(c)], potential[idx(c + 1)]);
        if l.is_finite() && r.is_finite() {
            x[axis] += parabolic_offset(l, m, r) * grid.spacing(axis);
        }
    }
    (best, x)
}

/// `∫ |x − x̂|² f(x) dx` for the normalized `f`, with `x̂` the refined
/// minimiser of `-log f`. Compare against `d / kappa_min`.
pub fn second_moment_about_argmin(f: &GridDensity) -> Result<f64> {
    let range = convexity_range(f)?;
    if !(range.kappa_min > 0.0) {
        return Err(Error::NotApplicable(format!(
            "density is not strongly log-concave (kappa_min = {})",
            range.kappa_min
        )));
    }
    let potential: Vec<f64> = f.log_values().iter().map(|v| -v).collect();
    let (_, xhat) = refined_argmin(f.grid(), &potential);
    f.expectation(|x| x.iter().zip(&xhat).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Outcome of the argmin shift comparison for `V`, `U` and `V + U`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ArgminShiftReport {
    /// argmin V
    pub x: Vec<f64>,
    /// argmin U
    pub y: Vec<f64>,
    /// argmin (V + U)
    pub z: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Checks `(1/α)|z−y| ≥ max{(1/β)|z−x|, (1/(α+β))|y−x|}` for grid potentials.
///
/// Each minimiser is located to within one spacing, so every distance carries
/// an error of at most `2h`; the tolerance is that error propagated through
/// the weights `1/α` and `1/β`.
pub fn argmin_shift_check(
    grid: &GridSpec,
    v: &[f64],
    u: &[f64],
    alpha: f64,
    beta_lip: f64,
) -> Result<ArgminShiftReport> {
    if v.len() != grid.len() {
        return Err(Error::SizeMismatch(v.len(), grid.len()));
    }
    if u.len() != grid.len() {
        return Err(Error::SizeMismatch(u.len(), grid.len()));
    }
    if !(alpha > 0.0 && beta_lip > 0.0) {
        return Err(Error::InvalidParameter(
            "alpha and the gradient Lipschitz constant must be positive".into(),
        ));
    }
    let sum: Vec<f64> = v.iter().zip(u).map(|(a, b)| a + b).collect();
    let locate = |which: &'static str, pot: &[f64]| -> Result<Vec<f64>> {
        let (node, x) = refined_argmin(grid, pot);
        if grid.is_boundary(node) {
            return Err(Error::BoundaryMinimum { which, node });
        }
        Ok(x)
    };
    let x = locate("V", v)?;
    let y = locate("U", u)?;
    let z = locate("V+U", &sum)?;
    let lhs = dist(&z, &y) / alpha;
    let rhs = (dist(&z, &x) / beta_lip).max(dist(&y, &x) / (alpha + beta_lip));
    let tolerance = 2.0 * grid.max_spacing() * (1.0 / alpha + 1.0 / beta_lip);
    Ok(ArgminShiftReport {
        holds: lhs + tolerance >= rhs,
        x,
        y,
        z,
        lhs,
        rhs,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: usize) -> GridSpec {
        GridSpec::line(-8.0, 8.0, points).unwrap()
    }

    #[test]
    fn standard_gaussian_mass_and_symmetry() {
        let g = gaussian_density(&GaussianParams::univariate(0.0, 1.0).unwrap(), &line(257)).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-6);
        let l = g.log_values();
        for k in 0..128 {
            assert_eq!(l[k], l[256 - k]);
        }
    }

    #[test]
    fn coverage_is_enforced() {
        let p = GaussianParams::univariate(0.0, 4.0).unwrap();
        assert!(matches!(
            gaussian_density(&p, &line(65)),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianParams::new(vec![0.0, 0.0], c).is_err());
    }

    #[test]
    fn gaussian_curvature() {
        let g = gaussian_density(&GaussianParams::univariate(0.0, 0.5).unwrap(), &line(257)).unwrap();
        let r = convexity_range(&g).unwrap();
        assert!((r.kappa_min - 2.0).abs() < 1e-8);
        assert!((r.kappa_max - 2.0).abs() < 1e-8);
    }

    #[test]
    fn product_gaussian_curvature_range() {
        let grid = GridSpec::square(-13.0, 13.0, 65).unwrap();
        let g = gaussian_density(
            &GaussianParams::diagonal(vec![0.0, 0.0], &[1.0, 4.0]).unwrap(),
            &grid,
        )
        .unwrap();
        let r = convexity_range(&g).unwrap();
        assert!((r.kappa_min - 0.25).abs() < 1e-8, "{r:?}");
        assert!((r.kappa_max - 1.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn curvature_needs_support() {
        let grid = line(16);
        let mut logs = vec![f64::NEG_INFINITY; 16];
        logs[3] = 0.0;
        logs[4] = 0.0;
        let f = GridDensity::from_log_values(grid, logs).unwrap();
        assert!(matches!(
            convexity_range(&f),
            Err(Error::InsufficientSupport(_))
        ));
    }

    #[test]
    fn second_moment_equality_case() {
        let g = gaussian_density(&GaussianParams::univariate(0.0, 1.0).unwrap(), &line(513)).unwrap();
        let v = second_moment_about_argmin(&g).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn second_moment_product_gaussian() {
        let grid = GridSpec::square(-7.0, 7.0, 129).unwrap();
        let g = gaussian_density(
            &GaussianParams::diagonal(vec![0.0, 0.0], &[1.0, 0.5]).unwrap(),
            &grid,
        )
        .unwrap();
        let v = second_moment_about_argmin(&g).unwrap();
        assert!((v - 1.5).abs() < 1e-6, "{v}");
        assert!(v <= 2.0);
    }

    #[test]
    fn second_moment_requires_log_concavity() {
        let grid = line(129);
        let f = GridDensity::from_log_fn(grid, |x| (-x[0].abs()).max(-3.0) + 0.01 * x[0] * x[0] - 20.0)
            .unwrap();
        assert!(matches!(
            second_moment_about_argmin(&f),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn argmin_shift_quadratic_equality() {
        let grid = GridSpec::line(-4.0, 6.0, 401).unwrap();
        let v: Vec<f64> = grid.axis_coords(0).iter().map(|x| 0.5 * x * x).collect();
        let u: Vec<f64> = grid.axis_coords(0).iter().map(|x| 0.5 * (x - 2.0).powi(2)).collect();
        let r = argmin_shift_check(&grid, &v, &u, 1.0, 1.0).unwrap();
        assert!((r.x[0] - 0.0).abs() < 1e-9);
        assert!((r.y[0] - 2.0).abs() < 1e-9);
        assert!((r.z[0] - 1.0).abs() < 1e-9);
        assert!((r.lhs - 1.0).abs() < 1e-9 && (r.rhs - 1.0).abs() < 1e-9);
        assert!(r.holds);
    }

    #[test]
    fn argmin_shift_degenerate() {
        let grid = GridSpec::line(-4.0, 4.0, 101).unwrap();
        let v: Vec<f64> = grid.axis_coords(0).iter().map(|x| (x - 0.3).powi(2)).collect();
        let r = argmin_shift_check(&grid, &v, &v, 2.0, 2.0).unwrap();
        assert!(r.lhs < 1e-12 && r.rhs < 1e-12 && r.holds);
    }

    #[test]
    fn argmin_shift_boundary_flagged() {
        let grid = GridSpec::line(0.0, 4.0, 101).unwrap();
        let v: Vec<f64> = grid.axis_coords(0).iter().map(|x| 0.5 * x * x).collect();
        let u: Vec<f64> = grid.axis_coords(0).iter().map(|x| 0.5 * (x - 2.0).powi(2)).collect();
        assert!(matches!(
            argmin_shift_check(&grid, &v, &u, 1.0, 1.0),
            Err(Error::BoundaryMinimum { which: "V", .. })
        ));
    }
}
