//! Wasserstein distances and the L∞ transport bounds.
//!
//! Exact `W_p` in 1D goes through quantile functions. In higher dimension the
//! bottleneck (`W∞`) distance between equal-weight point clouds is computed
//! exactly by thresholded bipartite matching, and grid densities are reduced
//! to point clouds by equal-mass quantization.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::{fisher_information_inf, fisher_information_p};
use crate::grid::GridDensity;
use crate::logconcave::convexity_range;

/// Maximum point-cloud size accepted by [`bottleneck_distance`].
pub const MAX_BOTTLENECK_POINTS: usize = 4096;

/// Number of quantile levels used by [`wasserstein_1d`].
pub const QUANTILE_LEVELS: usize = 8192;

/// Positively 1-homogeneous bound `ℓ` on the directional growth of `H`.
#[derive(Clone)]
pub enum DirectionalBound {
    /// `ℓ(z) = L |z|`.
    Isotropic { lip: f64 },
    /// `ℓ(z) = L |P_A z|`, where the columns of `basis` span `A`.
    Projection { lip: f64, basis: DMatrix<f64> },
    /// Any other continuous, positively 1-homogeneous function.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for DirectionalBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Isotropic { lip } => write!(f, "Isotropic {{ lip: {lip} }}"),
            Self::Projection { lip, basis } => {
                write!(f, "Projection {{ lip: {lip}, rank: {} }}", basis.ncols())
            }
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Orthogonal projector onto the column span of `basis`.
fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let q = basis.clone().qr().q();
    let q = q.columns(0, basis.ncols()).into_owned();
    &q * q.transpose()
}

impl DirectionalBound {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Self::Isotropic { lip } => lip * z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Self::Projection { lip, basis } => {
                let p = projector(basis);
                let z = nalgebra::DVector::from_row_slice(z);
                lip * (p * z).norm()
            }
            Self::Custom(f) => f(z),
        }
    }
}

/// SPD curvature matrix `K` together with the directional bound `ℓ`.
#[derive(Debug, Clone)]
pub struct ConvexitySpec {
    k: DMatrix<f64>,
    ell: DirectionalBound,
}

impl ConvexitySpec {
    pub fn new(k: DMatrix<f64>, ell: DirectionalBound) -> Result<Self> {
        let d = k.nrows();
        if d == 0 || k.ncols() != d {
            return Err(Error::InvalidParameter("K must be square".into()));
        }
        if (&k - k.transpose()).abs().max() > 1e-12 * k.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("K is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(k.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter("K is not positive definite".into()));
        }
        match &ell {
            DirectionalBound::Isotropic { lip } | DirectionalBound::Projection { lip, .. }
                if !(lip.is_finite() && *lip >= 0.0) =>
            {
                return Err(Error::InvalidParameter(format!("bad Lipschitz constant {lip}")));
            }
            DirectionalBound::Projection { basis, .. } if basis.nrows() != d || basis.ncols() == 0 => {
                return Err(Error::InvalidParameter("projection basis must be d × r, r ≥ 1".into()));
            }
            _ => {}
        }
        let spec = Self { k, ell };
        spec.spot_check_homogeneity()?;
        Ok(spec)
    }

    /// `K = κ I`, `ℓ(z) = L|z|`.
    pub fn isotropic(dim: usize, kappa: f64, lip: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(dim, dim) * kappa,
            DirectionalBound::Isotropic { lip },
        )
    }

    /// `K = κ_A P_A + κ_B P_B` in ℝ² with `A` spanned by `(cos θ, sin θ)`,
    /// and `ℓ(z) = L_A |P_A z|`.
    pub fn anisotropic_plane(kappa_a: f64, kappa_b: f64, lip_a: f64, theta: f64) -> Result<Self> {
        let a = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        let pa = projector(&a);
        let pb = DMatrix::identity(2, 2) - &pa;
        Self::new(
            pa * kappa_a + pb * kappa_b,
            DirectionalBound::Projection { lip: lip_a, basis: a },
        )
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn ell(&self) -> &DirectionalBound {
        &self.ell
    }

    pub fn quad(&self, w: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_row_slice(w);
        v.dot(&(&self.k * &v))
    }

    /// Smallest eigenvalue of `K`.
    pub fn kappa_min(&self) -> f64 {
        SymmetricEigen::new(self.k.clone()).eigenvalues.min()
    }

    /// Largest eigenvalue of `K`.
    pub fn kappa_max(&self) -> f64 {
        SymmetricEigen::new(self.k.clone()).eigenvalues.max()
    }

    /// `sup_{|z|=1} ℓ(z)`, the Lipschitz constant implied by `ℓ`.
    pub fn lipschitz(&self) -> f64 {
        match &self.ell {
            DirectionalBound::Isotropic { lip } | DirectionalBound::Projection { lip, .. } => *lip,
            DirectionalBound::Custom(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                (0..20_000)
                    .map(|_| self.ell.eval(&random_unit(&mut rng, self.dim())))
                    .fold(0.0, f64::max)
            }
        }
    }

    fn spot_check_homogeneity(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..16 {
            let z: Vec<f64> = (0..self.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let base = self.ell.eval(&z);
            if !base.is_finite() {
                return Err(Error::InvalidParameter("ℓ is not finite".into()));
            }
            for t in [0.5, 2.0, 3.7] {
                let scaled: Vec<f64> = z.iter().map(|v| v * t).collect();
                let got = self.ell.eval(&scaled);
                if (got - t * base).abs() > 1e-9 * (1.0 + (t * base).abs()) {
                    return Err(Error::InvalidParameter(format!(
                        "ℓ is not positively 1-homogeneous: ℓ({t}z) = {got}, {t}ℓ(z) = {}",
                        t * base
                    )));
                }
            }
        }
        Ok(())
    }

    /// Eigenvalues `(κ_A, κ_B)` if `ℓ` is a projection and `K = κ_A P_A + κ_B P_B`.
    fn split_curvatures(&self) -> Option<(f64, f64, f64)> {
        let DirectionalBound::Projection { lip, basis } = &self.ell else {
            return None;
        };
        let pa = projector(basis);
        let d = self.dim();
        let pb = DMatrix::identity(d, d) - &pa;
        let rank_b = pb.trace().round() as usize;
        let ka = (&self.k * &pa).trace() / pa.trace();
        let kb = if rank_b == 0 { ka } else { (&self.k * &pb).trace() / pb.trace() };
        let rebuilt = &pa * ka + &pb * kb;
        if (&rebuilt - &self.k).abs().max() <= 1e-10 * self.k.abs().max() {
            Some((ka, kb, *lip))
        } else {
            None
        }
    }
}

fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Which formula produced a [`BoundReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Isotropic,
    AnisoCase1,
    AnisoCase2,
    Generic,
}

/// Upper bound on `W∞(μ, ν)` with the direction realising it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub regime: Regime,
    pub witness_direction: Vec<f64>,
}

impl BoundReport {
    /// `⟨ω, Kω⟩·value ≤ ℓ(ω) + 1e-9` at the witness direction.
    pub fn witness_feasible(&self, spec: &ConvexitySpec) -> bool {
        spec.quad(&self.witness_direction) * self.value
            <= spec.ell.eval(&self.witness_direction) + 1e-9
    }
}

fn ratio(spec: &ConvexitySpec, w: &[f64]) -> f64 {
    spec.ell.eval(w) / spec.quad(w)
}

/// Golden-section maximisation of `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `M = sup_{|ω|=1} ℓ(ω)/⟨ω,Kω⟩` by direct search over the sphere, never
/// using a closed form.
///
/// In 2D this is a 1° sweep followed by golden-section refinement around the
/// three best sample angles. In higher dimension a seeded random search is
/// refined by shrinking perturbations.
pub fn bound_generic_sweep(spec: &ConvexitySpec) -> BoundReport {
    let d = spec.dim();
    let (value, dir) = match d {
        1 => {
            let (p, m) = (ratio(spec, &[1.0]), ratio(spec, &[-1.0]));
            if p >= m {
                (p, vec![1.0])
            } else {
                (m, vec![-1.0])
            }
        }
        2 => {
            let f = |t: f64| ratio(spec, &[t.cos(), t.sin()]);
            let step = std::f64::consts::PI / 180.0;
            let mut samples: Vec<(f64, f64)> = (0..360)
                .map(|i| {
                    let t = i as f64 * step;
                    (t, f(t))
                })
                .collect();
            samples.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut best = (samples[0].0, samples[0].1);
            for &(t, _) in samples.iter().take(3) {
                let (tr, fr) = golden_max(f, t - step, t + step);
                if fr > best.1 {
                    best = (tr, fr);
                }
            }
            (best.1, vec![best.0.cos(), best.0.sin()])
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xb0u64 + d as u64);
            let mut best = random_unit(&mut rng, d);
            let mut fbest = ratio(spec, &best);
            for _ in 0..200_000 {
                let w = random_unit(&mut rng, d);
                let fw = ratio(spec, &w);
                if fw > fbest {
                    best = w;
                    fbest = fw;
                }
            }
            let mut radius = 0.05;
            while radius > 1e-10 {
                let mut improved = false;
                for _ in 0..200 {
                    let pert = random_unit(&mut rng, d);
                    let cand: Vec<f64> = best.iter().zip(&pert).map(|(b, p)| b + radius * p).collect();
                    let n = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let cand: Vec<f64> = cand.into_iter().map(|x| x / n).collect();
                    let fc = ratio(spec, &cand);
                    if fc > fbest {
                        best = cand;
                        fbest = fc;
                        improved = true;
                    }
                }
                if !improved {
                    radius *= 0.5;
                }
            }
            (fbest, best)
        }
    };
    if !(value > 0.0) {
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        return BoundReport {
            value: 0.0,
            regime: Regime::Generic,
            witness_direction: e1,
        };
    }
    BoundReport {
        value,
        regime: Regime::Generic,
        witness_direction: dir,
    }
}

/// Bound `M` of the general coupling criterion for `spec`.
///
/// Isotropic and projection-shaped inputs whose `K` splits along `A ⊕ B`
/// are answered in closed form; everything else goes to
/// [`bound_generic_sweep`].
pub fn bound_generic(spec: &ConvexitySpec) -> Result<BoundReport> {
    if let DirectionalBound::Isotropic { lip } = spec.ell {
        let eig = SymmetricEigen::new(spec.k.clone());
        let (kmin, kmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if (kmax - kmin).abs() <= 1e-12 * kmax {
            let mut e1 = vec![0.0; spec.dim()];
            e1[0] = 1.0;
            return Ok(BoundReport {
                value: lip / kmin,
                regime: Regime::Isotropic,
                witness_direction: e1,
            });
        }
    }
    if let Some((ka, kb, lip)) = spec.split_curvatures() {
        if let DirectionalBound::Projection { basis, .. } = &spec.ell {
            let mut report = bound_anisotropic(ka, kb, lip)?;
            // map the (A, B) witness coordinates back to ℝ^d
            let q = basis.clone().qr().q();
            let a_dir = q.column(0).into_owned();
            let d = spec.dim();
            let pb = DMatrix::identity(d, d) - projector(basis);
            let eig = SymmetricEigen::new(pb);
            let b_idx = eig.eigenvalues.imax();
            let b_dir = eig.eigenvectors.column(b_idx).into_owned();
            let (ca, cb) = (report.witness_direction[0], report.witness_direction[1]);
            let w = if basis.ncols() == d { a_dir.clone() } else { a_dir * ca + b_dir * cb };
            report.witness_direction = w.iter().copied().collect();
            return Ok(report);
        }
    }
    Ok(bound_generic_sweep(spec))
}

/// `L/κ` for `K = κI` and `ℓ(z) = L|z|`.
pub fn bound_isotropic(kappa: f64, lip: f64) -> Result<BoundReport> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("κ must be positive, got {kappa}")));
    }
    if !(lip >= 0.0 && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!("L must be ≥ 0, got {lip}")));
    }
    Ok(BoundReport {
        value: lip / kappa,
        regime: Regime::Isotropic,
        witness_direction: vec![1.0],
    })
}

/// Closed-form anisotropic bound: `L_A/κ_A` if `κ_A ≤ 2κ_B`, otherwise
/// `L_A / (2√(κ_B(κ_A − κ_B)))`. The witness is given in `(A, B)` coordinates.
pub fn bound_anisotropic(kappa_a: f64, kappa_b: f64, lip_a: f64) -> Result<BoundReport> {
    if !(kappa_a > 0.0 && kappa_b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "curvatures must be positive (κ_A = {kappa_a}, κ_B = {kappa_b})"
        )));
    }
    if !(lip_a >= 0.0 && lip_a.is_finite()) {
        return Err(Error::InvalidParameter(format!("L_A must be ≥ 0, got {lip_a}")));
    }
    if kappa_a <= 2.0 * kappa_b {
        Ok(BoundReport {
            value: lip_a / kappa_a,
            regime: Regime::AnisoCase1,
            witness_direction: vec![1.0, 0.0],
        })
    } else {
        let c = (kappa_b / (kappa_a - kappa_b)).sqrt();
        Ok(BoundReport {
            value: lip_a / (2.0 * (kappa_b * (kappa_a - kappa_b)).sqrt()),
            regime: Regime::AnisoCase2,
            witness_direction: vec![c, (1.0 - c * c).sqrt()],
        })
    }
}

/// `W∞` bound between the transition kernels at `x` and `x̃` for a
/// `κ`-log-concave parent density: `|x − x̃| / (√2 (½ + κ))`.
pub fn bound_kernel(kappa: f64, x: &[f64], xt: &[f64]) -> Result<f64> {
    if !(kappa > 0.5) {
        return Err(Error::RegimeNotCovered(format!(
            "kernel bound needs κ > 1/2, got {kappa}"
        )));
    }
    if x.len() != xt.len() {
        return Err(Error::SizeMismatch(x.len(), xt.len()));
    }
    let dist = x.iter().zip(xt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(dist / (std::f64::consts::SQRT_2 * (0.5 + kappa)))
}

/// Left-continuous quantile function of a 1D grid density, with the density
/// taken as linear inside its support and zero outside.
fn quantiles(f: &GridDensity, levels: usize) -> Result<Vec<f64>> {
    let grid = f.grid();
    let xs = grid.axis_coords(0);
    let h = grid.spacing(0);
    let l = f.log_values();
    let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let n = xs.len();
    let mut cdf = vec![0.0; n];
    for k in 1..n {
        let cell = if l[k - 1].is_finite() && l[k].is_finite() {
            0.5 * h * ((l[k - 1] - top).exp() + (l[k] - top).exp())
        } else {
            0.0
        };
        cdf[k] = cdf[k - 1] + cell;
    }
    let total = cdf[n - 1];
    if !(total > 0.0) {
        return Err(Error::InsufficientSupport(
            "quantiles need two adjacent support nodes".into(),
        ));
    }
    let mut out = Vec::with_capacity(levels);
    let mut k = 1;
    for i in 0..levels {
        let u = (i as f64 + 0.5) / levels as f64 * total;
        while cdf[k] < u {
            k += 1;
        }
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        out.push(xs[k - 1] + t * h);
    }
    Ok(out)
}

/// `W_p(mu, nu)` in 1D from quantile functions on a uniform level grid;
/// `p = ∞` gives the sup of the quantile gap.
pub fn wasserstein_1d(mu: &GridDensity, nu: &GridDensity, p: f64) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::InvalidParameter("wasserstein_1d needs 1D densities".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be ≥ 1, got {p}")));
    }
    let a = quantiles(mu, QUANTILE_LEVELS)?;
    let b = quantiles(nu, QUANTILE_LEVELS)?;
    let gaps = a.iter().zip(&b).map(|(x, y)| (x - y).abs());
    if p.is_infinite() {
        Ok(gaps.fold(0.0, f64::max))
    } else {
        let mean = gaps.map(|g| g.powf(p)).sum::<f64>() / QUANTILE_LEVELS as f64;
        Ok(mean.powf(1.0 / p))
    }
}

/// Ground norm for point-cloud transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GroundNorm {
    Euclidean,
    /// `|(x₁, x₂)|₁ = |x₁| + |x₂|` with `x₁, x₂` the two halves of the vector.
    PairL1,
}

impl GroundNorm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let eu = |s: &[f64], t: &[f64]| s.iter().zip(t).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        match self {
            GroundNorm::Euclidean => eu(a, b),
            GroundNorm::PairL1 => {
                let h = a.len() / 2;
                eu(&a[..h], &b[..h]) + eu(&a[h..], &b[h..])
            }
        }
    }
}

/// Maximum bipartite matching restricted to edges `(i, j)` with
/// `j ∈ rows[i][..limit[i]]`.
struct Matcher<'a> {
    rows: &'a [Vec<(f64, u32)>],
    limit: Vec<usize>,
    match_l: Vec<u32>,
    match_r: Vec<u32>,
    dist: Vec<u32>,
}

const FREE: u32 = u32::MAX;

impl<'a> Matcher<'a> {
    fn new(rows: &'a [Vec<(f64, u32)>], threshold: f64) -> Self {
        let n = rows.len();
        let limit = rows
            .iter()
            .map(|r| r.partition_point(|(d, _)| *d <= threshold))
            .collect();
        Self {
            rows,
            limit,
            match_l: vec![FREE; n],
            match_r: vec![FREE; n],
            dist: vec![0; n],
        }
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i][..self.limit[i]].iter().map(|(_, j)| *j as usize)
    }

    fn bfs(&mut self) -> bool {
        let n = self.rows.len();
        let mut queue = std::collections::VecDeque::new();
        for i in 0..n {
            if self.match_l[i] == FREE {
                self.dist[i] = 0;
                queue.push_back(i);
            } else {
                self.dist[i] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(i) = queue.pop_front() {
            let next: Vec<usize> = self.neighbours(i).collect();
            for j in next {
                let m = self.match_r[j];
                if m == FREE {
                    found = true;
                } else if self.dist[m as usize] == u32::MAX {
                    self.dist[m as usize] = self.dist[i] + 1;
                    queue.push_back(m as usize);
                }
            }
        }
        found
    }

    fn dfs(&mut self, i: usize) -> bool {
        for idx in 0..self.limit[i] {
            let j = self.rows[i][idx].1 as usize;
            let m = self.match_r[j];
            if m == FREE || (self.dist[m as usize] == self.dist[i] + 1 && self.dfs(m as usize)) {
                self.match_l[i] = j as u32;
                self.match_r[j] = i as u32;
                return true;
            }
        }
        self.dist[i] = u32::MAX;
        false
    }

    /// Hopcroft–Karp; true if a perfect matching exists.
    fn perfect(mut self) -> bool {
        let n = self.rows.len();
        let mut size = 0;
        while self.bfs() {
            for i in 0..n {
                if self.match_l[i] == FREE && self.dfs(i) {
                    size += 1;
                }
            }
        }
        size == n
    }
}

/// Exact bottleneck distance between two equal-weight point clouds.
///
/// Binary search over the sorted pairwise distances; each probe checks for a
/// perfect matching using only pairs within the threshold.
pub fn bottleneck_distance(a: &[Vec<f64>], b: &[Vec<f64>], norm: GroundNorm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    if n > MAX_BOTTLENECK_POINTS {
        return Err(Error::InvalidParameter(format!(
            "at most {MAX_BOTTLENECK_POINTS} points, got {n}"
        )));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != dim) {
        return Err(Error::InvalidParameter("points have mixed dimensions".into()));
    }
    if norm == GroundNorm::PairL1 && dim % 2 != 0 {
        return Err(Error::InvalidParameter("PairL1 needs an even dimension".into()));
    }
    use rayon::prelude::*;
    let rows: Vec<Vec<(f64, u32)>> = a
        .par_iter()
        .map(|p| {
            let mut r: Vec<(f64, u32)> = b
                .iter()
                .enumerate()
                .map(|(j, q)| (norm.distance(p, q), j as u32))
                .collect();
            r.sort_by(|x, y| x.0.total_cmp(&y.0));
            r
        })
        .collect();
    // every point needs at least its nearest partner
    let mut col_min = vec![f64::INFINITY; n];
    for r in &rows {
        for &(d, j) in r {
            let c = &mut col_min[j as usize];
            if d < *c {
                *c = d;
            }
        }
    }
    let lower = rows
        .iter()
        .map(|r| r[0].0)
        .chain(col_min.iter().copied())
        .fold(0.0, f64::max);
    let mut cand: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.iter().map(|(d, _)| *d))
        .filter(|d| *d >= lower)
        .collect();
    cand.sort_by(|x, y| x.total_cmp(y));
    cand.dedup();
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if Matcher::new(&rows, cand[mid]).perfect() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cand[lo])
}

/// Point cloud produced by equal-mass quantization of a grid density.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Quantization {
    pub points: Vec<Vec<f64>>,
    /// Largest bounding-box diameter among the cells (tail cells are clipped to the grid).
    pub max_cell_diameter: f64,
    /// Median bounding-box diameter among the cells.
    pub median_cell_diameter: f64,
}

#[derive(Debug, Clone, Copy)]
struct MassBox {
    lo: [f64; 2],
    hi: [f64; 2],
    mass: f64,
}

impl MassBox {
    fn fraction_below(&self, axis: usize, c: f64) -> f64 {
        let (a, b) = (self.lo[axis], self.hi[axis]);
        if b <= a {
            return if c >= a { 1.0 } else { 0.0 };
        }
        ((c - a) / (b - a)).clamp(0.0, 1.0)
    }

    fn centre(&self, axis: usize) -> f64 {
        0.5 * (self.lo[axis] + self.hi[axis])
    }
}

fn mass_below(boxes: &[MassBox], axis: usize, c: f64) -> f64 {
    boxes.iter().map(|b| b.mass * b.fraction_below(axis, c)).sum()
}

/// Cut position along `axis` with half of the mass on each side. The mass
/// function is piecewise linear between box edges, so it is located exactly.
fn median_cut(boxes: &[MassBox], axis: usize) -> f64 {
    let total: f64 = boxes.iter().map(|b| b.mass).sum();
    let half = 0.5 * total;
    let mut edges: Vec<f64> = boxes.iter().flat_map(|b| [b.lo[axis], b.hi[axis]]).collect();
    edges.sort_by(|x, y| x.total_cmp(y));
    edges.dedup();
    let (mut lo, mut hi) = (0usize, edges.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if mass_below(boxes, axis, edges[mid]) < half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (ml, mh) = (mass_below(boxes, axis, edges[lo]), mass_below(boxes, axis, edges[hi]));
    if mh > ml {
        edges[lo] + (half - ml) / (mh - ml) * (edges[hi] - edges[lo])
    } else {
        edges[lo]
    }
}

fn split_recursive(boxes: Vec<MassBox>, leaves: usize, depth: usize, dim: usize, out: &mut Vec<(Vec<f64>, f64)>) {
    if leaves == 1 {
        let m: f64 = boxes.iter().map(|b| b.mass).sum();
        let centroid: Vec<f64> = (0..dim)
            .map(|a| boxes.iter().map(|b| b.mass * b.centre(a)).sum::<f64>() / m)
            .collect();
        let diam = (0..dim)
            .map(|a| {
                let lo = boxes.iter().map(|b| b.lo[a]).fold(f64::INFINITY, f64::min);
                let hi = boxes.iter().map(|b| b.hi[a]).fold(f64::NEG_INFINITY, f64::max);
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        out.push((centroid, diam));
        return;
    }
    let axis = depth % dim;
    let c = median_cut(&boxes, axis);
    let mut left = Vec::with_capacity(boxes.len() / 2 + 1);
    let mut right = Vec::with_capacity(boxes.len() / 2 + 1);
    for b in boxes {
        let frac = b.fraction_below(axis, c);
        if frac >= 1.0 {
            left.push(b);
        } else if frac <= 0.0 {
            right.push(b);
        } else {
            let mut l = b;
            let mut r = b;
            l.hi[axis] = c;
            l.mass = b.mass * frac;
            r.lo[axis] = c;
            r.mass = b.mass * (1.0 - frac);
            left.push(l);
            right.push(r);
        }
    }
    let (mut lo_out, mut hi_out) = (Vec::new(), Vec::new());
    rayon::join(
        || split_recursive(left, leaves / 2, depth + 1, dim, &mut lo_out),
        || split_recursive(right, leaves / 2, depth + 1, dim, &mut hi_out),
    );
    out.extend(lo_out);
    out.extend(hi_out);
}

/// Splits a grid density into `n_points` cells of equal mass by recursive
/// median cuts along alternating coordinate axes and returns the cell
/// centroids. Each node is treated as a uniform box of its trapezoid cell.
/// `n_points` must be a power of two.
pub fn quantize_equal_mass(f: &GridDensity, n_points: usize) -> Result<Quantization> {
    if !n_points.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "quantization size must be a power of two, got {n_points}"
        )));
    }
    let probs = f.probabilities()?;
    let grid = f.grid();
    let dim = grid.dim();
    let boxes: Vec<MassBox> = (0..grid.len())
        .filter(|&k| probs[k] > 0.0)
        .map(|k| {
            let x = grid.node(k);
            let mut lo = [0.0; 2];
            let mut hi = [0.0; 2];
            for a in 0..dim {
                let h = 0.5 * grid.spacing(a);
                lo[a] = (x[a] - h).max(grid.lower(a));
                hi[a] = (x[a] + h).min(grid.upper(a));
            }
            MassBox { lo, hi, mass: probs[k] }
        })
        .collect();
    if boxes.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut cells = Vec::with_capacity(n_points);
    split_recursive(boxes, n_points, 0, dim, &mut cells);
    let mut diams: Vec<f64> = cells.iter().map(|c| c.1).collect();
    diams.sort_by(|a, b| a.total_cmp(b));
    Ok(Quantization {
        max_cell_diameter: *diams.last().unwrap(),
        median_cell_diameter: diams[diams.len() / 2],
        points: cells.into_iter().map(|c| c.0).collect(),
    })
}

/// Quantized `W∞` estimate between two grid densities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QuantizedWinf {
    pub value: f64,
    pub n_points: usize,
    pub max_cell_diameter: f64,
    pub median_cell_diameter: f64,
}

/// `W∞(mu, nu)` approximated by the bottleneck distance between equal-mass
/// quantizations with `n_points` cells each.
pub fn w_infinity_quantized(
    mu: &GridDensity,
    nu: &GridDensity,
    n_points: usize,
    norm: GroundNorm,
) -> Result<QuantizedWinf> {
    let qa = quantize_equal_mass(mu, n_points)?;
    let qb = quantize_equal_mass(nu, n_points)?;
    Ok(QuantizedWinf {
        value: bottleneck_distance(&qa.points, &qb.points, norm)?,
        n_points,
        max_cell_diameter: qa.max_cell_diameter.max(qb.max_cell_diameter),
        median_cell_diameter: qa.median_cell_diameter.max(qb.median_cell_diameter),
    })
}

/// Both sides of a transport-information inequality.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TiReport {
    pub lhs: f64,
    pub rhs: f64,
    pub kappa: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Slope of the grid-dependent tolerance `max(1e-3, C·h)` in [`ti_check`].
pub const TI_TOL_SLOPE: f64 = 0.1;

/// `W_p(mu, nu) ≤ (1/κ) I_p(nu|mu)^{1/p}` (or `I∞` for `p = ∞`) with `κ` the
/// grid curvature lower bound of `mu`.
pub fn ti_check(mu: &GridDensity, nu: &GridDensity, p: f64) -> Result<TiReport> {
    if mu.dim() != 1 {
        return Err(Error::InvalidParameter("ti_check needs 1D densities".into()));
    }
    let kappa = convexity_range(mu)?.kappa_min;
    if !(kappa > 0.0) {
        return Err(Error::NotApplicable(format!(
            "reference density is not strongly log-concave (kappa_min = {kappa})"
        )));
    }
    let lhs = wasserstein_1d(mu, nu, p)?;
    let info = if p.is_infinite() {
        fisher_information_inf(nu, mu)?
    } else {
        fisher_information_p(nu, mu, p)?.powf(1.0 / p)
    };
    let rhs = info / kappa;
    let tolerance = 1e-3f64.max(TI_TOL_SLOPE * mu.grid().spacing(0));
    Ok(TiReport {
        lhs,
        rhs,
        kappa,
        tolerance,
        holds: lhs <= rhs + tolerance,
    })
}

/// Reads `x[,y]` rows.
pub fn read_points_csv<R: BufRead>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns",
                    lineno + 1,
                    first.len()
                )));
            }
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_points_csv<W: Write>(points: &[Vec<f64>], mut out: W) -> Result<()> {
    for p in points {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
