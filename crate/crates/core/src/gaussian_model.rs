//! Closed forms for quadratic selection `m(x) = αx²/2` acting on Gaussians.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{gaussian_divergence, DivergenceKind};
use crate::logconcave::GaussianParams;

/// Denominators below this make a contraction factor undefined.
pub const DENOMINATOR_FLOOR: f64 = 1e-14;

/// Root of `β² − (α + ½)β − α/2 = 0` above `max{½, α}`.
pub fn solve_beta(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    let b = alpha + 0.5;
    Ok(0.5 * (b + (b * b + 2.0 * alpha).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub alpha: f64,
    pub beta: f64,
}

impl QuadraticModel {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            beta: solve_beta(alpha)?,
        })
    }

    /// `(½ + β)⁻¹`, the contraction rate of the mean at the equilibrium variance.
    pub fn rate(&self) -> f64 {
        1.0 / (0.5 + self.beta)
    }

    /// Equilibrium `γ_{0, 1/β}`.
    pub fn equilibrium(&self) -> GaussianParams {
        GaussianParams::univariate(0.0, 1.0 / self.beta).expect("β > 0")
    }

    /// One normalized generation: `(μ, σ²) ↦ (μ̃, σ̃²)`.
    pub fn recursion_step(&self, mu: f64, sigma2: f64) -> (f64, f64) {
        let s2 = 1.0 + 0.5 * sigma2;
        let d = 1.0 + self.alpha * s2;
        (mu / d, s2 / d)
    }

    /// `n` generations starting from `(μ, σ²)`, including the start.
    pub fn orbit(&self, mu: f64, sigma2: f64, n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = (mu, sigma2);
        out.push(cur);
        for _ in 0..n {
            cur = self.recursion_step(cur.0, cur.1);
            out.push(cur);
        }
        out
    }

    /// Mass kept by one generation applied to a unit-mass `γ_{μ,σ²}`.
    pub fn mass_ratio(&self, mu: f64, sigma2: f64) -> f64 {
        let s2 = 1.0 + 0.5 * sigma2;
        let d = 1.0 + self.alpha * s2;
        (-self.alpha * mu * mu / (2.0 * d)).exp() / d.sqrt()
    }
}

/// Divergence used in a contraction factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    #[serde(rename = "KL")]
    Kl,
    Fisher2,
    FisherInf,
}

impl Functional {
    pub fn name(self) -> &'static str {
        match self {
            Functional::Kl => "KL",
            Functional::Fisher2 => "Fisher2",
            Functional::FisherInf => "FisherInf",
        }
    }
}

impl std::str::FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Functional::Kl),
            "fisher2" => Ok(Functional::Fisher2),
            "fisherinf" => Ok(Functional::FisherInf),
            _ => Err(Error::Parse(format!("unknown functional {s:?}"))),
        }
    }
}

/// `D(T̂[γ_{μ,σ²}] | F*) / D(γ_{μ,σ²} | F*)` with `F* = γ_{0,1/β}`.
///
/// `FisherInf` is finite only on the slice `σ² = 1/β`, where it is reported
/// squared so that all three functionals share the scale `(½+β)⁻²`.
pub fn contraction_factor(model: &QuadraticModel, mu: f64, sigma2: f64, functional: Functional) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 must be > 0, got {sigma2}")));
    }
    let eq = 1.0 / model.beta;
    let (mu_t, s2_t) = model.recursion_step(mu, sigma2);
    match functional {
        Functional::FisherInf => {
            if (sigma2 - eq).abs() > 1e-12 * eq {
                return Err(Error::UndefinedRatio(format!(
                    "I∞ ratio is ∞/∞ off the σ² = 1/β slice (σ² = {sigma2})"
                )));
            }
            let before = mu.abs() * model.beta;
            if before < DENOMINATOR_FLOOR {
                return Err(Error::UndefinedRatio(format!("I∞ denominator {before}")));
            }
            Ok((mu_t.abs() * model.beta / before).powi(2))
        }
        Functional::Kl | Functional::Fisher2 => {
            let kind = if functional == Functional::Kl {
                DivergenceKind::Kl
            } else {
                DivergenceKind::FisherP(2.0)
            };
            let star = model.equilibrium();
            let before = gaussian_divergence(&GaussianParams::univariate(mu, sigma2)?, &star, kind)?;
            if before < DENOMINATOR_FLOOR {
                return Err(Error::UndefinedRatio(format!(
                    "{} denominator {before} at (μ, σ²) = ({mu}, {sigma2})",
                    functional.name()
                )));
            }
            let after = gaussian_divergence(&GaussianParams::univariate(mu_t, s2_t)?, &star, kind)?;
            Ok(after / before)
        }
    }
}

/// Evenly spaced inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        (0..self.count)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

/// Default `μ` axis: `[−6, 6]`, 201 values.
pub const DEFAULT_MU_RANGE: Range = Range { lo: -6.0, hi: 6.0, count: 201 };

/// Default `σ²` axis: 201 values `2.5·j/201`, `j = 1..=201`, covering `(0, 2.5]`.
pub const DEFAULT_SIGMA2_RANGE: Range = Range {
    lo: 2.5 / 201.0,
    hi: 2.5,
    count: 201,
};

/// Contraction factors on a `(μ, σ²)` grid plus the `σ² = 1/β` row.
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapGrid {
    pub alpha: f64,
    pub beta: f64,
    pub functional: Functional,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// `values[j][i]` at `(mu[i], sigma2[j])`; `NaN` where undefined.
    pub values: Vec<Vec<f64>>,
    pub grey_line_sigma2: f64,
    /// Row at `σ² = 1/β`; `NaN` at `μ = 0`.
    pub grey_line_values: Vec<f64>,
}

fn factor_or_nan(model: &QuadraticModel, mu: f64, s2: f64, f: Functional) -> f64 {
    contraction_factor(model, mu, s2, f).unwrap_or(f64::NAN)
}

pub fn heatmap(model: &QuadraticModel, functional: Functional, mu_range: Range, sigma2_range: Range) -> Result<HeatmapGrid> {
    if mu_range.count == 0 || sigma2_range.count == 0 {
        return Err(Error::InvalidParameter("empty heatmap range".into()));
    }
    if !(sigma2_range.lo > 0.0) {
        return Err(Error::InvalidParameter("σ² range must be positive".into()));
    }
    let mu = mu_range.values();
    let sigma2 = sigma2_range.values();
    let values: Vec<Vec<f64>> = sigma2
        .par_iter()
        .map(|&s2| mu.iter().map(|&m| factor_or_nan(model, m, s2, functional)).collect())
        .collect();
    let grey = 1.0 / model.beta;
    let grey_line_values = mu.iter().map(|&m| factor_or_nan(model, m, grey, functional)).collect();
    Ok(HeatmapGrid {
        alpha: model.alpha,
        beta: model.beta,
        functional,
        mu,
        sigma2,
        values,
        grey_line_sigma2: grey,
        grey_line_values,
    })
}

impl HeatmapGrid {
    /// Two header lines, then `mu,sigma2,value` rows; the grey-line row comes last.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# alpha, beta, functional, grey_line_sigma2")?;
        writeln!(
            out,
            "# {}, {}, {}, {}",
            self.alpha,
            self.beta,
            self.functional.name(),
            self.grey_line_sigma2
        )?;
        writeln!(out, "mu,sigma2,value")?;
        let fmt = |v: f64| if v.is_nan() { "nan".to_string() } else { v.to_string() };
        for (j, &s2) in self.sigma2.iter().enumerate() {
            for (i, &m) in self.mu.iter().enumerate() {
                writeln!(out, "{m},{s2},{}", fmt(self.values[j][i]))?;
            }
        }
        for (i, &m) in self.mu.iter().enumerate() {
            writeln!(out, "{m},{},{}", self.grey_line_sigma2, fmt(self.grey_line_values[i]))?;
        }
        Ok(())
    }
}

/// A Gaussian whose KL and `I_2` contraction factors both exceed `(½+β)⁻²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceedanceWitness {
    pub mu: f64,
    pub sigma2: f64,
    pub kl_factor: f64,
    pub fisher2_factor: f64,
    pub threshold: f64,
}

/// Searches large `μ` and small `σ²` for the largest common exceedance.
pub fn exceedance_witness(model: &QuadraticModel) -> Result<ExceedanceWitness> {
    let threshold = model.rate().powi(2);
    let mut best: Option<ExceedanceWitness> = None;
    for mu in [1.0, 10.0, 1e2, 1e3] {
        for sigma2 in [1.0, 1e-1, 1e-2, 1e-3] {
            let kl = contraction_factor(model, mu, sigma2, Functional::Kl)?;
            let f2 = contraction_factor(model, mu, sigma2, Functional::Fisher2)?;
            if kl > threshold && f2 > threshold && best.is_none_or(|b| kl.min(f2) > b.kl_factor.min(b.fisher2_factor)) {
                best = Some(ExceedanceWitness {
                    mu,
                    sigma2,
                    kl_factor: kl,
                    fisher2_factor: f2,
                    threshold,
                });
            }
        }
    }
    best.ok_or(Error::WitnessNotFound(model.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_beta(alpha: f64) -> f64 {
        let g = |b: f64| b - alpha - b / (0.5 + b);
        let (mut lo, mut hi) = (0.5f64.max(alpha), alpha + 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn beta_landmarks() {
        let m = QuadraticModel::new(0.45).unwrap();
        assert!((m.beta - 1.1463).abs() < 1e-4);
        assert!((1.0 / m.beta - 0.87).abs() < 0.01);
        assert!((m.beta - 0.45 - m.beta / (0.5 + m.beta)).abs() < 1e-12);
        for a in [0.1, 1.0, 5.0] {
            assert!((solve_beta(a).unwrap() - bisect_beta(a)).abs() < 1e-10);
        }
        assert!((solve_beta(1e-12).unwrap() - 0.5).abs() < 1e-9);
        assert!(solve_beta(0.0).is_err());
    }

    #[test]
    fn recursion_examples() {
        let m = QuadraticModel::new(0.45).unwrap();
        assert_eq!(m.recursion_step(0.0, 0.7).0, 0.0);
        let (_, s) = m.recursion_step(0.3, 1.0 / m.beta);
        assert!((s - 1.0 / m.beta).abs() < 1e-14);
        let (a, b) = m.recursion_step(1.0, 1.0);
        assert!((a - 0.5970).abs() < 1e-3 && (b - 0.8955).abs() < 1e-3);
    }

    #[test]
    fn factors_on_equilibrium_slice() {
        let m = QuadraticModel::new(0.45).unwrap();
        let target = m.rate().powi(2);
        for f in [Functional::Kl, Functional::Fisher2, Functional::FisherInf] {
            let c = contraction_factor(&m, 1.3, 1.0 / m.beta, f).unwrap();
            assert!((c - target).abs() < 1e-12, "{f:?} {c}");
        }
        assert!(matches!(
            contraction_factor(&m, 0.0, 1.0 / m.beta, Functional::Kl),
            Err(Error::UndefinedRatio(_))
        ));
        assert!(matches!(
            contraction_factor(&m, 1.0, 1.0, Functional::FisherInf),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn large_mean_limit() {
        let m = QuadraticModel::new(0.45).unwrap();
        let s2 = 0.4;
        let lim = (1.0 + m.alpha * (1.0 + s2 / 2.0)).powi(-2);
        for f in [Functional::Kl, Functional::Fisher2] {
            let c = contraction_factor(&m, 1e5, s2, f).unwrap();
            assert!((c - lim).abs() < 1e-6, "{c} {lim}");
        }
    }

    #[test]
    fn witness_corner() {
        let m = QuadraticModel::new(0.45).unwrap();
        let w = exceedance_witness(&m).unwrap();
        assert_eq!((w.mu, w.sigma2), (1e3, 1e-3));
        assert!(w.kl_factor > w.threshold && w.fisher2_factor > w.threshold);
        assert!(w.kl_factor < (1.0 + m.alpha).powi(-2) + 1e-3);
    }

    #[test]
    fn heatmap_symmetry_and_csv() {
        let m = QuadraticModel::new(0.45).unwrap();
        let h = heatmap(&m, Functional::Kl, Range { lo: -2.0, hi: 2.0, count: 5 }, Range { lo: 0.5, hi: 1.5, count: 3 }).unwrap();
        for row in &h.values {
            for i in 0..5 {
                assert!((row[i] - row[4 - i]).abs() < 1e-12);
            }
        }
        assert!(h.grey_line_values[2].is_nan());
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# alpha, beta, functional, grey_line_sigma2\n# 0.45, "));
        assert_eq!(text.lines().count(), 3 + 15 + 5);
    }
}
