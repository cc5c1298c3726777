//! Uniform grids on ℝ or ℝ² and nonnegative densities stored as log-values.
//!
//! A [`GridDensity`] keeps `log f` at every node; `-inf` marks nodes outside
//! the support, which is how convex indicators (hard localisation) are
//! represented. Quadrature is the (tensor) trapezoid rule throughout.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing grid bounds.
const GRID_EQ_TOL: f64 = 1e-12;

/// Uniform tensor grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: usize,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: usize) -> Result<Self> {
        let dim = lower.len();
        if !(1..=2).contains(&dim) || upper.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2 with matching bounds (got {} lower, {} upper)",
                lower.len(),
                upper.len()
            )));
        }
        if points < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 points per axis, got {points}"
            )));
        }
        for (a, b) in lower.iter().zip(&upper) {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid(format!("bad axis bounds [{a}, {b}]")));
            }
        }
        Ok(Self {
            lower,
            upper,
            points,
        })
    }

    /// One-dimensional grid on `[lower, upper]`.
    pub fn line(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![lower], vec![upper], points)
    }

    /// Two-dimensional grid `[lower, upper]²`.
    pub fn square(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![lower; 2], vec![upper; 2], points)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.points - 1) as f64
    }

    /// Largest spacing over the axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(0.0, f64::max)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing(axis)
        }
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a flat node index (row-major, axis 0 slowest).
    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [index, 0]
        } else {
            [index / self.points, index % self.points]
        }
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        if self.dim() == 1 {
            i
        } else {
            i * self.points + j
        }
    }

    /// Coordinates of a node.
    pub fn node(&self, index: usize) -> Vec<f64> {
        let [i, j] = self.multi_index(index);
        if self.dim() == 1 {
            vec![self.coord(0, i)]
        } else {
            vec![self.coord(0, i), self.coord(1, j)]
        }
    }

    /// All 1D node coordinates along `axis`.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(axis, i)).collect()
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing(axis);
        if i == 0 || i + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }

    /// Tensor trapezoid weight of a node.
    pub fn weight(&self, index: usize) -> f64 {
        let [i, j] = self.multi_index(index);
        if self.dim() == 1 {
            self.axis_weight(0, i)
        } else {
            self.axis_weight(0, i) * self.axis_weight(1, j)
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// True if the node lies on the outer boundary of the grid.
    pub fn is_boundary(&self, index: usize) -> bool {
        let [i, j] = self.multi_index(index);
        let edge = |k: usize| k == 0 || k + 1 == self.points;
        edge(i) || (self.dim() == 2 && edge(j))
    }

    /// Same bounds and resolution as `other`, up to rounding.
    pub fn same_as(&self, other: &GridSpec) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= GRID_EQ_TOL * (1.0 + a.abs().max(b.abs()));
        self.points == other.points
            && self.dim() == other.dim()
            && self.lower.iter().zip(&other.lower).all(|(a, b)| close(*a, *b))
            && self.upper.iter().zip(&other.upper).all(|(a, b)| close(*a, *b))
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Grid carrying the sum variable: `[2a, 2b]` per axis with the same spacing.
    pub fn sum_grid(&self) -> GridSpec {
        GridSpec {
            lower: self.lower.iter().map(|a| 2.0 * a).collect(),
            upper: self.upper.iter().map(|b| 2.0 * b).collect(),
            points: 2 * self.points - 1,
        }
    }

    /// Tensor square of a 1D grid.
    pub fn tensor_square(&self) -> Result<GridSpec> {
        if self.dim() != 1 {
            return Err(Error::InvalidGrid("tensor square needs a 1D grid".into()));
        }
        GridSpec::square(self.lower[0], self.upper[0], self.points)
    }
}

/// Nonnegative density on a [`GridSpec`], stored as log-values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    log_values: Vec<f64>,
    mass: f64,
}

impl GridDensity {
    /// Builds a density from node log-values, checking the support shape.
    pub fn from_log_values(grid: GridSpec, log_values: Vec<f64>) -> Result<Self> {
        if log_values.len() != grid.len() {
            return Err(Error::SizeMismatch(log_values.len(), grid.len()));
        }
        if let Some(k) = log_values
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::InvalidParameter(format!(
                "log-value at node {k} is {}",
                log_values[k]
            )));
        }
        check_support_convex(&grid, &log_values)?;
        let mass = quadrature_mass(&grid, &log_values);
        Ok(Self {
            grid,
            log_values,
            mass,
        })
    }

    /// Evaluates `log f` at every node.
    pub fn from_log_fn(grid: GridSpec, log_f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let logs = (0..grid.len()).map(|k| log_f(&grid.node(k))).collect();
        Self::from_log_values(grid, logs)
    }

    /// The zero element on `grid`.
    pub fn zero(grid: GridSpec) -> Self {
        let n = grid.len();
        Self {
            grid,
            log_values: vec![f64::NEG_INFINITY; n],
            mass: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_zero(&self) -> bool {
        self.mass == 0.0
    }

    pub fn in_support(&self, index: usize) -> bool {
        self.log_values[index].is_finite()
    }

    /// Number of nodes with finite log-value.
    pub fn support_size(&self) -> usize {
        self.log_values.iter().filter(|v| v.is_finite()).count()
    }

    /// Density values `exp(log f)`.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// Discrete probabilities `w_k f_k / mass`, summing to one.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        if self.is_zero() {
            return Err(Error::EmptySupport);
        }
        let log_mass = self.mass.ln();
        Ok(self
            .log_values
            .iter()
            .enumerate()
            .map(|(k, l)| self.grid.weight(k) * (l - log_mass).exp())
            .collect())
    }

    /// Rescaled copy with unit mass.
    pub fn normalized(&self) -> Result<Self> {
        if self.is_zero() || !self.mass.is_finite() {
            return Err(Error::EmptySupport);
        }
        let shift = self.mass.ln();
        let logs: Vec<f64> = self.log_values.iter().map(|v| v - shift).collect();
        Ok(Self {
            grid: self.grid.clone(),
            mass: quadrature_mass(&self.grid, &logs),
            log_values: logs,
        })
    }

    /// Multiplies the density by `exp(shift)`.
    pub fn shifted_log(&self, shift: f64) -> Self {
        let logs: Vec<f64> = self.log_values.iter().map(|v| v + shift).collect();
        Self {
            grid: self.grid.clone(),
            mass: quadrature_mass(&self.grid, &logs),
            log_values: logs,
        }
    }

    /// New density with log-values `g(x, log f(x))`.
    pub fn map_log(&self, g: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let logs = (0..self.grid.len())
            .map(|k| g(&self.grid.node(k), self.log_values[k]))
            .collect();
        Self::from_log_values(self.grid.clone(), logs)
    }

    /// Integral of `phi` against the normalized density.
    pub fn expectation(&self, phi: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let p = self.probabilities()?;
        Ok((0..self.grid.len())
            .filter(|&k| p[k] > 0.0)
            .map(|k| p[k] * phi(&self.grid.node(k)))
            .sum())
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        (0..self.dim())
            .map(|a| self.expectation(|x| x[a]))
            .collect()
    }

    /// Covariance matrix in row-major order (`dim × dim`).
    pub fn covariance(&self) -> Result<Vec<f64>> {
        let m = self.mean()?;
        let d = self.dim();
        let mut cov = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let c = self.expectation(|x| (x[a] - m[a]) * (x[b] - m[b]))?;
                cov[a * d + b] = c;
                cov[b * d + a] = c;
            }
        }
        Ok(cov)
    }

    /// Variance of a 1D density.
    pub fn variance(&self) -> Result<f64> {
        Ok(self.covariance()?[0])
    }

    /// Writes the density in the documented CSV layout.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        writeln!(out, "# dim, lower, upper, points, mass")?;
        writeln!(
            out,
            "# {}, {}, {}, {}, {}",
            self.dim(),
            join(&self.grid.lower),
            join(&self.grid.upper),
            self.grid.points,
            self.mass
        )?;
        for k in 0..self.grid.len() {
            let x = self.grid.node(k);
            let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{}", coords.join(","), self.log_values[k])?;
        }
        Ok(())
    }

    /// Reads a density written by [`GridDensity::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut header = None;
        let mut logs = Vec::new();
        let mut rows = Vec::new();
        for (lineno, line) in lines.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if rest.trim_start().starts_with("dim") {
                    continue;
                }
                header = Some(parse_header(rest, lineno + 1)?);
                continue;
            }
            let fields: Vec<f64> = trimmed
                .split(',')
                .map(|s| parse_f64(s, lineno + 1))
                .collect::<Result<_>>()?;
            rows.push((lineno + 1, fields));
        }
        let (grid, mass) =
            header.ok_or_else(|| Error::Parse("missing '# dim, lower, ...' header".into()))?;
        if rows.len() != grid.len() {
            return Err(Error::Parse(format!(
                "expected {} rows, found {}",
                grid.len(),
                rows.len()
            )));
        }
        for (k, (lineno, fields)) in rows.into_iter().enumerate() {
            if fields.len() != grid.dim() + 1 {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected {} fields",
                    grid.dim() + 1
                )));
            }
            let node = grid.node(k);
            let h = grid.max_spacing();
            if node.iter().zip(&fields).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + h)) {
                return Err(Error::Parse(format!(
                    "line {lineno}: coordinates do not match grid node {k}"
                )));
            }
            logs.push(fields[grid.dim()]);
        }
        let density = Self::from_log_values(grid, logs)?;
        if (density.mass - mass).abs() > 1e-9 * mass.abs().max(1e-300) {
            return Err(Error::Parse(format!(
                "header mass {mass} disagrees with quadrature {}",
                density.mass
            )));
        }
        Ok(density)
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {lineno}: '{}' ({e})", s.trim())))
}

fn parse_header(rest: &str, lineno: usize) -> Result<(GridSpec, f64)> {
    let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(Error::Parse(format!("line {lineno}: header needs 5 fields")));
    }
    let dim: usize = parts[0]
        .parse()
        .map_err(|_| Error::Parse(format!("line {lineno}: bad dim '{}'", parts[0])))?;
    let axis = |s: &str| -> Result<Vec<f64>> {
        s.split(';').map(|v| parse_f64(v, lineno)).collect()
    };
    let lower = axis(parts[1])?;
    let upper = axis(parts[2])?;
    if lower.len() != dim {
        return Err(Error::Parse(format!(
            "line {lineno}: dim {dim} but {} lower bounds",
            lower.len()
        )));
    }
    let points: usize = parts[3]
        .parse()
        .map_err(|_| Error::Parse(format!("line {lineno}: bad points '{}'", parts[3])))?;
    let mass = parse_f64(parts[4], lineno)?;
    Ok((GridSpec::new(lower, upper, points)?, mass))
}

/// Trapezoid mass of `exp(log_values)`, scaled to avoid overflow.
pub(crate) fn quadrature_mass(grid: &GridSpec, log_values: &[f64]) -> f64 {
    let top = log_values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    let s: f64 = log_values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(k, v)| grid.weight(k) * (v - top).exp())
        .sum();
    s * top.exp()
}

fn check_line_convex(finite: impl Iterator<Item = bool>) -> bool {
    // pattern must be F* T* F*
    let mut state = 0;
    for f in finite {
        match (state, f) {
            (0, true) => state = 1,
            (1, false) => state = 2,
            (2, true) => return false,
            _ => {}
        }
    }
    true
}

fn check_support_convex(grid: &GridSpec, logs: &[f64]) -> Result<()> {
    let n = grid.points();
    let ok = if grid.dim() == 1 {
        check_line_convex(logs.iter().map(|v| v.is_finite()))
    } else {
        (0..n).all(|i| check_line_convex((0..n).map(|j| logs[i * n + j].is_finite())))
            && (0..n).all(|j| check_line_convex((0..n).map(|i| logs[i * n + j].is_finite())))
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidGrid(
            "support is not discretely convex".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_coords() {
        let g = GridSpec::line(-8.0, 8.0, 257).unwrap();
        assert_eq!(g.spacing(0), 1.0 / 16.0);
        assert_eq!(g.coord(0, 128), 0.0);
        assert_eq!(g.coord(0, 256), 8.0);
        let s = g.sum_grid();
        assert_eq!(s.points(), 513);
        assert_eq!(s.spacing(0), g.spacing(0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::line(1.0, 0.0, 16).is_err());
        assert!(GridSpec::line(0.0, 1.0, 4).is_err());
        assert!(GridSpec::new(vec![0.0; 3], vec![1.0; 3], 16).is_err());
    }

    #[test]
    fn nonconvex_support_rejected() {
        let g = GridSpec::line(0.0, 1.0, 9).unwrap();
        let mut logs = vec![0.0; 9];
        logs[4] = f64::NEG_INFINITY;
        assert!(GridDensity::from_log_values(g.clone(), logs).is_err());
        let mut logs = vec![f64::NEG_INFINITY; 9];
        logs[2..6].iter_mut().for_each(|v| *v = 0.0);
        assert!(GridDensity::from_log_values(g, logs).is_ok());
    }

    #[test]
    fn uniform_mass_is_exact() {
        let g = GridSpec::line(0.0, 2.0, 33).unwrap();
        let d = GridDensity::from_log_fn(g, |_| 0.0).unwrap();
        assert!((d.mass() - 2.0).abs() < 1e-14);
        let n = d.normalized().unwrap();
        assert!((n.mass() - 1.0).abs() < 1e-14);
        let p: f64 = n.probabilities().unwrap().iter().sum();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_roundtrip_2d_with_cutoff() {
        let g = GridSpec::square(-1.0, 1.0, 9).unwrap();
        let d = GridDensity::from_log_fn(g, |x| {
            if x[0] * x[0] + x[1] * x[1] <= 0.8 {
                -x[0] * x[0] - 0.5 * x[1]
            } else {
                f64::NEG_INFINITY
            }
        })
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dim, lower, upper, points, mass\n# 2, -1;-1, 1;1, 9, "));
        assert!(text.contains("-inf"));
        assert!(!text.contains("NaN"));
        let back = GridDensity::read_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_reports_bad_rows() {
        let text = "# dim, lower, upper, points, mass\n# 1, 0, 1, 8, 1\n0,0\n";
        assert!(matches!(
            GridDensity::read_csv(text.as_bytes()),
            Err(Error::Parse(_))
        ));
    }
}
