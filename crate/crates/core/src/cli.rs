//! Command-line driver. Every subcommand resolves a strict JSON config
//! (file, then flag overrides), writes its artifacts under `--out-dir` and a
//! `manifest.json` listing them with the config hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acceptance::{run_all, Mode};
use crate::error::{Error, Result};
use crate::gaussian_model::{heatmap, Functional, QuadraticModel, Range, DEFAULT_MU_RANGE, DEFAULT_SIGMA2_RANGE};
use crate::grid::GridSpec;
use crate::infinitesimal::{convergence_report, solve_quasi_equilibrium, ModelConfig, Mortality};
use crate::langevin::{pathwise_sup_report, simulate_coupled, summarize, CoupledProblem};
use crate::transport::{bound_anisotropic, bound_generic, bound_kernel, BoundReport, ConvexitySpec, DirectionalBound};

#[derive(Debug, Parser)]
#[command(name = "inflab", version, about = "L∞ transport bounds and the infinitesimal model")]
pub struct Cli {
    /// Root directory for all artifacts.
    #[arg(long, global = true, default_value = "inflab-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// W∞ bounds for a curvature/perturbation pair.
    Bounds(BoundsArgs),
    /// Coupled Langevin simulation and pathwise check.
    Couple(CoupleArgs),
    /// Quasi-equilibrium iteration and convergence diagnostics.
    Iterate(IterateArgs),
    /// Closed-form Gaussian recursion and contraction heatmaps.
    Gaussian(GaussianArgs),
    /// Runs the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "kappaA")]
    pub kappa_a: Option<f64>,
    #[arg(long = "kappaB")]
    pub kappa_b: Option<f64>,
    #[arg(long = "LA")]
    pub l_a: Option<f64>,
    /// Parent curvature for the kernel bound.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xt: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CoupleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IterateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub r_loc: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Extra copy of the heatmap for `--functional` at this path.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    #[arg(long, default_value = "KL")]
    pub functional: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Reduced Monte-Carlo and trial counts.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsConfig {
    Anisotropic {
        kappa_a: f64,
        kappa_b: f64,
        l_a: f64,
    },
    Kernel {
        kappa: f64,
        x: Vec<f64>,
        xt: Vec<f64>,
    },
    /// `K` row by row; `ℓ(z) = lip·|P z|` with `P` the projector onto the
    /// span of `projection` (columns), or `lip·|z|` without it.
    Generic {
        k: Vec<Vec<f64>>,
        lip: f64,
        #[serde(default)]
        projection: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `U = κ|x|²/2`, `H = ⟨l, x⟩`.
    GaussianLinear { kappa: f64, l: Vec<f64> },
    /// `U = ½⟨x,Kx⟩`, `K = κ_A P_A + κ_B P_B` with `A` at angle `theta`,
    /// `H = lip·√(1 + ⟨a,x⟩²)`.
    Anisotropic {
        kappa_a: f64,
        kappa_b: f64,
        lip: f64,
        theta: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to `8/κ_min`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
}

fn default_paths() -> usize {
    10_000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_ps() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::Anisotropic {
                kappa_a: 4.0,
                kappa_b: 1.0,
                lip: 2.0,
                theta: std::f64::consts::FRAC_PI_6,
            },
            n_paths: default_paths(),
            dt: default_dt(),
            horizon: None,
            seed: 0,
            p: default_ps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterateConfig {
    pub alpha: f64,
    pub r_loc: Option<f64>,
    pub grid: GridConfig,
    pub max_iter: usize,
    pub tol_inf: f64,
    /// Generations in the convergence diagnostic.
    pub convergence_steps: usize,
    /// The diagnostic starts from `F₀ ∝ e^{tilt·x} F*`.
    pub tilt: f64,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            r_loc: Some(6.0),
            grid: GridConfig {
                lower: -8.0,
                upper: 8.0,
                points: 513,
            },
            max_iter: 500,
            tol_inf: 1e-9,
            convergence_steps: 15,
            tilt: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianConfig {
    pub alpha: f64,
    pub mu0: f64,
    pub sigma2_0: f64,
    pub orbit_steps: usize,
    pub functionals: Vec<Functional>,
    pub mu_range: Range,
    pub sigma2_range: Range,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            mu0: 1.0,
            sigma2_0: 1.0,
            orbit_steps: 20,
            functionals: vec![Functional::Kl, Functional::Fisher2],
            mu_range: DEFAULT_MU_RANGE,
            sigma2_range: DEFAULT_SIGMA2_RANGE,
        }
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Collects output files and writes the manifest.
struct Outputs {
    root: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<()> {
        let canonical = serde_json::to_string(config)?;
        let hash = Sha256::digest(canonical.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        let manifest = serde_json::json!({
            "command": command,
            "config": serde_json::from_str::<serde_json::Value>(&canonical)?,
            "config_sha256": hex,
            "files": self.files,
        });
        let mut w = BufWriter::new(File::create(self.root.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidParameter("K must be a nonempty square matrix".into()));
    }
    Ok(nalgebra::DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn run_bounds(args: &BoundsArgs, out: &Path) -> Result<bool> {
    let cfg = if let Some(path) = &args.config {
        load(path)?
    } else if let (Some(kappa_a), Some(kappa_b), Some(l_a)) = (args.kappa_a, args.kappa_b, args.l_a) {
        BoundsConfig::Anisotropic { kappa_a, kappa_b, l_a }
    } else if let (Some(kappa), Some(x), Some(xt)) = (args.kappa, args.x.clone(), args.xt.clone()) {
        BoundsConfig::Kernel { kappa, x, xt }
    } else {
        return Err(Error::Parse(
            "bounds needs --config, or --kappaA/--kappaB/--LA, or --kappa/--x/--xt".into(),
        ));
    };
    let report: BoundReport = match &cfg {
        BoundsConfig::Anisotropic { kappa_a, kappa_b, l_a } => bound_anisotropic(*kappa_a, *kappa_b, *l_a)?,
        BoundsConfig::Kernel { kappa, x, xt } => {
            let value = bound_kernel(*kappa, x, xt)?;
            let dist = x.iter().zip(xt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let mut r = bound_anisotropic(0.5 + kappa, *kappa, dist / std::f64::consts::SQRT_2)?;
            r.value = value;
            r
        }
        BoundsConfig::Generic { k, lip, projection } => {
            let k = matrix(k)?;
            let d = k.nrows();
            let ell = match projection {
                None => DirectionalBound::Isotropic { lip: *lip },
                Some(cols) => {
                    if cols.is_empty() || cols.iter().any(|c| c.len() != d) {
                        return Err(Error::InvalidParameter("projection columns must have length d".into()));
                    }
                    DirectionalBound::Projection {
                        lip: *lip,
                        basis: nalgebra::DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]),
                    }
                }
            };
            bound_generic(&ConvexitySpec::new(k, ell)?)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    let mut o = Outputs::new(out)?;
    o.json("bound.json", &report)?;
    o.finish("bounds", &cfg)?;
    Ok(true)
}

fn build_problem(p: &ProblemConfig) -> Result<CoupledProblem> {
    match p {
        ProblemConfig::GaussianLinear { kappa, l } => CoupledProblem::gaussian_linear(*kappa, l.clone()),
        ProblemConfig::Anisotropic {
            kappa_a,
            kappa_b,
            lip,
            theta,
        } => {
            let spec = ConvexitySpec::anisotropic_plane(*kappa_a, *kappa_b, *lip, *theta)?;
            let a = [theta.cos(), theta.sin()];
            let l = *lip;
            CoupledProblem::quadratic(
                spec,
                Arc::new(move |x| l * (1.0 + (a[0] * x[0] + a[1] * x[1]).powi(2)).sqrt()),
                Arc::new(move |x, out| {
                    let s = a[0] * x[0] + a[1] * x[1];
                    let g = l * s / (1.0 + s * s).sqrt();
                    out[0] = g * a[0];
                    out[1] = g * a[1];
                }),
                l,
            )
        }
    }
}

fn run_couple(args: &CoupleArgs, out: &Path) -> Result<bool> {
    let mut cfg: CoupleConfig = match &args.config {
        Some(p) => load(p)?,
        None => CoupleConfig::default(),
    };
    if let Some(n) = args.n_paths {
        cfg.n_paths = n;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let problem = build_problem(&cfg.problem)?;
    let bound = bound_generic(problem.spec())?;
    let horizon = cfg.horizon.unwrap_or(8.0 / problem.spec().kappa_min());
    let ens = simulate_coupled(&problem, cfg.n_paths, cfg.dt, horizon, cfg.seed)?;
    let rep = pathwise_sup_report(&ens, bound.value);
    let summary = summarize(&ens, bound.value, &cfg.p)?;
    println!(
        "M = {:.6} ({:?}); max sup|X−Y| = {:.6}; violation fraction = {}",
        bound.value, bound.regime, rep.max_sup, rep.violation_fraction
    );
    let mut o = Outputs::new(out)?;
    o.json("ensemble_summary.json", &summary)?;
    o.json("pathwise_report.json", &rep)?;
    o.json("bound.json", &bound)?;
    o.finish("couple", &cfg)?;
    Ok(rep.violation_fraction == 0.0)
}

fn run_iterate(args: &IterateArgs, out: &Path) -> Result<bool> {
    let mut cfg: IterateConfig = match &args.config {
        Some(p) => load(p)?,
        None => IterateConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(r) = args.r_loc {
        cfg.r_loc = Some(r);
    }
    let grid = GridSpec::line(cfg.grid.lower, cfg.grid.upper, cfg.grid.points)?;
    let model = ModelConfig::new(Mortality::quadratic(cfg.alpha)?, cfg.r_loc, grid, cfg.max_iter, cfg.tol_inf)?;
    let q = solve_quasi_equilibrium(&model)?;
    let tilt = cfg.tilt;
    let f0 = q.density.map_log(|x, l| l + tilt * x[0])?;
    let conv = convergence_report(&f0, &model, cfg.convergence_steps, &q.density, q.lambda)?;
    for w in &conv.warnings {
        eprintln!("warning: {w}");
    }
    let rate = 1.0 / (0.5 + model.beta());
    println!(
        "λ = {:.8}; variance = {:.6} (1/β = {:.6}); converged = {}; I∞ rate {:?} vs (½+β)⁻¹ = {rate:.4}; KL rate {:?}",
        q.lambda,
        q.density.variance()?,
        1.0 / model.beta(),
        q.report.converged,
        conv.inf_rate,
        conv.kl_rate
    );
    let mut o = Outputs::new(out)?;
    let mut w = o.create("trace.csv")?;
    q.report.write_trace_csv(&mut w)?;
    w.flush()?;
    let mut w = o.create("quasi_equilibrium.csv")?;
    q.density.write_csv(&mut w)?;
    w.flush()?;
    let mut w = o.create("convergence.csv")?;
    conv.write_csv(&mut w)?;
    w.flush()?;
    o.json(
        "iterate_summary.json",
        &serde_json::json!({
            "lambda": q.lambda,
            "converged": q.report.converged,
            "beta_reference": q.report.beta_reference,
            "reference_rate": rate,
            "inf_rate": conv.inf_rate,
            "kl_rate": conv.kl_rate,
            "warnings": conv.warnings,
        }),
    )?;
    o.finish("iterate", &cfg)?;
    Ok(q.report.converged)
}

fn run_gaussian(args: &GaussianArgs, out: &Path) -> Result<bool> {
    let mut cfg: GaussianConfig = match &args.config {
        Some(p) => load(p)?,
        None => GaussianConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    let model = QuadraticModel::new(cfg.alpha)?;
    println!(
        "alpha = {}; beta = {:.12}; 1/beta = {:.6}; (1/2+beta)^-2 = {:.6}; (1+alpha)^-2 = {:.6}",
        model.alpha,
        model.beta,
        1.0 / model.beta,
        model.rate().powi(2),
        (1.0 + model.alpha).powi(-2)
    );
    let mut o = Outputs::new(out)?;
    let mut w = o.create("orbit.csv")?;
    writeln!(w, "n,mu,sigma2")?;
    for (n, (m, s)) in model.orbit(cfg.mu0, cfg.sigma2_0, cfg.orbit_steps).iter().enumerate() {
        writeln!(w, "{n},{m},{s}")?;
    }
    w.flush()?;
    for f in &cfg.functionals {
        let h = heatmap(&model, *f, cfg.mu_range, cfg.sigma2_range)?;
        let mut w = o.create(&format!("heatmap_{}.csv", f.name()))?;
        h.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &args.heatmap {
        let f: Functional = args.functional.parse()?;
        let h = heatmap(&model, f, cfg.mu_range, cfg.sigma2_range)?;
        let mut w = BufWriter::new(File::create(path)?);
        h.write_csv(&mut w)?;
        w.flush()?;
    }
    o.finish("gaussian", &cfg)?;
    Ok(true)
}

fn run_verify(args: &VerifyArgs, out: &Path) -> Result<bool> {
    let mode = if args.quick { Mode::Quick } else { Mode::Full };
    let results = run_all(mode);
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().all(|r| r.passed);
    let mut o = Outputs::new(out)?;
    o.json("verify.json", &results)?;
    o.finish("verify", &serde_json::json!({ "quick": args.quick }))?;
    Ok(passed)
}

/// Caps the global rayon pool from `INFLAB_THREADS`.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("INFLAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Parse(format!("INFLAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Parse("INFLAB_THREADS must be ≥ 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command; `Ok(true)` iff every check it performs passes.
pub fn run(cli: &Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Bounds(a) => run_bounds(a, &cli.out_dir),
        Command::Couple(a) => run_couple(a, &cli.out_dir),
        Command::Iterate(a) => run_iterate(a, &cli.out_dir),
        Command::Gaussian(a) => run_gaussian(a, &cli.out_dir),
        Command::Verify(a) => run_verify(a, &cli.out_dir),
    }
}

/// Exit code for `argv`: 0 if all checks pass, 1 if a check fails,
/// 2 for usage, config or runtime errors.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
