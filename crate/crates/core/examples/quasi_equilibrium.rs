//! Localised quasi-equilibrium of the infinitesimal model under quadratic
//! selection, followed by the convergence diagnostic from a tilted start.
//!
//! ```bash
//! cargo run --release --example quasi_equilibrium
//! ```

use inflab::grid::GridSpec;
use inflab::infinitesimal::{convergence_report, solve_from, solve_quasi_equilibrium, ModelConfig, Mortality, GAP_NOISE_FLOOR};
use inflab::logconcave::convexity_range;

fn main() -> inflab::error::Result<()> {
    let cfg = ModelConfig::new(Mortality::quadratic(0.45)?, Some(6.0), GridSpec::line(-8.0, 8.0, 513)?, 500, 1e-9)?;
    let beta = cfg.beta();
    let q = solve_quasi_equilibrium(&cfg)?;
    println!(
        "λ = {:.8}, variance {:.6} (1/β = {:.6}), κ_min {:.6} (β = {beta:.6}), {} iterations",
        q.lambda,
        q.density.variance()?,
        1.0 / beta,
        convexity_range(&q.density)?.kappa_min,
        q.report.records.len()
    );

    let tilted = cfg.initial_datum()?.map_log(|x, l| l + 0.5 * x[0])?;
    let from_tilt = solve_from(&cfg, tilted)?;
    println!("gap ratios from a tilted start (bound (½+β)⁻¹ = {:.4}):", 1.0 / (0.5 + beta));
    for r in from_tilt.report.gap_ratios(GAP_NOISE_FLOOR).iter().take(8) {
        println!("  {r:.5}");
    }

    let f0 = q.density.map_log(|x, l| l + 0.5 * x[0])?;
    let rep = convergence_report(&f0, &cfg, 15, &q.density, q.lambda)?;
    println!("fitted rates: I∞ {:?}, KL {:?}", rep.inf_rate, rep.kl_rate);
    let mut out = Vec::new();
    q.report.write_trace_csv(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
