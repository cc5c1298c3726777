//! Exact 1D transport between grid densities and the L∞ transport-information
//! inequality for a pair of shifted Gaussians.
//!
//! ```bash
//! cargo run --release --example quantile_transport
//! ```

use inflab::grid::{GridDensity, GridSpec};
use inflab::logconcave::{gaussian_density, GaussianParams};
use inflab::transport::{ti_check, wasserstein_1d};

fn main() -> inflab::error::Result<()> {
    let grid = GridSpec::line(-10.0, 10.0, 2001)?;
    let mu = gaussian_density(&GaussianParams::univariate(0.0, 1.0)?, &grid)?;
    let nu = gaussian_density(&GaussianParams::univariate(0.7, 1.0)?, &grid)?;

    for p in [1.0, 2.0, 8.0, f64::INFINITY] {
        println!("W_{p:<3} = {:.6}", wasserstein_1d(&mu, &nu, p)?);
    }

    let r = ti_check(&mu, &nu, f64::INFINITY)?;
    println!("W∞ = {:.6}  vs  I∞/κ = {:.6}  (κ = {:.4}, holds = {})", r.lhs, r.rhs, r.kappa, r.holds);

    // a bounded log-Lipschitz tilt of mu
    let tilted = GridDensity::from_log_fn(grid.clone(), |x| -0.5 * x[0] * x[0] - 0.2 * (1.0 + x[0] * x[0]).sqrt())?;
    let r2 = ti_check(&mu, &tilted, 2.0)?;
    println!("W₂ = {:.6} ≤ √I₂/κ = {:.6}: {}", r2.lhs, r2.rhs, r2.holds);
    Ok(())
}
