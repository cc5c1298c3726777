//! Relative entropy and relative Fisher informations on a grid, compared with
//! the Gaussian closed forms, and the two-radius test for unbounded I∞.
//!
//! ```bash
//! cargo run --release --example divergences
//! ```

use inflab::functionals::{
    fisher_information_inf, fisher_information_inf_two_radius, fisher_information_p, gaussian_divergence,
    kl_divergence, DivergenceKind,
};
use inflab::grid::{GridDensity, GridSpec};
use inflab::logconcave::{gaussian_density, GaussianParams};

fn main() -> inflab::error::Result<()> {
    let grid = GridSpec::line(-10.0, 10.0, 801)?;
    let a = GaussianParams::univariate(0.5, 0.8)?;
    let b = GaussianParams::univariate(0.0, 1.0)?;
    let (nu, mu) = (gaussian_density(&a, &grid)?, gaussian_density(&b, &grid)?);
    println!("KL   grid {:.6}  closed {:.6}", kl_divergence(&nu, &mu)?, gaussian_divergence(&a, &b, DivergenceKind::Kl)?);
    println!(
        "I₂   grid {:.6}  closed {:.6}",
        fisher_information_p(&nu, &mu, 2.0)?,
        gaussian_divergence(&a, &b, DivergenceKind::FisherP(2.0))?
    );

    let shifted = gaussian_density(&GaussianParams::univariate(0.5, 1.0)?, &grid)?;
    println!("I∞ for a pure shift: {:.6}", fisher_information_inf(&shifted, &mu)?);

    let base = GridSpec::line(-5.0, 5.0, 201)?;
    let bounded = fisher_information_inf_two_radius(&base, |g| {
        Ok((
            GridDensity::from_log_fn(g.clone(), |x| -0.5 * x[0] * x[0] + 0.3 * x[0])?,
            GridDensity::from_log_fn(g.clone(), |x| -0.5 * x[0] * x[0])?,
        ))
    })?;
    let unbounded = fisher_information_inf_two_radius(&base, |g| {
        Ok((
            GridDensity::from_log_fn(g.clone(), |x| -0.4 * x[0] * x[0])?,
            GridDensity::from_log_fn(g.clone(), |x| -0.5 * x[0] * x[0])?,
        ))
    })?;
    println!("two-radius, tilt: {bounded:?}");
    println!("two-radius, variance change: {unbounded:?}");
    Ok(())
}
