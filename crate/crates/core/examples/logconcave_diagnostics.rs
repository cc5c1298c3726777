//! Grid log-concavity diagnostics: convexity range, the convolution law, the
//! second moment about the peak, and the argmin shift under a perturbation.
//!
//! ```bash
//! cargo run --release --example logconcave_diagnostics
//! ```

use inflab::grid::{GridDensity, GridSpec};
use inflab::logconcave::{argmin_shift_check, convexity_range, convolve, gaussian_density, second_moment_about_argmin, GaussianParams};

fn main() -> inflab::error::Result<()> {
    let grid = GridSpec::line(-8.0, 8.0, 513)?;
    let f = gaussian_density(&GaussianParams::univariate(0.0, 0.5)?, &grid)?;
    let g = gaussian_density(&GaussianParams::univariate(0.0, 1.0)?, &grid)?;
    let c = convolve(&f, &g)?.map_log(|x, l| if x[0].abs() <= 5.0 { l } else { f64::NEG_INFINITY })?;
    println!("κ(f) = {:?}", convexity_range(&f)?);
    println!("κ(f∗g) = {:?}, expected 1/(0.5+1) = {:.6}", convexity_range(&c)?, 1.0 / 1.5);

    let bumpy = GridDensity::from_log_fn(grid.clone(), |x| -x[0] * x[0] - 0.5 * (1.0 + (x[0] - 1.0).powi(2)).sqrt())?;
    let k = convexity_range(&bumpy)?.kappa_min;
    println!("second moment about the peak {:.6} ≤ 1/κ = {:.6}", second_moment_about_argmin(&bumpy)?, 1.0 / k);

    let v: Vec<f64> = (0..grid.len()).map(|i| 0.5 * 1.5 * grid.coord(0, i).powi(2)).collect();
    let u: Vec<f64> = (0..grid.len()).map(|i| 0.8 * (grid.coord(0, i) - 2.0).abs()).collect();
    let rep = argmin_shift_check(&grid, &v, &u, 0.8, 1.5)?;
    println!("argmin shift: lhs {:.5}, rhs {:.5}, holds {}", rep.lhs, rep.rhs, rep.holds);
    Ok(())
}
