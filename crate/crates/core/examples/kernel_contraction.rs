//! The parent kernel P(·;x) of the infinitesimal model for a Gaussian parent
//! density, and its quantized W∞ distance as x moves.
//!
//! ```bash
//! cargo run --release --example kernel_contraction
//! ```

use std::f64::consts::SQRT_2;

use inflab::gaussian_model::QuadraticModel;
use inflab::grid::GridSpec;
use inflab::infinitesimal::kernel_density;
use inflab::logconcave::gaussian_density;
use inflab::transport::{bound_kernel, w_infinity_quantized, GroundNorm};

fn main() -> inflab::error::Result<()> {
    let model = QuadraticModel::new(0.45)?;
    let grid = GridSpec::line(-7.0, 7.0, 193)?;
    let f = gaussian_density(&model.equilibrium(), &grid)?;

    let p0 = kernel_density(&f, 0.0)?;
    for x in [0.5, 1.0, 2.0] {
        let p = kernel_density(&f, x)?;
        let w = w_infinity_quantized(&p0, &p, 512, GroundNorm::Euclidean)?;
        let bound = bound_kernel(model.beta, &[0.0], &[x])?;
        println!(
            "x = {x}: mean {:?}, W∞ ≈ {:.5}, bound {:.5}, cell diameter ≤ {:.3}",
            p.mean()?.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            w.value,
            bound,
            w.max_cell_diameter
        );
    }
    println!("pair-norm rate (½+β)⁻¹ = {:.5} = √2 × bound at |x−x̃|=1: {:.5}", model.rate(), SQRT_2 * bound_kernel(model.beta, &[0.0], &[1.0])?);
    Ok(())
}
