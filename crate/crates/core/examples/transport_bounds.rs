//! The W∞ bound calculators: isotropic, anisotropic (both regimes), the
//! generic sphere sweep, and the kernel bound.
//!
//! ```bash
//! cargo run --release --example transport_bounds
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;

use inflab::transport::{
    bound_anisotropic, bound_generic, bound_generic_sweep, bound_isotropic, bound_kernel, ConvexitySpec,
    DirectionalBound,
};

fn main() -> inflab::error::Result<()> {
    println!("isotropic κ=2, L=3: {:?}", bound_isotropic(2.0, 3.0)?);
    for (ka, kb) in [(1.0, 1.0), (2.0, 1.0), (4.0, 1.0), (10.0, 0.5)] {
        let r = bound_anisotropic(ka, kb, 1.0)?;
        println!("κ_A = {ka:>4}, κ_B = {kb}: M = {:.6} ({:?})", r.value, r.regime);
    }

    // same shape, A rotated by 40°: closed form and sweep agree
    let spec = ConvexitySpec::anisotropic_plane(4.0, 1.0, 2.0, 40f64.to_radians())?;
    println!("rotated: closed {:.9}, sweep {:.9}", bound_generic(&spec)?.value, bound_generic_sweep(&spec).value);

    // a non-projection ℓ with a general K only has the sweep
    let k = DMatrix::from_row_slice(2, 2, &[3.0, 0.8, 0.8, 1.0]);
    let spec = ConvexitySpec::new(
        k,
        DirectionalBound::Custom(Arc::new(|z: &[f64]| z[0].abs() + 0.5 * z[1].max(0.0))),
    )?;
    let r = bound_generic(&spec)?;
    println!("custom ℓ: M = {:.6}, witness {:?}, feasible {}", r.value, r.witness_direction, r.witness_feasible(&spec));
    println!("{}", serde_json::to_string(&r)?);

    println!("kernel bound κ=1, |x−x̃|=1: {:.6}", bound_kernel(1.0, &[0.0], &[1.0])?);
    Ok(())
}
