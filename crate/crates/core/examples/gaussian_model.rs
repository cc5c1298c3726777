//! Closed-form Gaussian recursion under quadratic selection: β, the orbit,
//! contraction factors, the exceedance corner and a heatmap CSV.
//!
//! ```bash
//! cargo run --release --example gaussian_model
//! ```

use inflab::gaussian_model::{contraction_factor, exceedance_witness, heatmap, Functional, QuadraticModel, Range};

fn main() -> inflab::error::Result<()> {
    let m = QuadraticModel::new(0.45)?;
    println!("β = {:.10}, 1/β = {:.4}, (½+β)⁻² = {:.4}", m.beta, 1.0 / m.beta, m.rate().powi(2));

    for (n, (mu, s2)) in m.orbit(2.0, 0.1, 8).iter().enumerate() {
        println!("n = {n}: μ = {mu:+.6}, σ² = {s2:.6}, kept mass {:.6}", m.mass_ratio(*mu, *s2));
    }

    for f in [Functional::Kl, Functional::Fisher2, Functional::FisherInf] {
        println!("{:>9} at σ² = 1/β: {:.6}", f.name(), contraction_factor(&m, 1.0, 1.0 / m.beta, f)?);
    }
    let w = exceedance_witness(&m)?;
    println!("exceedance at μ = {}, σ² = {}: KL {:.4}, I₂ {:.4} > {:.4}", w.mu, w.sigma2, w.kl_factor, w.fisher2_factor, w.threshold);

    let h = heatmap(&m, Functional::Kl, Range { lo: -3.0, hi: 3.0, count: 7 }, Range { lo: 0.25, hi: 1.75, count: 4 })?;
    h.write_csv(std::io::stdout().lock())?;
    Ok(())
}
