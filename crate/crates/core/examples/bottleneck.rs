//! Bottleneck (W∞) distance between equal-weight point clouds, with both
//! ground norms, and the point-cloud CSV format.
//!
//! ```bash
//! cargo run --release --example bottleneck
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use inflab::transport::{bottleneck_distance, read_points_csv, write_points_csv, GroundNorm};

fn main() -> inflab::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<Vec<f64>> = (0..256)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let shift = [0.3, -0.4];
    let b: Vec<Vec<f64>> = a.iter().map(|p| vec![p[0] + shift[0], p[1] + shift[1]]).collect();

    let eu = bottleneck_distance(&a, &b, GroundNorm::Euclidean)?;
    let l1 = bottleneck_distance(&a, &b, GroundNorm::PairL1)?;
    println!("translate by (0.3, -0.4): Euclidean {eu:.6}, pair-L1 {l1:.6}");

    let mut c = b.clone();
    c.reverse();
    let jittered: Vec<Vec<f64>> = c
        .iter()
        .map(|p| vec![p[0] + rng.random_range(-0.05..0.05), p[1] + rng.random_range(-0.05..0.05)])
        .collect();
    println!("jittered + shuffled: {:.6}", bottleneck_distance(&a, &jittered, GroundNorm::Euclidean)?);

    let mut buf = Vec::new();
    write_points_csv(&a[..3], &mut buf)?;
    print!("CSV:\n{}", String::from_utf8_lossy(&buf));
    assert_eq!(read_points_csv(&buf[..])?, a[..3].to_vec());
    Ok(())
}
