//! Build a covering net of the annulus inside a subspace and spot-check the
//! covering property with random probes.
//!
//! ```bash
//! cargo run --release --example candidate_net
//! ```

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use selreg::net::{build_net, predict_net_size};
use selreg::spectral::SubspaceEstimate;

fn main() -> selreg::Result<()> {
    let (delta, b, resolution) = (1.0, 2.0, 0.2);
    let k = 2;

    // A fixed subspace: the first two coordinate axes of R^5.
    let mut basis = Array2::zeros((5, k));
    basis[[0, 0]] = 1.0;
    basis[[1, 1]] = 1.0;
    let subspace = SubspaceEstimate::from_basis(basis)?;

    println!(
        "predicted size: {:.0}",
        predict_net_size(delta, b, resolution, k)
    );
    let net = build_net(&subspace, delta, b, resolution, 10_000_000)?;
    println!("actual size: {}", net.len());

    // Covering check: every probe in the annulus has a net point within the
    // resolution.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20_000 {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let u = rng.gen::<f64>();
        let rho = (delta * delta + u * (b * b - delta * delta)).sqrt();
        let probe = [rho * theta.cos(), rho * theta.sin()];
        let mut best = f64::INFINITY;
        for i in 0..net.len() {
            let c = net.coords(i);
            let d = (c[0] - probe[0]).powi(2) + (c[1] - probe[1]).powi(2);
            best = best.min(d);
        }
        worst = worst.max(best.sqrt());
    }
    println!("worst probe distance over 20k probes: {worst:.4} (resolution {resolution})");

    let path = std::env::temp_dir().join("selreg_net.csv");
    net.write_csv(&path)?;
    println!("wrote net to {}", path.display());
    Ok(())
}
