//! Estimate the regressor span from the truncated weighted second-moment
//! matrix and check the alignment against the ground truth.
//!
//! ```bash
//! cargo run --release --example spectral_subspace
//! ```

use selreg::model::{generate, NoiseSpec, RegressorSet};
use selreg::spectral::{
    build_weighted_moment_matrix, default_truncation_threshold, extract_subspace,
    subspace_alignment,
};

fn main() -> selreg::Result<()> {
    let n = 20;
    let k = 2;
    let ws = RegressorSet::orthogonal(n, k, 1.0, 2.0)?;
    let noise = NoiseSpec::gaussian(k, 0.3);
    let batch = generate(&ws, &noise, 1_000_000, 7)?;

    let threshold = default_truncation_threshold(n, k, 2.0, 0.05);
    println!("truncation threshold: {threshold:.2}");
    let mm = build_weighted_moment_matrix(&batch.observed(), threshold)?;
    println!(
        "moment matrix from {} samples ({} zeroed by truncation)",
        mm.samples_used, mm.samples_truncated
    );

    let subspace = extract_subspace(&mm, k)?;
    println!("top-{k} eigenvalues: {:?}", subspace.eigenvalues);
    println!("bulk level (median of the rest): {:.4}", subspace.bulk_level);
    println!("degenerate tie at position k: {}", subspace.degenerate);

    let residuals = subspace_alignment(&subspace, &ws)?;
    for (i, r) in residuals.iter().enumerate() {
        println!("|| w_{i} - P_U(w_{i}) || = {r:.4}");
    }
    Ok(())
}
