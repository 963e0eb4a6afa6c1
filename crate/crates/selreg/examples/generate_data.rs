//! Generate a synthetic batch, inspect the hidden channel, and write the
//! CSV plus its sidecar.
//!
//! ```bash
//! cargo run --release --example generate_data
//! ```

use selreg::model::{
    empirical_observation_probability, generate, validate_regressors, NoiseSpec, RegressorSet,
};

fn main() -> selreg::Result<()> {
    // Two orthogonal regressors of norm 1.5 in R^6, delta = 1, B = 2.
    let ws = RegressorSet::orthogonal(6, 2, 1.0, 2.0)?;
    let violations = validate_regressors(&ws);
    println!("assumption violations: {}", violations.len());

    let noise = NoiseSpec::gaussian(2, 0.3);
    println!("noise validation: {:?} violations", noise.validate(2, 2.0).len());

    let batch = generate(&ws, &noise, 100_000, 42)?;
    println!("generated m = {} samples in R^{}", batch.m(), batch.n());

    // The hidden channel knows which regressor attained each maximum.
    let hidden = batch.hidden().unwrap();
    let wins0 = hidden.argmax.iter().filter(|&&a| a == 0).count();
    println!(
        "regressor 0 attained the max in {:.1}% of samples",
        100.0 * wins0 as f64 / batch.m() as f64
    );

    // Same number, streaming, without materializing a batch.
    let p0 = empirical_observation_probability(&ws, &noise, 100_000, 42, 0, false)?;
    println!("streaming estimate of the same frequency: {:.4}", p0);

    let dir = std::env::temp_dir().join("selreg_example");
    std::fs::create_dir_all(&dir)?;
    let data = dir.join("batch.csv");
    let side = dir.join("batch.hidden.csv");
    batch.write_csv(&data)?;
    batch.write_sidecar(&side)?;
    println!("wrote {} and {}", data.display(), side.display());
    Ok(())
}
