//! Localization events and the conditional statistics that drive the
//! search, cross-checked against the direct-sampling oracle.
//!
//! ```bash
//! cargo run --release --example conditional_statistics
//! ```

use ndarray::array;
use selreg::model::{generate, NoiseSpec, RegressorSet};
use selreg::moments::{conditional_stats, event_bounds, event_probability_analytic, LocalizationEvent};
use selreg::oracle::monte_carlo_conditional_oracle;

fn main() -> selreg::Result<()> {
    let (t, k, delta) = (1.0, 1, (-4.0f64).exp());
    let (lo, hi) = event_bounds(t, k, delta)?;
    println!("event slab at t: [{lo:.3}, {hi:.3}]");

    let ws = RegressorSet::from_rows(&[vec![1.0, 0.0, 0.0]], 0.8, 2.0)?;
    let noise = NoiseSpec::gaussian(1, 1.0);
    let batch = generate(&ws, &noise, 2_000_000, 5)?;

    // Candidate = the true regressor.
    let v = array![1.0, 0.0, 0.0];
    let event = LocalizationEvent::for_vector(v.view(), t, k, delta)?;
    println!("analytic event probability: {:.5}", event_probability_analytic(&event));

    let stats = conditional_stats(&batch.observed(), v.view(), &event)?;
    println!(
        "batch path:  m1 = {:+.4}, m2_plus = {:.4} over {} in-event samples",
        stats.m1, stats.m2_plus, stats.count
    );

    // Independent oracle: truncated-normal projection sampling, no batch
    // filtering involved.
    let oracle = monte_carlo_conditional_oracle(&ws, &noise, v.view(), &event, 500_000, 99)?;
    println!(
        "oracle path: m1 = {:+.4} (se {:.4}), m2_plus = {:.4} (se {:.4})",
        oracle.m1, oracle.m1_se, oracle.m2_plus, oracle.m2_plus_se
    );
    println!("(limits: m1 -> 0, m2_plus -> 1/2 for unit Gaussian noise)");
    Ok(())
}
