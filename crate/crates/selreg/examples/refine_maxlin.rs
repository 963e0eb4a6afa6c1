//! Alternating-minimization refinement on a shared-noise batch: recover
//! coarse estimates, then polish them to the statistical floor.
//!
//! ```bash
//! cargo run --release --example refine_maxlin
//! ```

use selreg::model::{generate, NoiseSpec, ProblemParams, RegressorSet, ScalarLaw};
use selreg::oracle::matched_error;
use selreg::recovery::{recover, PracticalParams, RecoverConfig};
use selreg::refine::{refine, AmOptions};

fn main() -> selreg::Result<()> {
    let n = 6;
    let k = 2;
    let ws = RegressorSet::orthogonal(n, k, 1.0, 2.0)?;
    // Shared scalar noise: z = max_j x'w_j + xi.
    let noise = NoiseSpec::SharedScalar { law: ScalarLaw::Gaussian { sigma: 0.3 } };
    let batch = generate(&ws, &noise, 500_000, 2)?;

    let problem = ProblemParams::new(n, k, 1.0, 2.0, 0.3, 0.1)?;
    let config = RecoverConfig::practical(PracticalParams {
        t: 0.5,
        gamma: 0.26,
        delta: 0.08,
        net_resolution: 0.06,
        epsilon: 0.3,
    });
    let (report, _, _) = recover(&batch.observed(), &problem, &config)?;
    let coarse = matched_error(&report.estimate_arrays(), &ws)?;
    println!("coarse matched error: {:.4}", coarse.max_error);

    let outcome = refine(&batch, report.estimate_arrays(), &AmOptions::default())?;
    println!(
        "refined in {} iterations (converged: {}, monotone objective: {})",
        outcome.state.iteration, outcome.converged, outcome.monotone
    );
    for row in &outcome.trace {
        println!(
            "  iter {}: rms {:.5}, assignment change {:.5}",
            row.iteration, row.residual_rms, row.assignment_change_fraction
        );
    }
    let fine = matched_error(&outcome.state.estimates, &ws)?;
    println!("refined matched error: {:.5}", fine.max_error);
    Ok(())
}
