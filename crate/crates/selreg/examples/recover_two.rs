//! End-to-end recovery of two orthogonal regressors from half a million
//! max-selected observations, using calibrated practical-mode parameters.
//!
//! ```bash
//! cargo run --release --example recover_two
//! ```

use selreg::model::{generate, NoiseSpec, ProblemParams, RegressorSet};
use selreg::oracle::matched_error;
use selreg::recovery::{recover, PracticalParams, RecoverConfig};

fn main() -> selreg::Result<()> {
    let n = 6;
    let k = 2;
    let ws = RegressorSet::orthogonal(n, k, 1.0, 2.0)?;
    let noise = NoiseSpec::gaussian(k, 0.3);
    let batch = generate(&ws, &noise, 500_000, 1)?;

    let problem = ProblemParams::new(n, k, 1.0, 2.0, 0.3, 0.1)?;
    let config = RecoverConfig::practical(PracticalParams {
        t: 0.5,
        gamma: 0.26,
        delta: 0.08,
        net_resolution: 0.06,
        epsilon: 0.3,
    });

    let (report, _net, _stats) = recover(&batch.observed(), &problem, &config)?;
    println!("net size:              {}", report.net_size);
    println!("survivors after filter: {}", report.survivors_after_filter);
    println!("rejected by mean test:  {}", report.rejected_by_mean);
    println!("undersampled:           {}", report.undersampled);
    for (i, log) in report.iterations.iter().enumerate() {
        println!(
            "round {i}: picked candidate {} (m2 = {:.4}), ball removed {}, pruned {}",
            log.selected,
            log.m2,
            log.ball_deleted.len(),
            log.projection_deleted.len()
        );
    }

    let matched = matched_error(&report.estimate_arrays(), &ws)?;
    println!("matched max error: {:.4} (permutation {:?})", matched.max_error, matched.permutation);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
