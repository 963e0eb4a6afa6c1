//! The independent oracles: truncated Gaussian means, matched error,
//! subgaussian lower bounds, and the truncated-second-moment increase.
//!
//! ```bash
//! cargo run --release --example oracle_checks
//! ```

use ndarray::array;
use selreg::model::{RegressorSet, ScalarLaw, GAUSSIAN_PSI2, UNIFORM_UNIT_PSI2};
use selreg::oracle::{
    matched_error, sm_increase_oracle, subgaussian_positive_part_bounds, truncated_gaussian_mean,
};

fn main() -> selreg::Result<()> {
    println!("truncated standard normal mean on (2, 4): {:.6}", truncated_gaussian_mean(2.0, 4.0)?);
    println!("on (-1, 1):  {:+.6} (symmetry)", truncated_gaussian_mean(-1.0, 1.0)?);

    // Permutation-matched error: estimates in swapped order still match.
    let truth = RegressorSet::from_rows(&[vec![1.5, 0.0], vec![0.0, 1.5]], 1.0, 2.0)?;
    let estimates = vec![array![0.1, 1.4], array![1.6, 0.0]];
    let m = matched_error(&estimates, &truth)?;
    println!(
        "matched error {:.4} under permutation {:?} (per pair {:?})",
        m.max_error, m.permutation, m.per_pair_errors
    );

    // Positive-part lower bounds for centered subgaussian laws.
    let (e_lb, p_lb) = subgaussian_positive_part_bounds(1.0, GAUSSIAN_PSI2)?;
    println!("standard gaussian: E[X+] >= {e_lb:.4} (true 0.3989), Pr(X>=0) >= {p_lb:.4} (true 0.5)");
    let (e_lb, p_lb) = subgaussian_positive_part_bounds(1.0 / 3.0, UNIFORM_UNIT_PSI2)?;
    println!("uniform [-1,1]:     E[X+] >= {e_lb:.4} (true 0.25),  Pr(X>=0) >= {p_lb:.4} (true 0.5)");

    // Adding N(0, eps^2) inflates the truncated second moment.
    for law in [ScalarLaw::Gaussian { sigma: 1.0 }, ScalarLaw::Uniform { half_width: 1.0 }] {
        let out = sm_increase_oracle(&law, 0.05, 0.0)?;
        println!(
            "{law:?}: increase {:.6} (analytic bound {:.2e})",
            out.increase, out.lemma_bound
        );
    }
    Ok(())
}
