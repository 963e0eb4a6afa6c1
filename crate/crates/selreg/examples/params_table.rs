//! Theory-mode parameter derivation: what the formulas demand, and why desk
//! scale runs use practical mode instead.
//!
//! ```bash
//! cargo run --release --example params_table
//! ```

use selreg::harness::param_report;
use selreg::model::ProblemParams;
use selreg::recovery::Constants;

fn main() -> selreg::Result<()> {
    // A mild instance: the derived table is already infeasible at desk
    // scale, which is exactly why practical mode exists.
    let p = ProblemParams::new(8, 2, 1.0, 2.0, 0.05, 0.1)?;
    println!("--- constants C=4, c1=c2=c3=1 (defaults) ---");
    print!("{}", param_report(&p, &Constants::default())?);

    println!();
    println!("--- unit constants ---");
    let unit = Constants { c_big: 1.0, c1: 1.0, c2: 1.0, c3: 1.0 };
    print!("{}", param_report(&p, &unit)?);

    println!();
    println!("--- B = delta = 1 (the friendliest geometry) ---");
    let p = ProblemParams::new(4, 2, 1.0, 1.0, 0.1, 0.1)?;
    print!("{}", param_report(&p, &unit)?);
    Ok(())
}
