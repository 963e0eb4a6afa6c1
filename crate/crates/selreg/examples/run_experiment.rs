//! Drive the experiment harness from a config built in code: multiple seeds
//! in parallel, JSON + CSV artifacts on disk.
//!
//! ```bash
//! cargo run --release --example run_experiment
//! ```

use selreg::harness::{run_experiment, ExperimentConfig, RegressorGen, SCHEMA_VERSION};
use selreg::model::{NoiseSpec, ProblemParams};
use selreg::recovery::{Mode, PracticalParams};

fn main() -> selreg::Result<()> {
    let out_dir = std::env::temp_dir().join("selreg_experiment");
    let config = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        problem: ProblemParams::new(3, 1, 0.8, 2.0, 0.3, 0.1)?,
        regressors: RegressorGen::Explicit { vectors: vec![vec![1.0, 0.0, 0.0]] },
        noise: NoiseSpec::zero(1),
        m: 100_000,
        mode: Mode::Practical,
        practical_overrides: Some(PracticalParams {
            t: 0.5,
            gamma: 0.4,
            delta: 0.15,
            net_resolution: 0.1,
            epsilon: 0.3,
        }),
        constants: None,
        seeds: vec![1, 2, 3, 4, 5],
        refine: false,
        refine_force: false,
        output_dir: Some(out_dir.clone()),
        count_floor: Some(30),
        net_cap: None,
        write_stats_dump: false,
    };

    println!("config hash: {}", config.hash());
    let result = run_experiment(&config)?;
    for s in &result.per_seed {
        match (&s.error, &s.matched) {
            (Some(e), _) => println!("seed {}: error {e}", s.seed),
            (None, Some(m)) => println!(
                "seed {}: max_error {:.4} in {} + {} ms",
                s.seed, m.max_error, s.timing.generate_ms, s.timing.recover_ms
            ),
            _ => println!("seed {}: wrong estimate count", s.seed),
        }
    }
    println!("success rate: {}", result.success_rate);
    println!("artifacts in {}", out_dir.display());
    Ok(())
}
