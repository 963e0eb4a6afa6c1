//! Thin command-line front end; all logic lives in the library.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use selreg::harness::{
    k_tight_experiment, param_report, run_experiment, write_k_tight_csv, ExperimentConfig,
    RegressorGen, SCHEMA_VERSION,
};
use selreg::model::{generate, NoiseSpec, ProblemParams, SampleBatch, ScalarLaw};
use selreg::moments::write_stats_csv;
use selreg::recovery::{recover, Constants, Mode, PracticalParams, RecoverConfig};
use selreg::refine::{refine, write_trace_csv, AmOptions};
use std::path::PathBuf;

/// Latent linear models under max-selection: data generation, recovery, and
/// refinement.
///
/// Thread count follows RAYON_NUM_THREADS; results are bit-identical across
/// thread counts for fixed seeds.
#[derive(Parser)]
#[command(name = "selreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    /// Number of regressors (an upper bound suffices).
    #[arg(long)]
    k: usize,
    /// Uncoveredness margin.
    #[arg(long)]
    delta: f64,
    /// Norm / subgaussian bound.
    #[arg(long, default_value_t = 2.0)]
    bound_b: f64,
    /// Target accuracy.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    /// Failure probability.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
}

impl ProblemArgs {
    fn build(&self) -> Result<ProblemParams> {
        Ok(ProblemParams::new(
            self.n,
            self.k,
            self.delta,
            self.bound_b,
            self.epsilon,
            self.lambda,
        )?)
    }
}

fn parse_noise(spec: &str, k: usize) -> Result<NoiseSpec> {
    if spec == "none" {
        return Ok(NoiseSpec::zero(k));
    }
    let (kind, value) = spec
        .split_once(':')
        .with_context(|| format!("noise spec {spec:?} should look like kind:value"))?;
    let v: f64 = value.parse().with_context(|| format!("bad noise parameter {value:?}"))?;
    Ok(match kind {
        "gaussian" => NoiseSpec::gaussian(k, v),
        "uniform" => NoiseSpec::uniform(k, v),
        "rademacher" => NoiseSpec::IndependentScaledRademacher { scales: vec![v; k] },
        "shared-gaussian" => NoiseSpec::SharedScalar { law: ScalarLaw::Gaussian { sigma: v } },
        "shared-uniform" => {
            NoiseSpec::SharedScalar { law: ScalarLaw::Uniform { half_width: v } }
        }
        "shared-rademacher" => {
            NoiseSpec::SharedScalar { law: ScalarLaw::ScaledRademacher { scale: v } }
        }
        "shared-constant" => NoiseSpec::SharedScalar { law: ScalarLaw::Constant { value: v } },
        other => bail!("unknown noise kind {other:?}"),
    })
}

fn parse_regressors(spec: &str) -> Result<RegressorGen> {
    Ok(match spec {
        "orthogonal" => RegressorGen::Orthogonal,
        "ktight" => RegressorGen::KTightConstruction,
        "random" => RegressorGen::RandomValid,
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading regressor file {path}"))?;
            let vectors: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            RegressorGen::Explicit { vectors }
        }
    })
}

fn parse_constants(values: &Option<Vec<f64>>) -> Result<Constants> {
    match values {
        None => Ok(Constants::default()),
        Some(v) if v.len() == 4 => Ok(Constants { c_big: v[0], c1: v[1], c2: v[2], c3: v[3] }),
        Some(v) => bail!("--constants wants 4 values C,c1,c2,c3, got {}", v.len()),
    }
}

#[derive(Args, Clone)]
struct ModeArgs {
    /// Parameter mode.
    #[arg(long, value_parser = ["theory", "practical"], default_value = "theory")]
    mode: String,
    /// Practical-mode threshold scale t.
    #[arg(long)]
    t: Option<f64>,
    /// Practical-mode moment tolerance gamma.
    #[arg(long)]
    gamma: Option<f64>,
    /// Practical-mode event parameter delta.
    #[arg(long)]
    event_delta: Option<f64>,
    /// Practical-mode net resolution.
    #[arg(long)]
    resolution: Option<f64>,
    /// Theory-mode constants C,c1,c2,c3.
    #[arg(long, value_delimiter = ',')]
    constants: Option<Vec<f64>>,
    /// Minimum in-event sample count per candidate.
    #[arg(long, default_value_t = 50)]
    count_floor: usize,
    /// Net cardinality cap.
    #[arg(long, default_value_t = 10_000_000)]
    net_cap: usize,
    /// Selection-loop iteration cap (default 4k).
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl ModeArgs {
    fn recover_config(&self, epsilon: f64) -> Result<RecoverConfig> {
        let mode = if self.mode == "practical" { Mode::Practical } else { Mode::Theory };
        let practical = if mode == Mode::Practical {
            let missing = "practical mode needs --t, --gamma, --event-delta, --resolution";
            Some(PracticalParams {
                t: self.t.context(missing)?,
                gamma: self.gamma.context(missing)?,
                delta: self.event_delta.context(missing)?,
                net_resolution: self.resolution.context(missing)?,
                epsilon,
            })
        } else {
            None
        };
        Ok(RecoverConfig {
            mode,
            constants: parse_constants(&self.constants)?,
            practical,
            count_floor: self.count_floor,
            net_cap: self.net_cap,
            max_iterations: self.max_iterations,
            truncation_threshold: None,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sample batch and write it as CSV.
    Generate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Noise: none | gaussian:SIGMA | uniform:HALF_WIDTH |
        /// rademacher:SCALE | shared-gaussian:SIGMA | shared-uniform:H |
        /// shared-rademacher:S | shared-constant:V
        #[arg(long, default_value = "none")]
        noise: String,
        /// Ground truth: orthogonal | ktight | random | FILE.json
        #[arg(long, default_value = "orthogonal")]
        regressors: String,
        /// Sample count.
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Hidden-channel sidecar path.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Run the recovery pipeline on a batch file.
    Recover {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        mode: ModeArgs,
        /// Batch CSV produced by `generate` (not needed with --net-dry-run).
        #[arg(long, required_unless_present = "net_dry_run")]
        batch: Option<PathBuf>,
        /// Report JSON output path.
        #[arg(long, required_unless_present = "net_dry_run")]
        out: Option<PathBuf>,
        /// Per-candidate statistics CSV.
        #[arg(long)]
        stats_dump: Option<PathBuf>,
        /// Subspace basis CSV (n rows, k columns).
        #[arg(long)]
        subspace_csv: Option<PathBuf>,
        /// Print the predicted net size and exit without materializing it.
        #[arg(long)]
        net_dry_run: bool,
    },
    /// Refine estimates on a shared-noise batch by alternating minimization.
    Refine {
        /// Batch CSV produced by `generate`.
        #[arg(long)]
        batch: PathBuf,
        /// Recovery report JSON holding the warm start.
        #[arg(long)]
        warm_start: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Allow non-shared-noise batches.
        #[arg(long)]
        force: bool,
        /// Refined estimates JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a configuration-driven experiment (generate, recover, refine,
    /// score) over all seeds.
    Experiment {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Observation-frequency decay of the hard construction as k grows.
    Ktight {
        #[arg(long, default_value_t = 2.0)]
        bound_b: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Ascending list of k values.
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
        k_list: Vec<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the theory-mode parameter derivation table.
    Params {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Constants C,c1,c2,c3.
        #[arg(long, value_delimiter = ',')]
        constants: Option<Vec<f64>>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { problem, noise, regressors, m, seed, out, sidecar } => {
            let p = problem.build()?;
            let noise = parse_noise(&noise, p.k)?;
            let cfg = ExperimentConfig {
                schema_version: SCHEMA_VERSION,
                problem: p.clone(),
                regressors: parse_regressors(&regressors)?,
                noise: noise.clone(),
                m,
                mode: Mode::Theory,
                practical_overrides: None,
                constants: None,
                seeds: vec![seed],
                refine: false,
                refine_force: false,
                output_dir: None,
                count_floor: None,
                net_cap: None,
                write_stats_dump: false,
            };
            let ws = cfg.build_regressors(seed)?;
            let batch = generate(&ws, &noise, m, seed)?;
            batch.write_csv(&out)?;
            if let Some(side) = sidecar {
                batch.write_sidecar(&side)?;
            }
            println!(
                "wrote {} samples (n={}, k={}) to {}",
                batch.m(),
                batch.n(),
                p.k,
                out.display()
            );
        }
        Command::Recover { problem, mode, batch, out, stats_dump, subspace_csv, net_dry_run } => {
            let p = problem.build()?;
            let config = mode.recover_config(p.epsilon)?;
            if net_dry_run {
                let resolution = match &config.practical {
                    Some(pp) => pp.net_resolution,
                    None => selreg::recovery::derive_params(&p, &config.constants)?.net_resolution,
                };
                let predicted = selreg::recovery::net_size_estimate(&p, resolution);
                println!(
                    "predicted net size at resolution {resolution:.6}: {predicted:.3e} (cap {})",
                    config.net_cap
                );
                return Ok(());
            }
            let batch = batch.context("--batch is required")?;
            let out = out.context("--out is required")?;
            let data = SampleBatch::read_csv(&batch, None)?;
            let (report, net, stats) = recover(&data.observed(), &p, &config)?;
            if let Some(path) = stats_dump {
                write_stats_csv(&net, &stats, &path)?;
            }
            if let Some(path) = subspace_csv {
                use std::io::Write;
                let f = std::fs::File::create(&path)?;
                let mut w = std::io::BufWriter::new(f);
                let basis = net.basis();
                for i in 0..basis.nrows() {
                    let row: Vec<String> =
                        basis.row(i).iter().map(|v| format!("{v}")).collect();
                    writeln!(w, "{}", row.join(","))?;
                }
            }
            std::fs::write(&out, report.to_json()?)?;
            println!(
                "recovered {} estimates (net {}, survivors {}, undersampled {}) -> {}",
                report.estimates.len(),
                report.net_size,
                report.survivors_after_filter,
                report.undersampled,
                out.display()
            );
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Refine { batch, warm_start, max_iterations, tol, force, out, trace } => {
            let data = SampleBatch::read_csv(&batch, None)?;
            let text = std::fs::read_to_string(&warm_start)?;
            let report: serde_json::Value = serde_json::from_str(&text)?;
            let estimates: Vec<Vec<f64>> = serde_json::from_value(
                report
                    .get("estimates")
                    .cloned()
                    .context("warm start JSON lacks an estimates field")?,
            )?;
            let warm: Vec<ndarray::Array1<f64>> =
                estimates.into_iter().map(ndarray::Array1::from_vec).collect();
            let opts = AmOptions { max_iterations, tol, force, ..Default::default() };
            let outcome = refine(&data, warm, &opts)?;
            if let Some(path) = trace {
                write_trace_csv(&outcome.trace, &path)?;
            }
            let refined: Vec<Vec<f64>> =
                outcome.state.estimates.iter().map(|e| e.to_vec()).collect();
            let json = serde_json::json!({
                "estimates": refined,
                "iterations": outcome.state.iteration,
                "converged": outcome.converged,
                "monotone": outcome.monotone,
                "residual_rms": outcome.state.residual_rms,
                "assignment_change_fraction": outcome.state.last_assignment_change_fraction,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&json)?)?;
            println!(
                "refined in {} iterations (converged: {}, rms {:.6}) -> {}",
                outcome.state.iteration,
                outcome.converged,
                outcome.state.residual_rms,
                out.display()
            );
        }
        Command::Experiment { config, out_dir } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(dir) = out_dir {
                cfg.output_dir = Some(dir);
            }
            let result = run_experiment(&cfg)?;
            for s in &result.per_seed {
                match (&s.error, s.refined_matched.as_ref().or(s.matched.as_ref())) {
                    (Some(e), _) => println!("seed {}: error: {e}", s.seed),
                    (None, Some(m)) => println!(
                        "seed {}: max_error {:.4} success {}",
                        s.seed, m.max_error, s.success
                    ),
                    (None, None) => println!("seed {}: wrong estimate count", s.seed),
                }
            }
            println!("success rate: {:.2}", result.success_rate);
            if result.per_seed.iter().any(|s| s.error.is_some()) {
                bail!("at least one seed hit a structural error");
            }
        }
        Command::Ktight { bound_b, delta, k_list, m, seed, out } => {
            let rows = k_tight_experiment(bound_b, delta, &k_list, m, seed)?;
            println!("k,frequency,standard_error");
            for r in &rows {
                println!("{},{},{}", r.k, r.frequency, r.standard_error);
            }
            if let Some(path) = out {
                write_k_tight_csv(&rows, &path)?;
            }
        }
        Command::Params { problem, constants } => {
            let p = problem.build()?;
            let c = parse_constants(&constants)?;
            print!("{}", param_report(&p, &c)?);
        }
    }
    Ok(())
}
