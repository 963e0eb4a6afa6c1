//! Configuration-driven experiment runner: generate, recover, optionally
//! refine, score against the ground truth, and persist everything needed to
//! reproduce the run from (config, seed).

use crate::model::{
    empirical_observation_probability, generate, validate_regressors, NoiseSpec, ProblemParams,
    RegressorSet,
};
use crate::moments::{event_bounds, write_stats_csv};
use crate::oracle::{matched_error, MatchedError};
use crate::recovery::{
    derive_params, net_size_estimate, recover, sample_guidance, Constants, Mode, PracticalParams,
    RecoverConfig, RecoveryReport,
};
use crate::refine::{refine, AmOptions, AmTraceRow};
use crate::rng::derive_seed;
use crate::{gauss, Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// How the ground-truth regressors are produced.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum RegressorGen {
    Explicit { vectors: Vec<Vec<f64>> },
    /// Axis-aligned orthogonal regressors with norm (delta + B)/2.
    Orthogonal,
    /// The hard-to-observe construction in R^k.
    KTightConstruction,
    /// Random orthonormal frame with norms in [delta, B], drawn from the
    /// experiment seed.
    RandomValid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemParams,
    pub regressors: RegressorGen,
    pub noise: NoiseSpec,
    pub m: usize,
    pub mode: Mode,
    pub practical_overrides: Option<PracticalParams>,
    #[serde(default)]
    pub constants: Option<Constants>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub refine_force: bool,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub count_floor: Option<usize>,
    #[serde(default)]
    pub net_cap: Option<usize>,
    #[serde(default)]
    pub write_stats_dump: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.problem.check()?;
        match self.mode {
            Mode::Practical if self.practical_overrides.is_none() => {
                return Err(Error::Config("practical mode requires practical_overrides".into()))
            }
            Mode::Theory if self.practical_overrides.is_some() => {
                return Err(Error::Config("theory mode forbids practical_overrides".into()))
            }
            _ => {}
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable identifier: SHA-256 of the canonical JSON, truncated.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    pub fn build_regressors(&self, seed: u64) -> Result<RegressorSet> {
        let p = &self.problem;
        match &self.regressors {
            RegressorGen::Explicit { vectors } => {
                RegressorSet::from_rows(vectors, p.delta, p.bound_b)
            }
            RegressorGen::Orthogonal => RegressorSet::orthogonal(p.n, p.k, p.delta, p.bound_b),
            RegressorGen::KTightConstruction => {
                if p.n != p.k {
                    return Err(Error::Config(
                        "the k-tight construction lives in R^k; set n = k".into(),
                    ));
                }
                RegressorSet::k_tight(p.k, p.delta, p.bound_b)
            }
            RegressorGen::RandomValid => {
                let mut rng =
                    rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 99, 0));
                RegressorSet::random_valid(p.n, p.k, p.delta, p.bound_b, &mut rng)
            }
        }
    }

    fn recover_config(&self) -> RecoverConfig {
        let mut rc = RecoverConfig {
            mode: self.mode.clone(),
            practical: self.practical_overrides.clone(),
            ..Default::default()
        };
        if let Some(c) = self.constants {
            rc.constants = c;
        }
        if let Some(f) = self.count_floor {
            rc.count_floor = f;
        }
        if let Some(c) = self.net_cap {
            rc.net_cap = c;
        }
        rc
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub generate_ms: u64,
    pub recover_ms: u64,
    pub refine_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: Option<RecoveryReport>,
    pub matched: Option<MatchedError>,
    pub refined_matched: Option<MatchedError>,
    pub refine_converged: Option<bool>,
    pub refine_monotone: Option<bool>,
    pub refine_trace: Option<Vec<AmTraceRow>>,
    pub success: bool,
    pub error: Option<String>,
    pub timing: StageTimings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub per_seed: Vec<SeedResult>,
    /// Fraction of seeds with matched max error at most epsilon (after
    /// refinement when enabled).
    pub success_rate: f64,
}

/// Target accuracy used for the success criterion.
fn target_epsilon(config: &ExperimentConfig) -> f64 {
    config
        .practical_overrides
        .as_ref()
        .map(|p| p.epsilon)
        .unwrap_or(config.problem.epsilon)
}

/// Runs the full pipeline for every seed. Seeds execute as independent
/// parallel jobs; one seed's failure is recorded and never aborts the rest.
/// With an output directory set, each seed writes its JSON report and the
/// run writes a CSV summary; files are written atomically (temp + rename).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let epsilon = target_epsilon(config);
    let config_hash = config.hash();
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }

    let per_seed: Vec<SeedResult> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed, epsilon, &config_hash))
        .collect();

    let successes = per_seed.iter().filter(|s| s.success).count();
    let result = ExperimentResult {
        config_hash: config_hash.clone(),
        per_seed,
        success_rate: successes as f64 / config.seeds.len() as f64,
    };

    if let Some(dir) = &config.output_dir {
        let summary = dir.join("summary.csv");
        write_atomic(&summary, &summary_csv(config, &result))?;
        let result_json = dir.join("result.json");
        write_atomic(&result_json, &serde_json::to_string_pretty(&result)?)?;
    }
    Ok(result)
}

fn run_seed(config: &ExperimentConfig, seed: u64, epsilon: f64, config_hash: &str) -> SeedResult {
    let mut timing = StageTimings::default();
    let outcome = (|| -> Result<SeedResult> {
        let ws = config.build_regressors(seed)?;
        let violations = validate_regressors(&ws);
        if !violations.is_empty() && !matches!(config.regressors, RegressorGen::KTightConstruction)
        {
            return Err(Error::Config(format!(
                "regressors violate the assumptions: {}",
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
            )));
        }

        let start = Instant::now();
        let batch = generate(&ws, &config.noise, config.m, seed)?;
        timing.generate_ms = start.elapsed().as_millis() as u64;

        let start = Instant::now();
        let (report, net, stats) =
            recover(&batch.observed(), &config.problem, &config.recover_config())?;
        timing.recover_ms = start.elapsed().as_millis() as u64;

        if config.write_stats_dump {
            if let Some(dir) = &config.output_dir {
                write_stats_csv(&net, &stats, &dir.join(format!("stats_seed{seed}.csv")))?;
            }
        }

        let matched = if report.estimates.len() == ws.k() {
            Some(matched_error(&report.estimate_arrays(), &ws)?)
        } else {
            None
        };

        let mut refined_matched = None;
        let mut refine_converged = None;
        let mut refine_monotone = None;
        let mut refine_trace = None;
        if config.refine && matched.is_some() {
            let start = Instant::now();
            let opts = AmOptions { force: config.refine_force, ..Default::default() };
            let out = refine(&batch, report.estimate_arrays(), &opts)?;
            timing.refine_ms = start.elapsed().as_millis() as u64;
            refined_matched = Some(matched_error(&out.state.estimates, &ws)?);
            refine_converged = Some(out.converged);
            refine_monotone = Some(out.monotone);
            refine_trace = Some(out.trace);
        }

        let final_err = refined_matched
            .as_ref()
            .or(matched.as_ref())
            .map(|m| m.max_error)
            .unwrap_or(f64::INFINITY);
        Ok(SeedResult {
            seed,
            report: Some(report),
            matched,
            refined_matched,
            refine_converged,
            refine_monotone,
            refine_trace,
            success: final_err <= epsilon,
            error: None,
            timing: timing.clone(),
        })
    })();

    let result = match outcome {
        Ok(r) => r,
        Err(e) => SeedResult {
            seed,
            report: None,
            matched: None,
            refined_matched: None,
            refine_converged: None,
            refine_monotone: None,
            refine_trace: None,
            success: false,
            error: Some(e.to_string()),
            timing,
        },
    };

    if let Some(dir) = &config.output_dir {
        let path = dir.join(format!("seed{seed}.json"));
        if let Ok(json) = serde_json::to_string_pretty(&result) {
            let _ = write_atomic(&path, &json);
        }
        let _ = config_hash;
    }
    result
}

fn summary_csv(config: &ExperimentConfig, result: &ExperimentResult) -> String {
    let mut out = String::from(
        "config_hash,seed,k,n,m,mode,max_error,success,generate_ms,recover_ms,refine_ms\n",
    );
    let mode = match config.mode {
        Mode::Theory => "theory",
        Mode::Practical => "practical",
    };
    for s in &result.per_seed {
        let err = s
            .refined_matched
            .as_ref()
            .or(s.matched.as_ref())
            .map(|m| format!("{}", m.max_error))
            .unwrap_or_else(|| "nan".into());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            result.config_hash,
            s.seed,
            config.problem.k,
            config.problem.n,
            config.m,
            mode,
            err,
            s.success,
            s.timing.generate_ms,
            s.timing.recover_ms,
            s.timing.refine_ms,
        ));
    }
    out
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Observation-probability decay experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KTightRow {
    pub k: usize,
    pub frequency: f64,
    pub standard_error: f64,
}

/// For each k in `k_list`, builds the hard construction (noiseless) and
/// measures how often index 0 attains the maximum, with its binomial
/// standard error.
pub fn k_tight_experiment(
    bound_b: f64,
    delta: f64,
    k_list: &[usize],
    m: usize,
    seed: u64,
) -> Result<Vec<KTightRow>> {
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::structural("k_list must be strictly ascending"));
    }
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let ws = RegressorSet::k_tight(k, delta, bound_b)?;
        let noise = NoiseSpec::zero(k);
        let f = empirical_observation_probability(&ws, &noise, m, seed, 0, false)?;
        let standard_error = (f * (1.0 - f) / m as f64).sqrt();
        rows.push(KTightRow { k, frequency: f, standard_error });
    }
    Ok(rows)
}

pub fn write_k_tight_csv(rows: &[KTightRow], path: &Path) -> Result<()> {
    let mut out = String::from("k,frequency,standard_error\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.k, r.frequency, r.standard_error));
    }
    write_atomic(path, &out)
}

// ---------------------------------------------------------------------------
// Parameter report
// ---------------------------------------------------------------------------

/// Human-readable derivation table for the theory-mode parameters, with
/// infeasibility flags on astronomically large magnitudes.
pub fn param_report(problem: &ProblemParams, constants: &Constants) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!(
        "problem: n={} k={} delta={} B={} epsilon={} lambda={}\n",
        problem.n, problem.k, problem.delta, problem.bound_b, problem.epsilon, problem.lambda
    ));
    for w in problem.warnings() {
        out.push_str(&format!("warning: {w}\n"));
    }
    match derive_params(problem, constants) {
        Err(Error::ParameterUnderflow { name, log10_value }) => {
            out.push_str(&format!(
                "{name} underflows f64: log10 magnitude {log10_value:.1} [INFEASIBLE] — use practical mode\n"
            ));
        }
        Err(e) => return Err(e),
        Ok(d) => {
            let (lo, hi) = event_bounds(d.t, problem.k, d.delta)?;
            out.push_str(&format!("t              = {:.6e}\n", d.t));
            out.push_str(&format!("gamma          = {:.6e}\n", d.gamma));
            out.push_str(&format!("delta_event    = {:.6e}\n", d.delta));
            out.push_str(&format!("net_resolution = {:.6e}\n", d.net_resolution));
            out.push_str(&format!("event slab     = [{lo:.4}, {hi:.4}]\n"));
            out.push_str(&format!(
                "Pr(A_t)        = {:.6e}{}\n",
                d.event_probability_t,
                flag_if(d.event_probability_t < 1e-12, " [INFEASIBLE: event essentially never occurs]")
            ));
            let net_est = net_size_estimate(problem, d.net_resolution);
            out.push_str(&format!(
                "|net| estimate = {:.3e}{}\n",
                net_est,
                flag_if(net_est > 1e7, " [INFEASIBLE: above default cap]")
            ));
            out.push_str(&format!(
                "m_est          = 10^{:.2}{}\n",
                d.log10_m_est,
                flag_if(d.log10_m_est > 9.0, " [INFEASIBLE]")
            ));
            out.push_str(&format!(
                "m_moments      = 10^{:.2}{}\n",
                d.log10_m_moments,
                flag_if(d.log10_m_moments > 9.0, " [INFEASIBLE]")
            ));
            out.push_str(&format!(
                "m_cov          = 10^{:.2}{}\n",
                d.log10_m_cov,
                flag_if(d.log10_m_cov > 9.0, " [INFEASIBLE]")
            ));
            out.push_str(&format!(
                "guidance: ~{:.3e} samples for 1000 in-event at the t slab (oversample 2x)\n",
                sample_guidance(1000, d.event_probability_t, 2.0)
            ));
        }
    }
    Ok(out)
}

fn flag_if(cond: bool, msg: &str) -> &str {
    if cond {
        msg
    } else {
        ""
    }
}

/// Analytic slab probability for arbitrary (t, k, delta), for report
/// self-consistency checks.
pub fn slab_probability(t: f64, k: usize, delta: f64) -> Result<f64> {
    let (lo, hi) = event_bounds(t, k, delta)?;
    Ok(gauss::upper_tail(lo) - gauss::upper_tail(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config(dir: Option<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            problem: ProblemParams::new(3, 1, 0.8, 2.0, 0.3, 0.1).unwrap(),
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
            seeds: vec![1, 2, 3],
            refine: false,
            refine_force: false,
            output_dir: dir,
            count_floor: Some(30),
            net_cap: None,
            write_stats_dump: false,
        }
    }

    #[test]
    fn smoke_experiment_succeeds_on_all_seeds() {
        let result = run_experiment(&smoke_config(None)).unwrap();
        assert_eq!(result.success_rate, 1.0, "result: {result:?}");
    }

    #[test]
    fn experiment_is_deterministic_apart_from_timing() {
        let a = run_experiment(&smoke_config(None)).unwrap();
        let b = run_experiment(&smoke_config(None)).unwrap();
        let mut ja = serde_json::to_value(&a).unwrap();
        let mut jb = serde_json::to_value(&b).unwrap();
        strip_timing(&mut ja);
        strip_timing(&mut jb);
        assert_eq!(ja, jb);
    }

    fn strip_timing(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("timing");
                for (_, val) in map.iter_mut() {
                    strip_timing(val);
                }
            }
            serde_json::Value::Array(items) => {
                for item in items.iter_mut() {
                    strip_timing(item);
                }
            }
            _ => {}
        }
    }

    #[test]
    fn config_validation_catches_mode_mismatch() {
        let mut cfg = smoke_config(None);
        cfg.mode = Mode::Theory;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.practical_overrides = None;
        cfg.mode = Mode::Practical;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = smoke_config(None);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn output_files_written() {
        let dir = std::env::temp_dir().join("selreg_harness_test");
        let _ = std::fs::remove_dir_all(&dir);
        let mut cfg = smoke_config(Some(dir.clone()));
        cfg.seeds = vec![5];
        run_experiment(&cfg).unwrap();
        assert!(dir.join("summary.csv").exists());
        assert!(dir.join("result.json").exists());
        assert!(dir.join("seed5.json").exists());
        let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
        assert!(summary.lines().count() == 2);
        assert!(summary.starts_with("config_hash,seed,k,n,m,mode,max_error,success"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn k_tight_rows_positive_and_decaying() {
        let rows = k_tight_experiment(2.0, 1.0, &[2, 4, 8], 200_000, 11).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.frequency > 0.0);
        }
        // At B = 2, delta = 1 the construction makes the coordinates
        // exchangeable, so the frequency is essentially 1/k.
        for r in &rows {
            let want = 1.0 / r.k as f64;
            assert!(
                (r.frequency - want).abs() < 4.0 * r.standard_error,
                "k={}: freq {} vs 1/k {}",
                r.k,
                r.frequency,
                want
            );
        }
        assert!(matches!(
            k_tight_experiment(2.0, 1.0, &[4, 4], 100, 1),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn param_report_self_consistent() {
        let p = ProblemParams::new(8, 2, 1.0, 1.0, 0.05, 0.1).unwrap();
        let c = Constants { c_big: 1.0, c1: 1.0, c2: 1.0, c3: 1.0 };
        let report = param_report(&p, &c).unwrap();
        let d = derive_params(&p, &c).unwrap();
        assert!(report.contains(&format!("{:.6e}", d.t)));
        assert!(report.contains(&format!("{:.6e}", d.gamma)));
        assert!(report.contains(&format!("{:.6e}", d.event_probability_t)));

        // Monotone direction: larger epsilon -> larger gamma -> larger delta.
        let p_hi = ProblemParams::new(8, 2, 1.0, 1.0, 0.1, 0.1).unwrap();
        let d_hi = derive_params(&p_hi, &c).unwrap();
        assert!(d_hi.gamma > d.gamma);
        assert!(d_hi.delta > d.delta);
    }

    #[test]
    fn underflowing_params_reported_not_fatal() {
        let p = ProblemParams::new(4, 2, 1.0, 2.0, 1e-60, 0.1).unwrap();
        let report = param_report(&p, &Constants::default()).unwrap();
        assert!(report.contains("INFEASIBLE"), "report: {report}");
        assert!(report.contains("practical mode"));
    }
}
