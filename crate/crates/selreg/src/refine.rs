//! Alternating minimization for shared-noise (max-linear) batches: assign
//! each sample to the regressor with the largest linear response, refit each
//! cluster by least squares, repeat. Warm-started from the recovery output,
//! it polishes estimates down to the statistical floor.

use crate::linalg::cholesky_solve;
use crate::model::{ObservedBatch, SampleBatch};
use crate::rng::BLOCK;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// State after one assignment-and-refit round.
#[derive(Clone, Debug)]
pub struct AmState {
    pub estimates: Vec<Array1<f64>>,
    pub iteration: usize,
    /// Fraction of samples whose assigned index changed in the last step;
    /// 1.0 before any step.
    pub last_assignment_change_fraction: f64,
    /// Root mean square of `z - max_j x' w_j` under the current estimates.
    pub residual_rms: f64,
    pub assignment: Vec<u32>,
    pub cluster_sizes: Vec<usize>,
    /// Clusters too small to refit this round (kept their previous
    /// estimate).
    pub skipped_clusters: Vec<usize>,
    /// Clusters whose normal equations needed a ridge fallback.
    pub ridge_clusters: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmOptions {
    pub max_iterations: usize,
    /// Stop when the assignment change fraction falls below this.
    pub tol: f64,
    /// Minimum cluster size eligible for a refit; smaller clusters keep
    /// their previous estimate. `None` means `n + 1`.
    pub min_cluster: Option<usize>,
    /// Ridge added to singular normal equations.
    pub ridge: f64,
    /// Allow batches whose noise is not a shared scalar.
    pub force: bool,
}

impl Default for AmOptions {
    fn default() -> Self {
        AmOptions { max_iterations: 50, tol: 1e-4, min_cluster: None, ridge: 1e-8, force: false }
    }
}

/// Per-iteration trace row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmTraceRow {
    pub iteration: usize,
    pub residual_rms: f64,
    pub assignment_change_fraction: f64,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub state: AmState,
    pub trace: Vec<AmTraceRow>,
    pub converged: bool,
    /// False if the fitted objective ever rose by more than 1e-9 between
    /// steps.
    pub monotone: bool,
}

fn assign_and_residual(batch: &ObservedBatch<'_>, estimates: &[Array1<f64>]) -> (Vec<u32>, f64) {
    let m = batch.m();
    let mut assignment = vec![0u32; m];
    let sq_sum: f64 = assignment
        .par_chunks_mut(BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let start = b * BLOCK;
            let mut local = 0.0f64;
            for (r, slot) in chunk.iter_mut().enumerate() {
                let x = batch.xs.row(start + r);
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for (j, w) in estimates.iter().enumerate() {
                    let d = x.dot(w);
                    if d > best {
                        best = d;
                        arg = j;
                    }
                }
                *slot = arg as u32;
                let resid = batch.zs[start + r] - best;
                local += resid * resid;
            }
            local
        })
        .sum();
    (assignment, (sq_sum / m as f64).sqrt())
}

/// One assignment-then-refit round.
///
/// Each sample goes to `argmax_j x' w_j` (ties to the lowest index); each
/// cluster of at least `min_cluster` samples is refit by ordinary least
/// squares on its members, with a ridge retry when the normal equations are
/// singular.
pub fn am_step(batch: &ObservedBatch<'_>, state: &AmState, options: &AmOptions) -> Result<AmState> {
    let m = batch.m();
    let n = batch.n();
    let k = state.estimates.len();
    if m == 0 {
        return Err(Error::structural("empty batch"));
    }
    let min_cluster = options.min_cluster.unwrap_or(n + 1);

    let (assignment, _) = assign_and_residual(batch, &state.estimates);

    // Per-cluster normal equations, accumulated per block and reduced in
    // block order.
    type Partial = (Vec<Array2<f64>>, Vec<Array1<f64>>, Vec<usize>);
    let partials: Vec<Partial> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(m);
            let mut xtx = vec![Array2::<f64>::zeros((n, n)); k];
            let mut xtz = vec![Array1::<f64>::zeros(n); k];
            let mut counts = vec![0usize; k];
            for l in start..end {
                let j = assignment[l] as usize;
                let x = batch.xs.row(l);
                let z = batch.zs[l];
                counts[j] += 1;
                let acc = &mut xtx[j];
                for a in 0..n {
                    let xa = x[a];
                    for c in a..n {
                        acc[[a, c]] += xa * x[c];
                    }
                    xtz[j][a] += xa * z;
                }
            }
            (xtx, xtz, counts)
        })
        .collect();

    let mut xtx = vec![Array2::<f64>::zeros((n, n)); k];
    let mut xtz = vec![Array1::<f64>::zeros(n); k];
    let mut cluster_sizes = vec![0usize; k];
    for (pxtx, pxtz, pc) in partials {
        for j in 0..k {
            xtx[j] += &pxtx[j];
            xtz[j] += &pxtz[j];
            cluster_sizes[j] += pc[j];
        }
    }
    for acc in xtx.iter_mut() {
        for a in 0..n {
            for c in 0..a {
                acc[[a, c]] = acc[[c, a]];
            }
        }
    }

    let mut estimates = Vec::with_capacity(k);
    let mut skipped_clusters = Vec::new();
    let mut ridge_clusters = Vec::new();
    for j in 0..k {
        if cluster_sizes[j] < min_cluster {
            skipped_clusters.push(j);
            estimates.push(state.estimates[j].clone());
            continue;
        }
        match cholesky_solve(&xtx[j], &xtz[j]) {
            Ok(w) => estimates.push(w),
            Err(_) => {
                let mut ridged = xtx[j].clone();
                for a in 0..n {
                    ridged[[a, a]] += options.ridge;
                }
                let w = cholesky_solve(&ridged, &xtz[j])?;
                ridge_clusters.push(j);
                estimates.push(w);
            }
        }
    }

    let changed = assignment
        .iter()
        .zip(state.assignment.iter())
        .filter(|(a, b)| a != b)
        .count();
    let change_fraction = if state.assignment.len() == m {
        changed as f64 / m as f64
    } else {
        1.0
    };

    let (_, residual_rms) = assign_and_residual(batch, &estimates);
    Ok(AmState {
        estimates,
        iteration: state.iteration + 1,
        last_assignment_change_fraction: change_fraction,
        residual_rms,
        assignment,
        cluster_sizes,
        skipped_clusters,
        ridge_clusters,
    })
}

/// Initial state for a warm start: assignments and residual computed, no
/// step taken yet.
pub fn initial_state(batch: &ObservedBatch<'_>, warm_start: Vec<Array1<f64>>) -> Result<AmState> {
    if warm_start.is_empty() {
        return Err(Error::structural("warm start needs at least one estimate"));
    }
    for w in &warm_start {
        if w.len() != batch.n() {
            return Err(Error::structural("warm start dimension mismatch"));
        }
    }
    let (assignment, residual_rms) = assign_and_residual(batch, &warm_start);
    let k = warm_start.len();
    let mut cluster_sizes = vec![0usize; k];
    for &a in &assignment {
        cluster_sizes[a as usize] += 1;
    }
    Ok(AmState {
        estimates: warm_start,
        iteration: 0,
        last_assignment_change_fraction: 1.0,
        residual_rms,
        assignment,
        cluster_sizes,
        skipped_clusters: Vec::new(),
        ridge_clusters: Vec::new(),
    })
}

/// Runs alternating minimization from a warm start until the assignment
/// stabilizes or the iteration budget runs out. Never throws on
/// non-convergence: the best state comes back with `converged = false`.
///
/// Refuses batches whose noise is not a single shared scalar unless
/// `options.force` is set: assignment-based refitting assumes the maximizing
/// index is a deterministic function of x.
pub fn refine(
    batch: &SampleBatch,
    warm_start: Vec<Array1<f64>>,
    options: &AmOptions,
) -> Result<RefineOutcome> {
    if !options.force && !batch.noise_kind.starts_with("shared_") && !batch.noise_kind.is_empty() {
        // Zero independent noise is shared noise in disguise; everything
        // else needs the flag.
        return Err(Error::NotSharedNoise { kind: batch.noise_kind.clone() });
    }
    let observed = batch.observed();
    let mut state = initial_state(&observed, warm_start)?;
    let mut trace = vec![AmTraceRow {
        iteration: 0,
        residual_rms: state.residual_rms,
        assignment_change_fraction: f64::NAN,
        cluster_sizes: state.cluster_sizes.clone(),
    }];
    let mut converged = false;
    let mut monotone = true;
    for _ in 0..options.max_iterations {
        let prev_rms = state.residual_rms;
        let prev_estimates = state.estimates.clone();
        state = am_step(&observed, &state, options)?;
        trace.push(AmTraceRow {
            iteration: state.iteration,
            residual_rms: state.residual_rms,
            assignment_change_fraction: state.last_assignment_change_fraction,
            cluster_sizes: state.cluster_sizes.clone(),
        });
        if state.residual_rms > prev_rms + 1e-9 {
            monotone = false;
        }
        // The first step's assignment necessarily matches the warm start's,
        // so the change fraction only signals a fixed point from the second
        // step on. A refit that moves nothing is a fixed point immediately.
        let movement = state
            .estimates
            .iter()
            .zip(prev_estimates.iter())
            .map(|(a, b)| (a - b).mapv(|v| v * v).sum().sqrt())
            .fold(0.0f64, f64::max);
        if movement <= 1e-12 {
            converged = true;
            break;
        }
        if state.iteration >= 2 && state.last_assignment_change_fraction < options.tol {
            converged = true;
            break;
        }
    }
    Ok(RefineOutcome { state, trace, converged, monotone })
}

/// Writes the per-iteration trace CSV.
pub fn write_trace_csv(trace: &[AmTraceRow], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "iteration,residual_rms,assignment_change_fraction,cluster_sizes")?;
    for row in trace {
        let sizes: Vec<String> = row.cluster_sizes.iter().map(|s| s.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{}",
            row.iteration,
            row.residual_rms,
            row.assignment_change_fraction,
            sizes.join(";")
        )?;
    }
    Ok(())
}
