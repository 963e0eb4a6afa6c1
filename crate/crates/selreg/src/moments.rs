//! Localization events and conditional first/second moments.
//!
//! For a candidate direction v, samples are localized to
//! `t sqrt(log(k/delta)) <= x' v_bar <= 2 t sqrt(log(k/delta))` and the
//! debiased observation `y = z - v' x` is summarized by its mean and the mean
//! of its squared positive part. These two numbers, at threshold scales t and
//! 4t, carry all the accept/reject information the search needs.

use crate::gauss;
use crate::model::ObservedBatch;
use crate::net::CandidateNet;
use crate::rng::BLOCK;
use crate::{Error, Result};
use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The localization slab for one unit direction.
#[derive(Clone, Debug)]
pub struct LocalizationEvent {
    /// Unit vector; the slab constrains `x' direction`.
    pub direction: Array1<f64>,
    pub lower: f64,
    pub upper: f64,
    pub t: f64,
    pub delta: f64,
}

/// `(t sqrt(log(k/delta)), 2 t sqrt(log(k/delta)))`.
pub fn event_bounds(t: f64, k: usize, delta: f64) -> Result<(f64, f64)> {
    if t <= 0.0 {
        return Err(Error::structural("event threshold t must be positive"));
    }
    if delta <= 0.0 {
        return Err(Error::structural("event delta must be positive"));
    }
    let ratio = k as f64 / delta;
    if ratio <= 1.0 {
        return Err(Error::InvalidEvent { ratio });
    }
    let root = ratio.ln().sqrt();
    Ok((t * root, 2.0 * t * root))
}

impl LocalizationEvent {
    /// Event in the direction of `v` (which need not be normalized).
    pub fn for_vector(v: ArrayView1<'_, f64>, t: f64, k: usize, delta: f64) -> Result<Self> {
        let norm = v.dot(&v).sqrt();
        if norm <= 0.0 {
            return Err(Error::structural("cannot localize a zero vector"));
        }
        let (lower, upper) = event_bounds(t, k, delta)?;
        Ok(LocalizationEvent {
            direction: v.to_owned() / norm,
            lower,
            upper,
            t,
            delta,
        })
    }

    pub fn with_bounds(direction: Array1<f64>, lower: f64, upper: f64) -> Result<Self> {
        if lower >= upper {
            return Err(Error::structural("event needs lower < upper"));
        }
        let norm = direction.dot(&direction).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::structural(format!("event direction norm {norm} is not 1")));
        }
        Ok(LocalizationEvent { direction, lower, upper, t: f64::NAN, delta: f64::NAN })
    }
}

/// Exact probability of the slab under a standard normal projection:
/// `Phi_bar(lower) - Phi_bar(upper)`, evaluated through erfc.
pub fn event_probability_analytic(event: &LocalizationEvent) -> f64 {
    gauss::upper_tail(event.lower) - gauss::upper_tail(event.upper)
}

/// Empirical conditional statistics of `y = z - v' x` on a localization
/// event.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionalStats {
    /// Mean of y over in-event samples.
    pub m1: f64,
    /// Mean of y_+^2 over in-event samples.
    pub m2_plus: f64,
    /// Mean of y^2 over in-event samples. Diagnostic only; nothing in the
    /// accept/reject path consumes it.
    pub m2_raw: f64,
    /// Mean of y_+^4; lets callers attach a standard error to `m2_plus`.
    pub m4_plus: f64,
    pub count: usize,
    pub v: Vec<f64>,
}

impl ConditionalStats {
    /// Standard error of `m1`.
    pub fn m1_se(&self) -> f64 {
        ((self.m2_raw - self.m1 * self.m1).max(0.0) / self.count as f64).sqrt()
    }

    /// Standard error of `m2_plus`.
    pub fn m2_plus_se(&self) -> f64 {
        ((self.m4_plus - self.m2_plus * self.m2_plus).max(0.0) / self.count as f64).sqrt()
    }
}

/// Filters the batch to the event (closed interval on both sides) and
/// averages. An event that captures no samples is a first-class outcome: the
/// error carries the analytic probability and the batch size so callers can
/// tell statistical starvation from algorithmic failure.
pub fn conditional_stats(
    batch: &ObservedBatch<'_>,
    v: ArrayView1<'_, f64>,
    event: &LocalizationEvent,
) -> Result<ConditionalStats> {
    let n = batch.n();
    if v.len() != n || event.direction.len() != n {
        return Err(Error::structural("dimension mismatch between batch, v, and event"));
    }
    let norm = v.dot(&v).sqrt();
    if norm <= 0.0 {
        return Err(Error::structural("candidate vector must be nonzero"));
    }
    let dir_err = event
        .direction
        .iter()
        .zip(v.iter())
        .map(|(d, vi)| (d - vi / norm).abs())
        .fold(0.0f64, f64::max);
    if dir_err > 1e-8 {
        return Err(Error::structural(
            "event direction does not match the candidate vector",
        ));
    }

    let m = batch.m();
    // Membership test on the unnormalized projection: lower * ||v|| <= x'v.
    let lo = event.lower * norm;
    let hi = event.upper * norm;

    let partials: Vec<(usize, f64, f64, f64, f64)> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(m);
            let mut count = 0usize;
            let mut s1 = 0.0;
            let mut s2p = 0.0;
            let mut s2 = 0.0;
            let mut s4p = 0.0;
            for l in start..end {
                let row = batch.xs.row(l);
                let s = row.dot(&v);
                if s >= lo && s <= hi {
                    let y = batch.zs[l] - s;
                    count += 1;
                    s1 += y;
                    let yp2 = y.max(0.0) * y.max(0.0);
                    s2p += yp2;
                    s2 += y * y;
                    s4p += yp2 * yp2;
                }
            }
            (count, s1, s2p, s2, s4p)
        })
        .collect();

    let (count, s1, s2p, s2, s4p) = partials
        .into_iter()
        .fold((0usize, 0.0, 0.0, 0.0, 0.0), |acc, p| {
            (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2, acc.3 + p.3, acc.4 + p.4)
        });

    if count == 0 {
        return Err(Error::EmptyEvent {
            analytic_probability: event_probability_analytic(event),
            batch_size: m,
        });
    }
    let c = count as f64;
    Ok(ConditionalStats {
        m1: s1 / c,
        m2_plus: s2p / c,
        m2_raw: s2 / c,
        m4_plus: s4p / c,
        count,
        v: v.to_vec(),
    })
}

/// Per-candidate statistics over a whole net: M1 at t, M1 at 4t, and M2 at t.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CandidateStats {
    pub m1_t: f64,
    pub m1_4t: f64,
    pub m2_t: f64,
    pub count_t: usize,
    pub count_4t: usize,
    pub undersampled: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetStats {
    pub per_candidate: Vec<CandidateStats>,
    pub undersampled_count: usize,
    pub count_floor: usize,
}

/// Computes the statistic triple for every net candidate in one shared pass
/// over the batch.
///
/// The projections `x' v` for candidates inside the estimated subspace only
/// need the k subspace coordinates of x, so the batch is projected once
/// (`m x k`) and each candidate costs k fused multiplies per sample. Both
/// threshold events reuse the same projections. Candidates whose event counts
/// fall below `count_floor` are flagged, never silently dropped.
pub fn batch_conditional_stats(
    batch: &ObservedBatch<'_>,
    net: &CandidateNet,
    t: f64,
    compute_four_t: bool,
    delta: f64,
    k: usize,
    count_floor: usize,
) -> Result<NetStats> {
    if net.is_empty() {
        return Err(Error::structural("empty candidate net"));
    }
    if batch.n() != net.ambient_dim() {
        return Err(Error::structural("batch and net dimension mismatch"));
    }
    let (lo_t, hi_t) = event_bounds(t, k, delta)?;
    let (lo_4t, hi_4t) = event_bounds(4.0 * t, k, delta)?;

    // m x k projection of the covariates onto the subspace basis.
    let projected = batch.xs.dot(&net.basis());
    let zs = batch.zs;
    let m = batch.m();
    let subdim = net.subspace_dim();

    let per_candidate: Vec<CandidateStats> = (0..net.len())
        .into_par_iter()
        .map(|c| {
            let coords = net.coords(c);
            let norm = coords.dot(&coords).sqrt();
            let (a_t, b_t) = (lo_t * norm, hi_t * norm);
            let (a_4, b_4) = (lo_4t * norm, hi_4t * norm);
            let mut count_t = 0usize;
            let mut count_4t = 0usize;
            let mut s1_t = 0.0;
            let mut s1_4t = 0.0;
            let mut s2_t = 0.0;
            for l in 0..m {
                let p = projected.row(l);
                let mut s = 0.0;
                for j in 0..subdim {
                    s += p[j] * coords[j];
                }
                if s >= a_t && s <= b_t {
                    let y = zs[l] - s;
                    count_t += 1;
                    s1_t += y;
                    let yp = y.max(0.0);
                    s2_t += yp * yp;
                } else if compute_four_t && s >= a_4 && s <= b_4 {
                    count_4t += 1;
                    s1_4t += zs[l] - s;
                }
            }
            let m1_t = if count_t > 0 { s1_t / count_t as f64 } else { f64::NAN };
            let m2_t = if count_t > 0 { s2_t / count_t as f64 } else { f64::NAN };
            let m1_4t = if count_4t > 0 { s1_4t / count_4t as f64 } else { f64::NAN };
            let undersampled =
                count_t < count_floor || (compute_four_t && count_4t < count_floor);
            CandidateStats { m1_t, m1_4t, m2_t, count_t, count_4t, undersampled }
        })
        .collect();

    let undersampled_count = per_candidate.iter().filter(|s| s.undersampled).count();
    Ok(NetStats { per_candidate, undersampled_count, count_floor })
}

/// Writes the per-candidate statistics dump:
/// `candidate index, ||v||, m1_t, m1_4t, m2_t, count_t, count_4t`.
pub fn write_stats_csv(net: &CandidateNet, stats: &NetStats, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "candidate,norm,m1_t,m1_4t,m2_t,count_t,count_4t")?;
    for (i, s) in stats.per_candidate.iter().enumerate() {
        let coords = net.coords(i);
        let norm = coords.dot(&coords).sqrt();
        writeln!(
            w,
            "{i},{norm},{},{},{},{},{}",
            s.m1_t, s.m1_4t, s.m2_t, s.count_t, s.count_4t
        )?;
    }
    Ok(())
}
