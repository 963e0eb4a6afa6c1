//! Lattice covering net of the annulus `{p in V : delta <= ||p|| <= B}`
//! inside an estimated subspace.
//!
//! An axis-aligned lattice of spacing `resolution/sqrt(k)` in subspace
//! coordinates has covering radius `resolution/2`; keeping every lattice
//! point within one cell diagonal of the annulus and radially projecting
//! stragglers onto `[delta, B]` preserves covering radius at most
//! `resolution` while guaranteeing all points have norms in `[delta, B]`.

use crate::spectral::SubspaceEstimate;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

/// A finite set of candidate vectors lying in the estimated subspace,
/// enumerated in canonical (lexicographic lattice index) order.
#[derive(Clone, Debug)]
pub struct CandidateNet {
    /// N x n: candidates in ambient coordinates.
    points: Array2<f64>,
    /// N x k: the same candidates in subspace coordinates.
    coords: Array2<f64>,
    /// n x k orthonormal basis the coordinates refer to.
    basis: Array2<f64>,
    pub resolution: f64,
}

impl CandidateNet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn subspace_dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn coords(&self, i: usize) -> ArrayView1<'_, f64> {
        self.coords.row(i)
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    /// Net with explicitly given subspace coordinates (one row per
    /// candidate). Lets harnesses and tests drive the downstream stages with
    /// hand-picked candidates.
    pub fn from_parts(coords: Array2<f64>, subspace: &SubspaceEstimate) -> Self {
        let points = coords.dot(&subspace.basis.t());
        CandidateNet {
            points,
            coords,
            basis: subspace.basis.clone(),
            resolution: f64::NAN,
        }
    }

    /// Writes candidates as CSV, one ambient-coordinates row per point.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        for i in 0..self.len() {
            let row: Vec<String> = self.point(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Volume-based upper estimate of the lattice point count, available without
/// materializing anything.
pub fn predict_net_size(delta: f64, bound_b: f64, resolution: f64, k: usize) -> f64 {
    let s = resolution / (k as f64).sqrt();
    let slack = resolution + 0.5 * resolution; // cell diagonal + half-diagonal margin
    let r_hi = bound_b + slack;
    let r_lo = (delta - slack).max(0.0);
    let kf = k as f64;
    let unit_ball = std::f64::consts::PI.powf(kf / 2.0) / libm::tgamma(kf / 2.0 + 1.0);
    unit_ball * (r_hi.powf(kf) - r_lo.powf(kf)) / s.powf(kf)
}

/// Builds the resolution-`r` covering net of the annulus `B_V(delta, B)`.
///
/// Refuses (with the size estimate) when the predicted cardinality exceeds
/// `cap`; callers should then coarsen the resolution or shrink k.
pub fn build_net(
    subspace: &SubspaceEstimate,
    delta: f64,
    bound_b: f64,
    resolution: f64,
    cap: usize,
) -> Result<CandidateNet> {
    if !(resolution > 0.0 && resolution < delta) {
        return Err(Error::structural(format!(
            "need 0 < resolution < delta, got resolution={resolution}, delta={delta}"
        )));
    }
    if delta > bound_b {
        return Err(Error::structural("need delta <= B"));
    }
    let predicted = predict_net_size(delta, bound_b, resolution, subspace.basis.ncols());
    if predicted > cap as f64 {
        return Err(Error::NetTooLarge { predicted, cap });
    }

    let k = subspace.basis.ncols();
    let n = subspace.basis.nrows();
    let spacing = resolution / (k as f64).sqrt();
    let slack = resolution; // one lattice cell diagonal
    let hi = bound_b + slack;
    let lo = delta - slack; // positive because resolution < delta
    let max_index = (hi / spacing).ceil() as i64;

    // Enumerate lattice points slab-by-slab over the leading coordinate.
    // Each slab is enumerated sequentially in lexicographic order and slabs
    // are concatenated in order, so the output is canonical regardless of
    // how slabs were scheduled.
    let slabs: Vec<Vec<Vec<f64>>> = (-max_index..=max_index)
        .into_par_iter()
        .map(|i0| {
            let mut out = Vec::new();
            let mut point = vec![0.0f64; k];
            point[0] = i0 as f64 * spacing;
            let head_sq = point[0] * point[0];
            if head_sq <= hi * hi {
                enumerate_rest(&mut point, 1, head_sq, spacing, lo, hi, max_index, &mut out);
            }
            out
        })
        .collect();

    let mut seen = std::collections::HashSet::<Vec<u64>>::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for slab in slabs {
        for mut p in slab {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Radial projection onto [delta, B].
            if norm < delta {
                let f = delta / norm;
                for v in p.iter_mut() {
                    *v *= f;
                }
            } else if norm > bound_b {
                let f = bound_b / norm;
                for v in p.iter_mut() {
                    *v *= f;
                }
            }
            let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                kept.push(p);
            }
            if kept.len() > cap {
                return Err(Error::NetTooLarge { predicted: kept.len() as f64, cap });
            }
        }
    }

    let count = kept.len();
    let mut coords = Array2::<f64>::zeros((count, k));
    for (i, p) in kept.iter().enumerate() {
        for (j, &v) in p.iter().enumerate() {
            coords[[i, j]] = v;
        }
    }
    let points = coords.dot(&subspace.basis.t());
    debug_assert_eq!(points.ncols(), n);
    Ok(CandidateNet {
        points,
        coords,
        basis: subspace.basis.clone(),
        resolution,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rest(
    point: &mut Vec<f64>,
    dim: usize,
    norm_sq: f64,
    spacing: f64,
    lo: f64,
    hi: f64,
    max_index: i64,
    out: &mut Vec<Vec<f64>>,
) {
    if dim == point.len() {
        if norm_sq >= lo * lo && norm_sq <= hi * hi && norm_sq > 0.0 {
            out.push(point.clone());
        }
        return;
    }
    for i in -max_index..=max_index {
        let v = i as f64 * spacing;
        let ns = norm_sq + v * v;
        if ns > hi * hi {
            continue;
        }
        point[dim] = v;
        enumerate_rest(point, dim + 1, ns, spacing, lo, hi, max_index, out);
    }
    point[dim] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn axis_subspace(n: usize, k: usize) -> SubspaceEstimate {
        let mut basis = Array2::zeros((n, k));
        for j in 0..k {
            basis[[j, j]] = 1.0;
        }
        SubspaceEstimate::from_basis(basis).unwrap()
    }

    #[test]
    fn one_dimensional_annulus_points() {
        // delta=1, B=2, resolution 0.5 in span(e1): lattice spacing 0.5,
        // boundary rounding collapses to exactly {±1.0, ±1.5, ±2.0}.
        let sub = axis_subspace(3, 1);
        let net = build_net(&sub, 1.0, 2.0, 0.5, 1_000_000).unwrap();
        let mut xs: Vec<f64> = (0..net.len()).map(|i| net.point(i)[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![-2.0, -1.5, -1.0, 1.0, 1.5, 2.0]);
        // Points live in the subspace: other ambient coordinates are zero.
        for i in 0..net.len() {
            assert_eq!(net.point(i)[1], 0.0);
            assert_eq!(net.point(i)[2], 0.0);
        }
    }

    #[test]
    fn degenerate_annulus_is_the_sphere() {
        let sub = axis_subspace(2, 1);
        let net = build_net(&sub, 1.0, 1.0, 0.5, 1_000_000).unwrap();
        let mut xs: Vec<f64> = (0..net.len()).map(|i| net.point(i)[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![-1.0, 1.0]);
    }

    #[test]
    fn covering_radius_holds_on_random_probes() {
        let sub = axis_subspace(4, 2);
        let r = 0.2;
        let (delta, b) = (1.0, 2.0);
        let net = build_net(&sub, delta, b, r, 1_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            // Uniform probe in the annulus: uniform direction, radius with
            // density proportional to rho (k = 2).
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let u = rng.gen::<f64>();
            let rho = (delta * delta + u * (b * b - delta * delta)).sqrt();
            let probe = [rho * theta.cos(), rho * theta.sin()];
            let mut best = f64::INFINITY;
            for i in 0..net.len() {
                let c = net.coords(i);
                let d = (c[0] - probe[0]).powi(2) + (c[1] - probe[1]).powi(2);
                best = best.min(d);
            }
            assert!(
                best.sqrt() <= r + 1e-12,
                "probe {probe:?} uncovered: nearest at {}",
                best.sqrt()
            );
        }
    }

    #[test]
    fn norms_clipped_to_annulus_and_nonzero() {
        let sub = axis_subspace(5, 3);
        let net = build_net(&sub, 1.0, 2.0, 0.6, 10_000_000).unwrap();
        for i in 0..net.len() {
            let norm = net.coords(i).dot(&net.coords(i)).sqrt();
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&norm), "norm {norm}");
        }
    }

    #[test]
    fn cardinality_growth_bound() {
        for k in 1..=3usize {
            let sub = axis_subspace(4, k);
            let r = 0.3;
            let b = 2.0;
            let net = build_net(&sub, 1.0, b, r, 10_000_000).unwrap();
            let bound = (5.0 * b * (k as f64).sqrt() / r).powi(k as i32);
            assert!(
                (net.len() as f64) <= bound,
                "k={k}: {} points exceeds bound {bound}",
                net.len()
            );
        }
    }

    #[test]
    fn oversize_net_is_refused_with_estimate() {
        let sub = axis_subspace(6, 3);
        match build_net(&sub, 1.0, 2.0, 0.001, 10_000_000) {
            Err(Error::NetTooLarge { predicted, cap }) => {
                assert!(predicted > cap as f64);
            }
            other => panic!("expected refusal, got {:?}", other.map(|n| n.len())),
        }
    }

    #[test]
    fn prediction_bounds_actual_count() {
        let sub = axis_subspace(4, 2);
        for r in [0.15, 0.3, 0.5] {
            let net = build_net(&sub, 1.0, 2.0, r, 10_000_000).unwrap();
            let predicted = predict_net_size(1.0, 2.0, r, 2);
            assert!(
                (net.len() as f64) <= predicted,
                "r={r}: {} points, predicted {predicted}",
                net.len()
            );
        }
    }
}
