//! Subspace estimation from the truncated weighted second-moment matrix
//! `(1/m) sum max(0,z)^2 x x' 1(max(0,z) <= threshold)`.
//!
//! On directions orthogonal to every regressor the population matrix is a
//! constant multiple of the identity, while regressor directions push the
//! quadratic form strictly above that level, so the span of the top k
//! eigenvectors approximately contains all regressors.

use crate::linalg::symmetric_eigen;
use crate::model::{ObservedBatch, RegressorSet};
use crate::rng::BLOCK;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Empirical truncated weighted second-moment matrix.
#[derive(Clone, Debug)]
pub struct WeightedMomentMatrix {
    pub matrix: Array2<f64>,
    pub truncation_threshold: f64,
    /// Samples contributing to the sum (everything the truncation kept).
    pub samples_used: usize,
    /// Samples zeroed because max(0, z) exceeded the threshold.
    pub samples_truncated: usize,
}

/// Default truncation threshold `8 B sqrt(log(n B max(log k, 1)/eps) + 1)`.
///
/// Generous at desk scale: it discards well under 0.1% of samples while
/// still bounding every retained weight.
pub fn default_truncation_threshold(n: usize, k: usize, bound_b: f64, eps: f64) -> f64 {
    let logk = (k as f64).ln().max(1.0);
    let arg = (n as f64) * bound_b * logk / eps;
    8.0 * bound_b * (arg.ln().max(0.0) + 1.0).sqrt()
}

/// Accumulates `(1/m) sum max(0,z)^2 x x' 1(max(0,z) <= threshold)`.
///
/// Block partials are reduced over a fixed pairwise tree, so the result is
/// bit-identical for any thread count.
pub fn build_weighted_moment_matrix(
    batch: &ObservedBatch<'_>,
    truncation_threshold: f64,
) -> Result<WeightedMomentMatrix> {
    if truncation_threshold <= 0.0 {
        return Err(Error::structural("truncation threshold must be positive"));
    }
    let m = batch.m();
    if m == 0 {
        return Err(Error::structural("empty batch"));
    }
    let n = batch.n();

    let partials: Vec<(Array2<f64>, usize)> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(m);
            let mut acc = Array2::<f64>::zeros((n, n));
            let mut truncated = 0usize;
            for l in start..end {
                let zp = batch.zs[l].max(0.0);
                if zp > truncation_threshold {
                    truncated += 1;
                    continue;
                }
                if zp == 0.0 {
                    continue;
                }
                let w = zp * zp;
                let x = batch.xs.row(l);
                for i in 0..n {
                    let wxi = w * x[i];
                    for j in i..n {
                        acc[[i, j]] += wxi * x[j];
                    }
                }
            }
            (acc, truncated)
        })
        .collect();

    let (mut acc, truncated) = tree_reduce(partials, n);
    // Mirror the upper triangle and normalize.
    for i in 0..n {
        for j in 0..i {
            acc[[i, j]] = acc[[j, i]];
        }
    }
    acc.mapv_inplace(|v| v / m as f64);
    Ok(WeightedMomentMatrix {
        matrix: acc,
        truncation_threshold,
        samples_used: m - truncated,
        samples_truncated: truncated,
    })
}

fn tree_reduce(mut items: Vec<(Array2<f64>, usize)>, n: usize) -> (Array2<f64>, usize) {
    if items.is_empty() {
        return (Array2::zeros((n, n)), 0);
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some((mut a, ca)) = it.next() {
            if let Some((b, cb)) = it.next() {
                a += &b;
                next.push((a, ca + cb));
            } else {
                next.push((a, ca));
            }
        }
        items = next;
    }
    items.pop().unwrap()
}

/// Top-k eigenspace of the (symmetrized) weighted moment matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceEstimate {
    /// n x k with orthonormal columns.
    pub basis: Array2<f64>,
    /// Top k eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Median of the remaining n-k eigenvalues: the flat level the spectrum
    /// sits at away from the regressor span. NaN when n == k.
    pub bulk_level: f64,
    /// Set when the k-th and (k+1)-th eigenvalues coincide to working
    /// precision; the basis is then an arbitrary completion and callers must
    /// not rely on individual directions.
    pub degenerate: bool,
}

pub fn extract_subspace(mm: &WeightedMomentMatrix, k: usize) -> Result<SubspaceEstimate> {
    let n = mm.matrix.nrows();
    if k == 0 || k > n {
        return Err(Error::structural(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let eig = symmetric_eigen(&mm.matrix)?;
    let basis = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    let eigenvalues: Vec<f64> = eig.values.iter().take(k).copied().collect();
    let mut rest: Vec<f64> = eig.values.iter().skip(k).copied().collect();
    let bulk_level = if rest.is_empty() {
        f64::NAN
    } else {
        rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = rest.len() / 2;
        if !rest.len().is_multiple_of(2) {
            rest[mid]
        } else {
            0.5 * (rest[mid - 1] + rest[mid])
        }
    };
    let degenerate = if k < n {
        let scale = eig.values[0].abs().max(1.0);
        (eig.values[k - 1] - eig.values[k]).abs() <= 1e-9 * scale
    } else {
        false
    };
    Ok(SubspaceEstimate { basis, eigenvalues, bulk_level, degenerate })
}

impl SubspaceEstimate {
    /// Subspace spanned by explicit orthonormal columns; used by harnesses
    /// that want to bypass estimation.
    pub fn from_basis(basis: Array2<f64>) -> Result<Self> {
        let k = basis.ncols();
        let gram = basis.t().dot(&basis);
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - want).abs() > 1e-8 {
                    return Err(Error::structural("basis columns are not orthonormal"));
                }
            }
        }
        Ok(SubspaceEstimate {
            basis,
            eigenvalues: vec![f64::NAN; k],
            bulk_level: f64::NAN,
            degenerate: false,
        })
    }

    pub fn basis_view(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    /// Writes the basis as CSV, n rows by k columns.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        for i in 0..self.basis.nrows() {
            let row: Vec<String> = self.basis.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Ground-truth residuals `||w_i - P_U(w_i)||` for each regressor.
/// Harness diagnostic; the pipeline itself never sees the truth.
pub fn subspace_alignment(subspace: &SubspaceEstimate, ws: &RegressorSet) -> Result<Vec<f64>> {
    if subspace.basis.nrows() != ws.n() {
        return Err(Error::structural("subspace and regressors disagree on dimension"));
    }
    let mut out = Vec::with_capacity(ws.k());
    for i in 0..ws.k() {
        let w = ws.row(i);
        let coords = subspace.basis.t().dot(&w);
        let projected = subspace.basis.dot(&coords);
        let resid = (&w.to_owned() - &projected).mapv(|v| v * v).sum().sqrt();
        out.push(resid);
    }
    Ok(out)
}
