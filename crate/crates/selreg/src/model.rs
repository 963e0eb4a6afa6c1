//! Domain types for max-selected linear observations and the synthetic data
//! generator.
//!
//! An observation is `z = max_j (x' w_j + eta_j)` with `x ~ N(0, I_n)` and
//! centered noise `eta`; the maximizing index is never revealed to the
//! recovery pipeline. The generator keeps the index and noise draw in a
//! hidden side channel that only diagnostics may read.

use crate::rng::{block_rng, BLOCK};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// psi_2 norm of the standard Gaussian under the Orlicz definition
/// `inf { t : E exp(X^2/t^2) <= 2 }`; equals sqrt(8/3).
pub const GAUSSIAN_PSI2: f64 = 1.632_993_161_855_452_3;

/// psi_2 norm of the uniform law on [-1, 1], solved numerically once from the
/// same Orlicz definition (see `uniform_unit_psi2` and its test).
pub const UNIFORM_UNIT_PSI2: f64 = 0.772_707_792_163_128_6;

/// psi_2 norm of a Rademacher sign: 1/sqrt(ln 2).
pub const RADEMACHER_PSI2: f64 = 1.201_122_408_786_449_8;

// ---------------------------------------------------------------------------
// Problem parameters
// ---------------------------------------------------------------------------

/// Global problem parameters: ambient dimension, number of regressors, the
/// uncoveredness margin, the norm/subgaussian bound, target accuracy, and
/// failure probability.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemParams {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub bound_b: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl ProblemParams {
    pub fn new(n: usize, k: usize, delta: f64, bound_b: f64, epsilon: f64, lambda: f64) -> Result<Self> {
        let p = ProblemParams { n, k, delta, bound_b, epsilon, lambda };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::structural("k must be at least 1"));
        }
        if self.n < self.k {
            return Err(Error::structural(format!("need n >= k, got n={} k={}", self.n, self.k)));
        }
        if !(self.delta > 0.0 && self.delta <= self.bound_b) {
            return Err(Error::structural(format!(
                "need 0 < delta <= B, got delta={} B={}",
                self.delta, self.bound_b
            )));
        }
        if self.bound_b < 1.0 {
            return Err(Error::structural(format!("need B >= 1, got {}", self.bound_b)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::structural("epsilon must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::structural("lambda must lie in (0,1)"));
        }
        Ok(())
    }

    /// Regime warnings. Accuracy targets outside the guarantee regime are
    /// legal (calibrated runs use them), but worth surfacing.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d4 = self.delta.powi(4) / self.bound_b.powi(4);
        if self.epsilon >= d4 {
            out.push(format!(
                "epsilon = {} is outside the guarantee regime epsilon < delta^4/B^4 = {:.4e}",
                self.epsilon, d4
            ));
        }
        let sep = self.delta.powi(2) / (10.0 * self.bound_b.powi(2));
        if self.epsilon >= sep {
            out.push(format!(
                "epsilon = {} exceeds the separation threshold delta^2/(10 B^2) = {:.4e}",
                self.epsilon, sep
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Regressors
// ---------------------------------------------------------------------------

/// A set of k regressors in R^n together with the geometry parameters they
/// are supposed to satisfy.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RegressorSet {
    /// k x n; row i is w_i.
    vectors: Array2<f64>,
    pub delta: f64,
    pub bound_b: f64,
}

impl RegressorSet {
    pub fn new(vectors: Array2<f64>, delta: f64, bound_b: f64) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::structural("regressor set needs at least one nonempty vector"));
        }
        if !(delta > 0.0 && delta <= bound_b) {
            return Err(Error::structural("need 0 < delta <= B"));
        }
        Ok(RegressorSet { vectors, delta, bound_b })
    }

    pub fn from_rows(rows: &[Vec<f64>], delta: f64, bound_b: f64) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::structural("empty regressor list"));
        }
        let n = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::structural(format!(
                    "regressor {i} has dimension {} but regressor 0 has {n}",
                    r.len()
                )));
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let vectors = Array2::from_shape_vec((k, n), flat)
            .map_err(|e| Error::structural(e.to_string()))?;
        Self::new(vectors, delta, bound_b)
    }

    pub fn k(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn n(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Axis-aligned orthogonal regressors with norm (delta + B)/2.
    pub fn orthogonal(n: usize, k: usize, delta: f64, bound_b: f64) -> Result<Self> {
        if n < k {
            return Err(Error::structural("orthogonal construction needs n >= k"));
        }
        let norm = 0.5 * (delta + bound_b);
        let mut vectors = Array2::zeros((k, n));
        for i in 0..k {
            vectors[[i, i]] = norm;
        }
        Self::new(vectors, delta, bound_b)
    }

    /// The hard-to-observe construction: `w_1 = (B/2 + 2 delta^2/B) e_1` and
    /// `w_j = (B/2) e_1 + (B/2) e_j` for j >= 2, in R^k. Index 0 attains the
    /// maximum with probability decaying polynomially in k.
    ///
    /// Note the pair constraint `|<w_1, w_j>| <= ||w_j||^2 - delta^2` only
    /// holds when `B >= 2 sqrt(2) delta`; below that ratio `validate` reports
    /// the covered pairs.
    pub fn k_tight(k: usize, delta: f64, bound_b: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::structural("the construction needs k >= 2"));
        }
        let b = bound_b;
        let mut vectors = Array2::zeros((k, k));
        vectors[[0, 0]] = b / 2.0 + 2.0 * delta * delta / b;
        for j in 1..k {
            vectors[[j, 0]] = b / 2.0;
            vectors[[j, j]] = b / 2.0;
        }
        Self::new(vectors, delta, bound_b)
    }

    /// Random valid instance: a uniformly random orthonormal frame scaled by
    /// norms drawn in [delta, B]. Orthogonality makes uncoveredness hold for
    /// any norms at least delta, so rejection is only needed for rounding.
    pub fn random_valid<R: Rng + ?Sized>(
        n: usize,
        k: usize,
        delta: f64,
        bound_b: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n < k {
            return Err(Error::structural("random construction needs n >= k"));
        }
        loop {
            // Gram-Schmidt on Gaussian columns.
            let mut frame: Vec<Array1<f64>> = Vec::with_capacity(k);
            while frame.len() < k {
                let mut g = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
                for f in &frame {
                    let c = g.dot(f);
                    g.scaled_add(-c, f);
                }
                let norm = g.dot(&g).sqrt();
                if norm > 1e-6 {
                    frame.push(g / norm);
                }
            }
            let mut vectors = Array2::zeros((k, n));
            for (i, f) in frame.iter().enumerate() {
                let norm = rng.gen_range(delta..=bound_b);
                for j in 0..n {
                    vectors[[i, j]] = norm * f[j];
                }
            }
            let ws = Self::new(vectors, delta, bound_b)?;
            if validate_regressors(&ws).is_empty() {
                return Ok(ws);
            }
        }
    }
}

/// A named violation of the geometric assumptions, with the slack by which
/// the inequality fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    NormTooSmall { index: usize, norm: f64, delta: f64 },
    NormTooLarge { index: usize, norm: f64, bound_b: f64 },
    /// `|<w_j, w_i>| > ||w_i||^2 - delta^2` for the ordered pair (i, j).
    Covered { i: usize, j: usize, inner_abs: f64, bound: f64 },
    /// Derived consequence `||w_j - w_i|| >= delta^2/B` failed.
    SeparationTooSmall { i: usize, j: usize, distance: f64, bound: f64 },
    NoiseNotCentered { coordinate: usize, mean: f64 },
    NoiseSubgaussianTooLarge { coordinate: usize, psi2: f64, bound_b: f64 },
    NoiseDimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NormTooSmall { index, norm, delta } => {
                write!(f, "||w_{index}|| = {norm:.6} < delta = {delta}")
            }
            Violation::NormTooLarge { index, norm, bound_b } => {
                write!(f, "||w_{index}|| = {norm:.6} > B = {bound_b}")
            }
            Violation::Covered { i, j, inner_abs, bound } => write!(
                f,
                "pair ({i},{j}): |<w_{j}, w_{i}>| = {inner_abs:.6} > ||w_{i}||^2 - delta^2 = {bound:.6} (slack {:.3e})",
                bound - inner_abs
            ),
            Violation::SeparationTooSmall { i, j, distance, bound } => write!(
                f,
                "pair ({i},{j}): ||w_{j} - w_{i}|| = {distance:.6} < delta^2/B = {bound:.6}"
            ),
            Violation::NoiseNotCentered { coordinate, mean } => {
                write!(f, "noise coordinate {coordinate} has mean {mean} != 0")
            }
            Violation::NoiseSubgaussianTooLarge { coordinate, psi2, bound_b } => {
                write!(f, "noise coordinate {coordinate} has psi2 norm {psi2:.4} > B = {bound_b}")
            }
            Violation::NoiseDimensionMismatch { expected, got } => {
                write!(f, "noise has {got} coordinates, regressors have {expected}")
            }
        }
    }
}

/// Checks norm bounds, pairwise uncoveredness (both orderings of every pair),
/// and the derived pairwise separation. Returns an empty list exactly when
/// the geometric assumptions hold.
pub fn validate_regressors(ws: &RegressorSet) -> Vec<Violation> {
    let k = ws.k();
    let delta = ws.delta;
    let b = ws.bound_b;
    let eps = 1e-9;
    let mut out = Vec::new();
    let norms: Vec<f64> = (0..k).map(|i| ws.row(i).dot(&ws.row(i)).sqrt()).collect();
    for (i, &norm) in norms.iter().enumerate() {
        if norm < delta - eps {
            out.push(Violation::NormTooSmall { index: i, norm, delta });
        }
        if norm > b + eps {
            out.push(Violation::NormTooLarge { index: i, norm, bound_b: b });
        }
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let inner_abs = ws.row(i).dot(&ws.row(j)).abs();
            let bound = norms[i] * norms[i] - delta * delta;
            if inner_abs > bound + eps {
                out.push(Violation::Covered { i, j, inner_abs, bound });
            }
        }
    }
    let sep = delta * delta / b;
    for i in 0..k {
        for j in i + 1..k {
            let diff = &ws.row(j) - &ws.row(i);
            let distance = diff.dot(&diff).sqrt();
            if distance < sep - eps {
                out.push(Violation::SeparationTooSmall { i, j, distance, bound: sep });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// A scalar noise law used standalone (shared across coordinates) or as a
/// marginal.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ScalarLaw {
    Gaussian { sigma: f64 },
    Uniform { half_width: f64 },
    ScaledRademacher { scale: f64 },
    /// Degenerate point mass; centered only at zero. Useful for exercising
    /// the max mechanics deterministically.
    Constant { value: f64 },
}

impl ScalarLaw {
    pub fn variance(&self) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => sigma * sigma,
            ScalarLaw::Uniform { half_width } => half_width * half_width / 3.0,
            ScalarLaw::ScaledRademacher { scale } => scale * scale,
            ScalarLaw::Constant { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            _ => 0.0,
        }
    }

    /// `E[(eta)_+^2]`, the positive part of the second moment.
    pub fn positive_square_mean(&self) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => 0.5 * sigma * sigma,
            ScalarLaw::Uniform { half_width } => half_width * half_width / 6.0,
            ScalarLaw::ScaledRademacher { scale } => 0.5 * scale * scale,
            ScalarLaw::Constant { value } => value.max(0.0).powi(2),
        }
    }

    /// Orlicz psi_2 norm, analytic per kind.
    pub fn psi2(&self) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => sigma.abs() * GAUSSIAN_PSI2,
            ScalarLaw::Uniform { half_width } => half_width.abs() * UNIFORM_UNIT_PSI2,
            ScalarLaw::ScaledRademacher { scale } => scale.abs() * RADEMACHER_PSI2,
            ScalarLaw::Constant { value } => value.abs() * RADEMACHER_PSI2,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            ScalarLaw::Uniform { half_width } => half_width * (2.0 * rng.gen::<f64>() - 1.0),
            ScalarLaw::ScaledRademacher { scale } => {
                if rng.gen::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
            ScalarLaw::Constant { value } => value,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ScalarLaw::Gaussian { .. } => "gaussian",
            ScalarLaw::Uniform { .. } => "uniform",
            ScalarLaw::ScaledRademacher { .. } => "scaled_rademacher",
            ScalarLaw::Constant { .. } => "constant",
        }
    }
}

/// The k-dimensional noise law. Independent kinds carry one parameter per
/// coordinate; `SharedScalar` broadcasts a single draw to all coordinates,
/// which moves the noise outside the maximum.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    IndependentGaussian { sigmas: Vec<f64> },
    IndependentUniform { half_widths: Vec<f64> },
    IndependentScaledRademacher { scales: Vec<f64> },
    SharedScalar { law: ScalarLaw },
}

impl NoiseSpec {
    /// Zero noise in k coordinates.
    pub fn zero(k: usize) -> Self {
        NoiseSpec::IndependentGaussian { sigmas: vec![0.0; k] }
    }

    /// Equal Gaussian noise in all k coordinates.
    pub fn gaussian(k: usize, sigma: f64) -> Self {
        NoiseSpec::IndependentGaussian { sigmas: vec![sigma; k] }
    }

    /// Equal uniform noise in all k coordinates.
    pub fn uniform(k: usize, half_width: f64) -> Self {
        NoiseSpec::IndependentUniform { half_widths: vec![half_width; k] }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, NoiseSpec::SharedScalar { .. })
    }

    pub fn kind_name(&self) -> String {
        match self {
            NoiseSpec::IndependentGaussian { .. } => "independent_gaussian".into(),
            NoiseSpec::IndependentUniform { .. } => "independent_uniform".into(),
            NoiseSpec::IndependentScaledRademacher { .. } => "independent_scaled_rademacher".into(),
            NoiseSpec::SharedScalar { law } => format!("shared_{}", law.kind_name()),
        }
    }

    /// Number of coordinates the spec pins down; `None` for shared laws,
    /// which fit any k.
    pub fn dim(&self) -> Option<usize> {
        match self {
            NoiseSpec::IndependentGaussian { sigmas } => Some(sigmas.len()),
            NoiseSpec::IndependentUniform { half_widths } => Some(half_widths.len()),
            NoiseSpec::IndependentScaledRademacher { scales } => Some(scales.len()),
            NoiseSpec::SharedScalar { .. } => None,
        }
    }

    pub fn marginal(&self, j: usize) -> ScalarLaw {
        match self {
            NoiseSpec::IndependentGaussian { sigmas } => ScalarLaw::Gaussian { sigma: sigmas[j] },
            NoiseSpec::IndependentUniform { half_widths } => {
                ScalarLaw::Uniform { half_width: half_widths[j] }
            }
            NoiseSpec::IndependentScaledRademacher { scales } => {
                ScalarLaw::ScaledRademacher { scale: scales[j] }
            }
            NoiseSpec::SharedScalar { law } => law.clone(),
        }
    }

    /// Validates centering and the per-coordinate psi_2 bound against B.
    pub fn validate(&self, k: usize, bound_b: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(d) = self.dim() {
            if d != k {
                out.push(Violation::NoiseDimensionMismatch { expected: k, got: d });
                return out;
            }
        }
        for j in 0..k {
            let law = self.marginal(j);
            let mean = law.mean();
            if mean != 0.0 {
                out.push(Violation::NoiseNotCentered { coordinate: j, mean });
            }
            let psi2 = law.psi2();
            if psi2 > bound_b + 1e-9 {
                out.push(Violation::NoiseSubgaussianTooLarge { coordinate: j, psi2, bound_b });
            }
        }
        out
    }

    /// Fills `eta` (length k) with one draw of the joint noise vector.
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, eta: &mut [f64]) {
        match self {
            NoiseSpec::SharedScalar { law } => {
                let xi = law.sample(rng);
                eta.fill(xi);
            }
            _ => {
                for (j, e) in eta.iter_mut().enumerate() {
                    *e = self.marginal(j).sample(rng);
                }
            }
        }
    }
}

/// Solves the Orlicz equation for the uniform law on [-1, 1]:
/// the unique t with `int_0^1 exp(u^2/t^2) du = 2`.
pub fn uniform_unit_psi2() -> f64 {
    let f = |t: f64| {
        // Gauss-Legendre would be fine; Simpson at this smoothness is plenty.
        let steps = 4000usize;
        let h = 1.0 / steps as f64;
        let g = |u: f64| (u * u / (t * t)).exp();
        let mut s = g(0.0) + g(1.0);
        for i in 1..steps {
            let u = i as f64 * h;
            s += if i.is_multiple_of(2) { 2.0 * g(u) } else { 4.0 * g(u) };
        }
        s * h / 3.0 - 2.0
    };
    let (mut lo, mut hi) = (0.3_f64, 3.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// Ground-truth side channel: the maximizing index and the noise draw for
/// every sample. Diagnostics only.
#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub argmax: Vec<u32>,
    /// m x k noise draws.
    pub noise: Array2<f64>,
}

/// A batch of m i.i.d. observations. The recovery pipeline consumes the
/// `observed()` view, which cannot reach the hidden channel.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    xs: Array2<f64>,
    zs: Array1<f64>,
    hidden: Option<Hidden>,
    pub seed: u64,
    pub noise_kind: String,
}

/// The covariate/observation view: everything the unknown-index setting
/// permits an estimator to see.
#[derive(Clone, Copy)]
pub struct ObservedBatch<'a> {
    pub xs: ArrayView2<'a, f64>,
    pub zs: ArrayView1<'a, f64>,
}

impl<'a> ObservedBatch<'a> {
    pub fn m(&self) -> usize {
        self.xs.nrows()
    }

    pub fn n(&self) -> usize {
        self.xs.ncols()
    }
}

impl SampleBatch {
    pub fn m(&self) -> usize {
        self.xs.nrows()
    }

    pub fn n(&self) -> usize {
        self.xs.ncols()
    }

    pub fn observed(&self) -> ObservedBatch<'_> {
        ObservedBatch { xs: self.xs.view(), zs: self.zs.view() }
    }

    pub fn hidden(&self) -> Option<&Hidden> {
        self.hidden.as_ref()
    }

    pub fn xs(&self) -> ArrayView2<'_, f64> {
        self.xs.view()
    }

    pub fn zs(&self) -> ArrayView1<'_, f64> {
        self.zs.view()
    }

    /// Drops the hidden channel (e.g. before handing the batch to code that
    /// should provably not see it).
    pub fn without_hidden(mut self) -> Self {
        self.hidden = None;
        self
    }
}

/// Max response and its lowest-index argmax given per-regressor linear parts
/// and a noise vector.
pub fn max_response(dots: &[f64], etas: &[f64]) -> (f64, usize) {
    debug_assert_eq!(dots.len(), etas.len());
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for (j, (&d, &e)) in dots.iter().zip(etas).enumerate() {
        let v = d + e;
        if v > best {
            best = v;
            arg = j;
        }
    }
    (best, arg)
}

/// Generates m i.i.d. samples. A pure function of `(ws, noise, m, seed)`:
/// covariates and noise are drawn from separate counter-derived streams per
/// fixed-size block, so the result is bit-identical across thread counts and
/// the covariate stream does not shift when the noise kind changes.
pub fn generate(ws: &RegressorSet, noise: &NoiseSpec, m: usize, seed: u64) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::structural("need at least one sample"));
    }
    let k = ws.k();
    let n = ws.n();
    if let Some(d) = noise.dim() {
        if d != k {
            return Err(Error::structural(format!(
                "noise has {d} coordinates but the regressor set has {k}"
            )));
        }
    }

    let mut xs = vec![0.0f64; m * n];
    let mut zs = vec![0.0f64; m];
    let mut argmax = vec![0u32; m];
    let mut eta_store = vec![0.0f64; m * k];

    let w = ws.vectors();
    xs.par_chunks_mut(BLOCK * n)
        .zip(zs.par_chunks_mut(BLOCK))
        .zip(argmax.par_chunks_mut(BLOCK))
        .zip(eta_store.par_chunks_mut(BLOCK * k))
        .enumerate()
        .for_each(|(block, (((xc, zc), ac), ec))| {
            let mut rng_x = block_rng(seed, 0, block as u64);
            let mut rng_e = block_rng(seed, 1, block as u64);
            let rows = zc.len();
            let mut dots = vec![0.0f64; k];
            for r in 0..rows {
                let x = &mut xc[r * n..(r + 1) * n];
                for v in x.iter_mut() {
                    *v = rng_x.sample::<f64, _>(StandardNormal);
                }
                let eta = &mut ec[r * k..(r + 1) * k];
                noise.sample_into(&mut rng_e, eta);
                for (j, d) in dots.iter_mut().enumerate() {
                    let mut s = 0.0;
                    let wj = w.row(j);
                    for (xi, wi) in x.iter().zip(wj.iter()) {
                        s += xi * wi;
                    }
                    *d = s;
                }
                let (z, arg) = max_response(&dots, eta);
                zc[r] = z;
                ac[r] = arg as u32;
            }
        });

    Ok(SampleBatch {
        xs: Array2::from_shape_vec((m, n), xs).expect("shape"),
        zs: Array1::from_vec(zs),
        hidden: Some(Hidden {
            argmax,
            noise: Array2::from_shape_vec((m, k), eta_store).expect("shape"),
        }),
        seed,
        noise_kind: noise.kind_name(),
    })
}

/// Streaming estimate of `Pr(index attains the max)` (optionally also
/// requiring `z >= 0`) over m fresh samples. Identical sample stream to
/// `generate` with the same seed, but O(block) memory, so large k and m are
/// cheap.
pub fn empirical_observation_probability(
    ws: &RegressorSet,
    noise: &NoiseSpec,
    m: usize,
    seed: u64,
    index: usize,
    require_nonneg_z: bool,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::structural("need at least one sample"));
    }
    let k = ws.k();
    let n = ws.n();
    if index >= k {
        return Err(Error::structural(format!("index {index} out of range for k = {k}")));
    }
    if let Some(d) = noise.dim() {
        if d != k {
            return Err(Error::structural(format!(
                "noise has {d} coordinates but the regressor set has {k}"
            )));
        }
    }
    let blocks = m.div_ceil(BLOCK);
    let w = ws.vectors();
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng_x = block_rng(seed, 0, block as u64);
            let mut rng_e = block_rng(seed, 1, block as u64);
            let rows = BLOCK.min(m - block * BLOCK);
            let mut x = vec![0.0f64; n];
            let mut eta = vec![0.0f64; k];
            let mut dots = vec![0.0f64; k];
            let mut count = 0u64;
            for _ in 0..rows {
                for v in x.iter_mut() {
                    *v = rng_x.sample::<f64, _>(StandardNormal);
                }
                noise.sample_into(&mut rng_e, &mut eta);
                for (j, d) in dots.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (xi, wi) in x.iter().zip(w.row(j).iter()) {
                        s += xi * wi;
                    }
                    *d = s;
                }
                let (z, arg) = max_response(&dots, &eta);
                if arg == index && (!require_nonneg_z || z >= 0.0) {
                    count += 1;
                }
            }
            count
        })
        .sum();
    Ok(hits as f64 / m as f64)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

impl SampleBatch {
    /// Writes the batch as CSV: two comment lines carrying the header
    /// (n, k, m, seed, noise kind), a column row, then one row per sample
    /// with x_1..x_n, z. The hidden channel goes to a separate sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let k = self.hidden.as_ref().map_or(0, |h| h.noise.ncols());
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# selreg batch v1")?;
        writeln!(
            w,
            "# n={},k={},m={},seed={},noise={}",
            self.n(),
            k,
            self.m(),
            self.seed,
            self.noise_kind
        )?;
        let cols: Vec<String> = (1..=self.n()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},z", cols.join(","))?;
        for r in 0..self.m() {
            let row = self.xs.row(r);
            for v in row.iter() {
                write!(w, "{v},")?;
            }
            writeln!(w, "{}", self.zs[r])?;
        }
        Ok(())
    }

    /// Writes the hidden channel sidecar: per-sample maximizing index and
    /// noise draw.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let hidden = self
            .hidden
            .as_ref()
            .ok_or_else(|| Error::structural("batch has no hidden channel"))?;
        let k = hidden.noise.ncols();
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# selreg hidden v1")?;
        writeln!(w, "# m={},k={}", self.m(), k)?;
        let cols: Vec<String> = (1..=k).map(|i| format!("eta{i}")).collect();
        writeln!(w, "argmax,{}", cols.join(","))?;
        for r in 0..self.m() {
            write!(w, "{}", hidden.argmax[r])?;
            for v in hidden.noise.row(r).iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a batch written by `write_csv`, optionally joining the sidecar.
    pub fn read_csv(path: &Path, sidecar: Option<&Path>) -> Result<SampleBatch> {
        let f = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(f);
        let mut lines = reader.lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if !magic.starts_with("# selreg batch") {
            return Err(Error::structural(format!("not a selreg batch file: {magic:?}")));
        }
        let header = lines.next().transpose()?.unwrap_or_default();
        let meta = parse_header(&header)?;
        let n: usize = meta_get(&meta, "n")?;
        let m: usize = meta_get(&meta, "m")?;
        let seed: u64 = meta_get(&meta, "seed")?;
        let noise_kind = meta
            .iter()
            .find(|(k, _)| k == "noise")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let _cols = lines.next().transpose()?;
        let mut xs = Vec::with_capacity(m * n);
        let mut zs = Vec::with_capacity(m);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            for _ in 0..n {
                let tok = parts
                    .next()
                    .ok_or_else(|| Error::structural("row truncated"))?;
                xs.push(tok.parse::<f64>().map_err(|e| Error::structural(e.to_string()))?);
            }
            let tok = parts.next().ok_or_else(|| Error::structural("row missing z"))?;
            zs.push(tok.parse::<f64>().map_err(|e| Error::structural(e.to_string()))?);
        }
        if zs.len() != m {
            return Err(Error::structural(format!("expected {m} rows, found {}", zs.len())));
        }
        let hidden = match sidecar {
            None => None,
            Some(p) => Some(read_sidecar(p, m)?),
        };
        Ok(SampleBatch {
            xs: Array2::from_shape_vec((m, n), xs).expect("shape"),
            zs: Array1::from_vec(zs),
            hidden,
            seed,
            noise_kind,
        })
    }
}

fn read_sidecar(path: &Path, m: usize) -> Result<Hidden> {
    let f = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(f);
    let mut lines = reader.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if !magic.starts_with("# selreg hidden") {
        return Err(Error::structural("not a selreg sidecar file"));
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    let meta = parse_header(&header)?;
    let k: usize = meta_get(&meta, "k")?;
    let _cols = lines.next().transpose()?;
    let mut argmax = Vec::with_capacity(m);
    let mut noise = Vec::with_capacity(m * k);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().ok_or_else(|| Error::structural("sidecar row empty"))?;
        argmax.push(a.parse::<u32>().map_err(|e| Error::structural(e.to_string()))?);
        for _ in 0..k {
            let tok = parts
                .next()
                .ok_or_else(|| Error::structural("sidecar row truncated"))?;
            noise.push(tok.parse::<f64>().map_err(|e| Error::structural(e.to_string()))?);
        }
    }
    if argmax.len() != m {
        return Err(Error::structural("sidecar row count mismatch"));
    }
    Ok(Hidden { argmax, noise: Array2::from_shape_vec((m, k), noise).expect("shape") })
}

fn parse_header(line: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .strip_prefix("# ")
        .ok_or_else(|| Error::structural("missing header line"))?;
    Ok(body
        .split(',')
        .filter_map(|kv| kv.split_once('='))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect())
}

fn meta_get<T: std::str::FromStr>(meta: &[(String, String)], key: &str) -> Result<T> {
    meta.iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::structural(format!("header missing {key}")))?
        .1
        .parse::<T>()
        .map_err(|_| Error::structural(format!("bad header value for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_vectors_satisfy_uncoveredness() {
        // w1 = 2 e1, w2 = e2 with delta = 1, B = 2.
        let ws = RegressorSet::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]], 1.0, 2.0).unwrap();
        assert!(validate_regressors(&ws).is_empty());
    }

    #[test]
    fn identical_vectors_are_covered() {
        let ws = RegressorSet::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]], 1.0, 2.0).unwrap();
        let violations = validate_regressors(&ws);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::Covered { i: 0, j: 1, .. })));
    }

    #[test]
    fn hard_construction_geometry_depends_on_ratio() {
        // The pair constraint against the small vectors' norms needs
        // B >= 2 sqrt(2) delta; at B = 4, delta = 1 everything passes.
        let ws = RegressorSet::k_tight(4, 1.0, 4.0).unwrap();
        assert!(validate_regressors(&ws).is_empty());

        // At B = 2, delta = 1 the long vector covers the short ones:
        // <w_1, w_j> = 2 exceeds ||w_j||^2 - delta^2 = 1.
        let ws = RegressorSet::k_tight(4, 1.0, 2.0).unwrap();
        let violations = validate_regressors(&ws);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::Covered { j: 0, .. })));
    }

    #[test]
    fn max_response_picks_max_and_breaks_ties_low() {
        // x'w1 = 1, x'w2 = 2, zero noise -> z = 2 from index 1.
        assert_eq!(max_response(&[1.0, 2.0], &[0.0, 0.0]), (2.0, 1));
        // Shared noise 0.3 rides on top of the max.
        let (z, arg) = max_response(&[1.0, 2.0], &[0.3, 0.3]);
        assert!((z - 2.3).abs() < 1e-15);
        assert_eq!(arg, 1);
        // Ties go to the lowest index.
        assert_eq!(max_response(&[5.0, 5.0], &[0.0, 0.0]).1, 0);
    }

    #[test]
    fn generate_is_reproducible_and_thread_invariant() {
        let ws = RegressorSet::orthogonal(4, 2, 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(2, 0.3);
        let a = generate(&ws, &noise, 20_000, 9).unwrap();
        let b = generate(&ws, &noise, 20_000, 9).unwrap();
        assert_eq!(a.xs, b.xs);
        assert_eq!(a.zs, b.zs);
        assert_eq!(a.hidden, b.hidden);

        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| generate(&ws, &noise, 20_000, 9).unwrap());
        assert_eq!(a.xs, c.xs);
        assert_eq!(a.zs, c.zs);
        assert_eq!(a.hidden, c.hidden);
    }

    #[test]
    fn hidden_channel_is_consistent() {
        let ws = RegressorSet::orthogonal(3, 2, 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(2, 0.5);
        let batch = generate(&ws, &noise, 5000, 3).unwrap();
        let hidden = batch.hidden().unwrap();
        for r in 0..batch.m() {
            let x = batch.xs().row(r).to_owned();
            let i = hidden.argmax[r] as usize;
            let z_rebuilt = ws.row(i).dot(&x) + hidden.noise[[r, i]];
            assert!((z_rebuilt - batch.zs()[r]).abs() < 1e-12);
            for j in 0..ws.k() {
                let zj = ws.row(j).dot(&x) + hidden.noise[[r, j]];
                assert!(zj <= batch.zs()[r] + 1e-12);
            }
        }
    }

    #[test]
    fn single_regressor_gaussian_noise_moments() {
        // z = x_1 + eta ~ N(0, 2).
        let ws = RegressorSet::from_rows(&[vec![1.0, 0.0]], 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(1, 1.0);
        let m = 1_000_000;
        let batch = generate(&ws, &noise, m, 17).unwrap();
        let mean = batch.zs().sum() / m as f64;
        let var = batch.zs().iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / m as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 2.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn zero_noise_single_regressor_is_exact() {
        let ws = RegressorSet::from_rows(&[vec![0.7, -0.3, 1.1]], 0.5, 2.0).unwrap();
        let batch = generate(&ws, &NoiseSpec::zero(1), 2000, 5).unwrap();
        for r in 0..batch.m() {
            let want = ws.row(0).dot(&batch.xs().row(r));
            assert_eq!(batch.zs()[r], want);
        }
    }

    #[test]
    fn noise_variance_matches_analytic_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let laws = [
            ScalarLaw::Gaussian { sigma: 0.7 },
            ScalarLaw::Uniform { half_width: 1.3 },
            ScalarLaw::ScaledRademacher { scale: 0.4 },
        ];
        for law in laws {
            let n = 100_000;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let x = law.sample(&mut rng);
                sum += x;
                sumsq += x * x;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let want = law.variance();
            assert!(
                (var - want).abs() / want < 0.05,
                "{law:?}: empirical {var}, analytic {want}"
            );
        }
    }

    #[test]
    fn uniform_psi2_constant_matches_root_finding() {
        let solved = uniform_unit_psi2();
        assert!(
            (solved - UNIFORM_UNIT_PSI2).abs() < 1e-8,
            "root-found {solved}, frozen {UNIFORM_UNIT_PSI2}"
        );
    }

    #[test]
    fn noise_validation_flags_oversized_and_noncentered() {
        // sigma large enough that sigma * sqrt(8/3) > B = 1.
        let noise = NoiseSpec::gaussian(2, 0.9);
        let v = noise.validate(2, 1.0);
        assert!(v.iter().any(|x| matches!(x, Violation::NoiseSubgaussianTooLarge { .. })));

        let noise = NoiseSpec::SharedScalar { law: ScalarLaw::Constant { value: 0.3 } };
        let v = noise.validate(2, 2.0);
        assert!(v.iter().any(|x| matches!(x, Violation::NoiseNotCentered { .. })));

        let noise = NoiseSpec::gaussian(2, 0.3);
        assert!(noise.validate(2, 2.0).is_empty());
    }

    #[test]
    fn uncoveredness_implies_separation_on_random_valid_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let ws = RegressorSet::random_valid(6, 3, 0.8, 2.0, &mut rng).unwrap();
            assert!(validate_regressors(&ws).is_empty());
            let sep = ws.delta * ws.delta / ws.bound_b;
            for i in 0..ws.k() {
                for j in i + 1..ws.k() {
                    let d = (&ws.row(i) - &ws.row(j)).mapv(|x| x * x).sum().sqrt();
                    assert!(d >= sep - 1e-9, "pair ({i},{j}) distance {d} < {sep}");
                }
            }
        }
    }

    #[test]
    fn observation_probability_symmetry_and_k1() {
        let ws = RegressorSet::orthogonal(2, 2, 1.0, 2.0).unwrap();
        let m = 200_000;
        let f = empirical_observation_probability(&ws, &NoiseSpec::zero(2), m, 21, 0, false).unwrap();
        let se = (0.25f64 / m as f64).sqrt();
        assert!((f - 0.5).abs() < 3.0 * se, "frequency {f}");

        let ws1 = RegressorSet::from_rows(&[vec![1.5, 0.0]], 1.0, 2.0).unwrap();
        let f1 = empirical_observation_probability(&ws1, &NoiseSpec::zero(1), 10_000, 1, 0, false).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn observation_probability_matches_generate_stream() {
        let ws = RegressorSet::orthogonal(3, 2, 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(2, 0.3);
        let m = 30_000;
        let seed = 4;
        let f = empirical_observation_probability(&ws, &noise, m, seed, 1, false).unwrap();
        let batch = generate(&ws, &noise, m, seed).unwrap();
        let count = batch.hidden().unwrap().argmax.iter().filter(|&&a| a == 1).count();
        assert_eq!(f, count as f64 / m as f64);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("selreg_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let ws = RegressorSet::orthogonal(3, 2, 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(2, 0.3);
        let batch = generate(&ws, &noise, 500, 11).unwrap();
        let data = dir.join("batch.csv");
        let side = dir.join("batch.hidden.csv");
        batch.write_csv(&data).unwrap();
        batch.write_sidecar(&side).unwrap();
        let back = SampleBatch::read_csv(&data, Some(&side)).unwrap();
        assert_eq!(batch.xs, back.xs);
        assert_eq!(batch.zs, back.zs);
        assert_eq!(batch.hidden, back.hidden);
        assert_eq!(batch.seed, back.seed);
        std::fs::remove_dir_all(&dir).ok();
    }
}
