//! Independent oracles: closed forms, quadrature, and a direct-sampling
//! Monte Carlo estimator for conditional moments, plus the permutation-
//! matched error metric.
//!
//! The Monte Carlo oracle draws the localized projection directly from the
//! truncated normal and fills the orthogonal complement i.i.d., so it shares
//! no filtering code with the batch-statistics path; agreement between the
//! two is evidence rather than tautology.

use crate::gauss;
use crate::model::{NoiseSpec, RegressorSet, ScalarLaw};
use crate::moments::LocalizationEvent;
use crate::rng::block_rng;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Frozen constant for the subgaussian lower bounds. Calibrated once so the
/// bounds hold simultaneously for the Gaussian, uniform, and Rademacher
/// laws with their analytic Orlicz norms (the Gaussian case alone would
/// allow c up to ~0.72, but Rademacher caps it near 0.57).
pub const SUBGAUSSIAN_LB_C: f64 = 0.5;

/// Frozen constant for the truncated-second-moment increase bound.
pub const SM_INCREASE_C: f64 = 0.5;

// ---------------------------------------------------------------------------
// Truncated Gaussian mean
// ---------------------------------------------------------------------------

/// Mean of a standard normal conditioned on `a < Z < b`:
/// `(phi(a) - phi(b)) / (Phi(b) - Phi(a))`. Infinite endpoints allowed.
pub fn truncated_gaussian_mean(a: f64, b: f64) -> Result<f64> {
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::structural(format!("need a < b, got a={a}, b={b}")));
    }
    // Work in the tail representation on the side where it keeps relative
    // precision.
    let mass = if a >= 0.0 {
        gauss::upper_tail(a) - gauss::upper_tail(b)
    } else {
        gauss::cdf(b) - gauss::cdf(a)
    };
    if mass <= 0.0 || !mass.is_finite() {
        return Err(Error::IntervalTooFar { a, b });
    }
    let num = pdf_or_zero(a) - pdf_or_zero(b);
    Ok(num / mass)
}

fn pdf_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        gauss::pdf(x)
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Matched error
// ---------------------------------------------------------------------------

/// Best bijection between estimates and true regressors under the
/// max-distance criterion.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatchedError {
    /// `permutation[i]` is the regressor index matched to estimate i.
    pub permutation: Vec<usize>,
    pub max_error: f64,
    /// Distance of each estimate to its matched regressor.
    pub per_pair_errors: Vec<f64>,
}

/// Minimizes the maximum pairwise distance over bijections: exhaustive for
/// k <= 8, bottleneck matching (binary search over the distance threshold
/// plus bipartite matching) beyond that.
pub fn matched_error(estimates: &[Array1<f64>], truth: &RegressorSet) -> Result<MatchedError> {
    let k = truth.k();
    if estimates.len() != k {
        return Err(Error::structural(format!(
            "{} estimates for {} regressors",
            estimates.len(),
            k
        )));
    }
    for (i, e) in estimates.iter().enumerate() {
        if e.len() != truth.n() {
            return Err(Error::structural(format!("estimate {i} has wrong dimension")));
        }
    }
    let mut dist = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let d = (&estimates[i].view() - &truth.row(j)).mapv(|v| v * v).sum().sqrt();
            dist[[i, j]] = d;
        }
    }
    let permutation = if k <= 8 {
        exhaustive_assignment(&dist)
    } else {
        bottleneck_assignment(&dist)
    };
    let per_pair_errors: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| dist[[i, j]])
        .collect();
    let max_error = per_pair_errors.iter().cloned().fold(0.0f64, f64::max);
    Ok(MatchedError { permutation, max_error, per_pair_errors })
}

fn exhaustive_assignment(dist: &Array2<f64>) -> Vec<usize> {
    let k = dist.nrows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best: Vec<usize> = perm.clone();
    let mut best_cost = assignment_cost(dist, &perm);
    // Heap's algorithm.
    let mut c = vec![0usize; k];
    let mut i = 0usize;
    while i < k {
        if c[i] < i {
            if i.is_multiple_of(2) {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cost = assignment_cost(dist, &perm);
            if cost < best_cost {
                best_cost = cost;
                best = perm.clone();
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn assignment_cost(dist: &Array2<f64>, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| dist[[i, j]])
        .fold(0.0f64, f64::max)
}

fn bottleneck_assignment(dist: &Array2<f64>) -> Vec<usize> {
    let mut thresholds: Vec<f64> = dist.iter().copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    // Binary search the smallest threshold admitting a perfect matching.
    let (mut lo, mut hi) = (0usize, thresholds.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(dist, thresholds[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    perfect_matching(dist, thresholds[lo]).expect("full threshold always matches")
}

/// Kuhn's augmenting-path bipartite matching restricted to edges with
/// distance at most `threshold`.
fn perfect_matching(dist: &Array2<f64>, threshold: f64) -> Option<Vec<usize>> {
    let k = dist.nrows();
    let mut match_right: Vec<Option<usize>> = vec![None; k];
    fn try_augment(
        i: usize,
        dist: &Array2<f64>,
        threshold: f64,
        visited: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        let k = dist.nrows();
        for j in 0..k {
            if dist[[i, j]] <= threshold && !visited[j] {
                visited[j] = true;
                let free = match match_right[j] {
                    None => true,
                    Some(prev) => try_augment(prev, dist, threshold, visited, match_right),
                };
                if free {
                    match_right[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..k {
        let mut visited = vec![false; k];
        if !try_augment(i, dist, threshold, &mut visited, &mut match_right) {
            return None;
        }
    }
    let mut perm = vec![0usize; k];
    for (j, mi) in match_right.iter().enumerate() {
        perm[mi.unwrap()] = j;
    }
    Some(perm)
}

// ---------------------------------------------------------------------------
// Subgaussian positive-part lower bounds
// ---------------------------------------------------------------------------

/// Lower bounds `E[X_+] >= c Var/(K sqrt(log(K^2/(c Var))))` and
/// `Pr(X >= 0) >= c Var/(K^2 log(K^2/(c Var)))` for centered K-subgaussian X,
/// with the frozen constant [`SUBGAUSSIAN_LB_C`].
pub fn subgaussian_positive_part_bounds(variance: f64, k_norm: f64) -> Result<(f64, f64)> {
    if variance <= 0.0 || k_norm <= 0.0 {
        return Err(Error::structural("variance and K must be positive"));
    }
    // Jensen on the Orlicz definition forces E[X^2] <= K^2 ln 2; anything
    // larger is impossible for a K-subgaussian variable.
    let bound = k_norm * k_norm * std::f64::consts::LN_2;
    if variance > bound * (1.0 + 1e-12) {
        return Err(Error::InconsistentMoments { variance, k: k_norm, bound });
    }
    let c = SUBGAUSSIAN_LB_C;
    let ratio = k_norm * k_norm / (c * variance);
    let log = ratio.ln();
    let e_plus = c * variance / (k_norm * log.sqrt());
    let prob = c * variance / (k_norm * k_norm * log);
    Ok((e_plus, prob))
}

// ---------------------------------------------------------------------------
// Truncated second-moment increase
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmIncrease {
    /// `E[(X + Y + Z)_+^2]` with `Y ~ N(0, eps^2)` and `Z = -zeta`.
    pub with_noise: f64,
    /// `E[X_+^2]`.
    pub base: f64,
    /// `with_noise - base`.
    pub increase: f64,
    /// The analytic lower bound `c eps^4 / (K^2 log(K/(c eps)))`.
    pub lemma_bound: f64,
}

/// Measures how much an independent `N(0, eps^2)` perturbation (with a sure
/// shift `-zeta`) inflates the truncated second moment of a centered law.
///
/// The inner Gaussian convolution is closed-form; the outer expectation over
/// X is evaluated by composite Simpson at two resolutions and accepted only
/// when the Richardson disagreement is below 1e-6.
pub fn sm_increase_oracle(law: &ScalarLaw, eps: f64, zeta: f64) -> Result<SmIncrease> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::structural("eps must lie in (0, 0.1)"));
    }
    if zeta < 0.0 {
        return Err(Error::structural("zeta must be nonnegative"));
    }
    let h = |x: f64| gauss::positive_square_mean(x - zeta, eps);
    let base_fn = |x: f64| x.max(0.0) * x.max(0.0);

    let (with_noise, base) = match *law {
        ScalarLaw::Gaussian { sigma } => {
            if sigma == 0.0 {
                (h(0.0), 0.0)
            } else {
                let coarse = gaussian_quad(&h, sigma, 2000);
                let fine = gaussian_quad(&h, sigma, 4000);
                check_richardson(coarse, fine)?;
                (fine, 0.5 * sigma * sigma)
            }
        }
        ScalarLaw::Uniform { half_width } => {
            if half_width == 0.0 {
                (h(0.0), 0.0)
            } else {
                let coarse = uniform_quad(&h, half_width, 2000);
                let fine = uniform_quad(&h, half_width, 4000);
                check_richardson(coarse, fine)?;
                (fine, uniform_quad(&base_fn, half_width, 4000))
            }
        }
        ScalarLaw::ScaledRademacher { scale } => {
            (0.5 * (h(scale) + h(-scale)), 0.5 * base_fn(scale) + 0.5 * base_fn(-scale))
        }
        ScalarLaw::Constant { value } => (h(value), base_fn(value)),
    };

    let c = SM_INCREASE_C;
    let k_norm = law.psi2().max(1.0);
    let lemma_bound = c * eps.powi(4) / (k_norm * k_norm * (k_norm / (c * eps)).ln());
    Ok(SmIncrease { with_noise, base, increase: with_noise - base, lemma_bound })
}

fn check_richardson(coarse: f64, fine: f64) -> Result<()> {
    let disagreement = (coarse - fine).abs() / fine.abs().max(1e-12);
    if disagreement > 1e-6 {
        return Err(Error::QuadratureNonConvergence { disagreement });
    }
    Ok(())
}

fn gaussian_quad(f: &dyn Fn(f64) -> f64, sigma: f64, steps: usize) -> f64 {
    // Integrate f against the N(0, sigma^2) density over +-10 sigma.
    let a = -10.0 * sigma;
    let b = 10.0 * sigma;
    simpson(&|x| f(x) * gauss::pdf(x / sigma) / sigma, a, b, steps)
}

fn uniform_quad(f: &dyn Fn(f64) -> f64, half_width: f64, steps: usize) -> f64 {
    simpson(&|x| f(x) / (2.0 * half_width), -half_width, half_width, steps)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    let steps = if steps.is_multiple_of(2) { steps } else { steps + 1 };
    let h = (b - a) / steps as f64;
    let mut s = f(a) + f(b);
    for i in 1..steps {
        let x = a + i as f64 * h;
        s += if i.is_multiple_of(2) { 2.0 * f(x) } else { 4.0 * f(x) };
    }
    s * h / 3.0
}

// ---------------------------------------------------------------------------
// Monte Carlo conditional oracle
// ---------------------------------------------------------------------------

/// Conditional moment estimates with standard errors from direct in-event
/// sampling.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleStats {
    pub m1: f64,
    pub m1_se: f64,
    pub m2_plus: f64,
    pub m2_plus_se: f64,
    pub trials: usize,
}

/// Estimates `E[z - v'x | event]` and `E[(z - v'x)_+^2 | event]` by sampling
/// the event directly: the projection on the event direction is drawn from
/// the truncated normal via inverse CDF, the orthogonal complement is filled
/// i.i.d. standard normal, and the noise is drawn fresh per trial.
pub fn monte_carlo_conditional_oracle(
    ws: &RegressorSet,
    noise: &NoiseSpec,
    v: ArrayView1<'_, f64>,
    event: &LocalizationEvent,
    trials: usize,
    seed: u64,
) -> Result<OracleStats> {
    let n = ws.n();
    let k = ws.k();
    if v.len() != n || event.direction.len() != n {
        return Err(Error::structural("dimension mismatch"));
    }
    if trials == 0 {
        return Err(Error::structural("need at least one trial"));
    }
    if let Some(d) = noise.dim() {
        if d != k {
            return Err(Error::structural("noise dimension mismatch"));
        }
    }
    let vnorm = v.dot(&v).sqrt();
    if vnorm <= 0.0 {
        return Err(Error::structural("candidate vector must be nonzero"));
    }
    let dir = event.direction.view();

    const TRIAL_BLOCK: usize = 4096;
    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let partials: Vec<(f64, f64, f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, 7, b as u64);
            let rows = TRIAL_BLOCK.min(trials - b * TRIAL_BLOCK);
            let mut x = Array1::<f64>::zeros(n);
            let mut eta = vec![0.0f64; k];
            let mut s1 = 0.0;
            let mut s1_sq = 0.0;
            let mut s2 = 0.0;
            let mut s2_sq = 0.0;
            for _ in 0..rows {
                let p = gauss::sample_truncated(event.lower, event.upper, &mut rng);
                for xi in x.iter_mut() {
                    *xi = rng.sample::<f64, _>(StandardNormal);
                }
                let g_along = x.dot(&dir);
                // Replace the component along the event direction with the
                // truncated draw.
                for (xi, di) in x.iter_mut().zip(dir.iter()) {
                    *xi += (p - g_along) * di;
                }
                sample_noise(noise, &mut rng, &mut eta);
                let mut z = f64::NEG_INFINITY;
                for j in 0..k {
                    let t = ws.row(j).dot(&x) + eta[j];
                    if t > z {
                        z = t;
                    }
                }
                let y = z - v.dot(&x);
                let yp2 = y.max(0.0) * y.max(0.0);
                s1 += y;
                s1_sq += y * y;
                s2 += yp2;
                s2_sq += yp2 * yp2;
            }
            (s1, s1_sq, s2, s2_sq)
        })
        .collect();

    let (s1, s1_sq, s2, s2_sq) = partials
        .into_iter()
        .fold((0.0, 0.0, 0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2, a.3 + p.3));
    let t = trials as f64;
    let m1 = s1 / t;
    let m2 = s2 / t;
    let var1 = (s1_sq / t - m1 * m1).max(0.0);
    let var2 = (s2_sq / t - m2 * m2).max(0.0);
    Ok(OracleStats {
        m1,
        m1_se: (var1 / t).sqrt(),
        m2_plus: m2,
        m2_plus_se: (var2 / t).sqrt(),
        trials,
    })
}

fn sample_noise<R: Rng + ?Sized>(noise: &NoiseSpec, rng: &mut R, eta: &mut [f64]) {
    match noise {
        NoiseSpec::SharedScalar { law } => {
            let xi = sample_scalar(law, rng);
            eta.fill(xi);
        }
        _ => {
            for (j, e) in eta.iter_mut().enumerate() {
                *e = sample_scalar(&noise.marginal(j), rng);
            }
        }
    }
}

fn sample_scalar<R: Rng + ?Sized>(law: &ScalarLaw, rng: &mut R) -> f64 {
    match *law {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GAUSSIAN_PSI2, RADEMACHER_PSI2, UNIFORM_UNIT_PSI2};
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    const E_G_PLUS: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2 pi)

    #[test]
    fn truncated_mean_symmetry_and_support() {
        assert!(truncated_gaussian_mean(f64::NEG_INFINITY, f64::INFINITY).unwrap().abs() < 1e-15);
        for c in [0.5, 1.0, 3.0] {
            assert!(truncated_gaussian_mean(-c, c).unwrap().abs() < 1e-14);
        }
        let m = truncated_gaussian_mean(2.0, 4.0).unwrap();
        assert!((m - 2.3707).abs() < 1e-3, "m = {m}");
        assert!(matches!(
            truncated_gaussian_mean(40.0, 41.0),
            Err(Error::IntervalTooFar { .. })
        ));
    }

    #[test]
    fn truncated_mean_agrees_with_quadrature() {
        // Independent oracle: Simpson quadrature of x phi(x) over [a, b].
        for (a, b) in [(2.0, 4.0), (-1.0, 0.5), (0.0, 1.0), (-3.0, -2.0)] {
            let num = simpson(&|x| x * gauss::pdf(x), a, b, 20_000);
            let den = simpson(&|x| gauss::pdf(x), a, b, 20_000);
            let want = num / den;
            let got = truncated_gaussian_mean(a, b).unwrap();
            assert!((got - want).abs() < 1e-9, "({a},{b}): got {got}, want {want}");
        }
    }

    #[test]
    fn truncated_mean_lies_inside_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: f64 = rng.gen_range(-6.0..5.0);
            let b: f64 = a + rng.gen_range(0.01..4.0);
            let m = truncated_gaussian_mean(a, b).unwrap();
            assert!(m > a && m < b, "mean {m} outside ({a}, {b})");
        }
    }

    #[test]
    fn matched_error_identity_and_swap() {
        let truth = RegressorSet::from_rows(&[vec![1.5, 0.0], vec![0.0, 1.5]], 1.0, 2.0).unwrap();
        let est = vec![array![1.5, 0.0], array![0.0, 1.5]];
        let m = matched_error(&est, &truth).unwrap();
        assert_eq!(m.permutation, vec![0, 1]);
        assert_eq!(m.max_error, 0.0);

        let est = vec![array![0.0, 1.5], array![1.5, 0.0]];
        let m = matched_error(&est, &truth).unwrap();
        assert_eq!(m.permutation, vec![1, 0]);
        assert_eq!(m.max_error, 0.0);
    }

    #[test]
    fn exhaustive_equals_bottleneck_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let k = 3;
            let n = 4;
            let truth_rows: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let truth = RegressorSet::from_rows(&truth_rows, 0.1, 10.0).unwrap();
            let est: Vec<Array1<f64>> = (0..k)
                .map(|_| Array1::from_shape_fn(n, |_| rng.gen_range(-2.0..2.0)))
                .collect();
            let mut dist = Array2::<f64>::zeros((k, k));
            for i in 0..k {
                for j in 0..k {
                    dist[[i, j]] =
                        (&est[i].view() - &truth.row(j)).mapv(|v| v * v).sum().sqrt();
                }
            }
            let a = assignment_cost(&dist, &exhaustive_assignment(&dist));
            let b = assignment_cost(&dist, &bottleneck_assignment(&dist));
            assert!((a - b).abs() < 1e-12, "exhaustive {a} != bottleneck {b}");
        }
    }

    #[test]
    fn subgaussian_bounds_respect_known_laws() {
        // Standard Gaussian with its own Orlicz norm.
        let (e_lb, p_lb) = subgaussian_positive_part_bounds(1.0, GAUSSIAN_PSI2).unwrap();
        assert!(e_lb <= E_G_PLUS, "E[X+] bound {e_lb} exceeds {E_G_PLUS}");
        assert!(p_lb <= 0.5);

        // Uniform on [-1, 1]: Var = 1/3, E[X+] = 1/4.
        let (e_lb, p_lb) = subgaussian_positive_part_bounds(1.0 / 3.0, UNIFORM_UNIT_PSI2).unwrap();
        assert!(e_lb <= 0.25, "uniform bound {e_lb} exceeds 1/4");
        assert!(p_lb <= 0.5);

        // Rademacher: Var = 1, E[X+] = 1/2; sits exactly at the moment cap.
        let (e_lb, p_lb) = subgaussian_positive_part_bounds(1.0, RADEMACHER_PSI2).unwrap();
        assert!(e_lb <= 0.5, "rademacher bound {e_lb} exceeds 1/2");
        assert!(p_lb <= 0.5);

        // Impossible pair: variance beyond K^2 ln 2.
        assert!(matches!(
            subgaussian_positive_part_bounds(1.0, 1.0),
            Err(Error::InconsistentMoments { .. })
        ));
    }

    #[test]
    fn sm_increase_gaussian_closed_form() {
        // X ~ N(0,1), eps = 0.05, Z = 0: the increase is exactly eps^2/2.
        let law = ScalarLaw::Gaussian { sigma: 1.0 };
        let out = sm_increase_oracle(&law, 0.05, 0.0).unwrap();
        assert!((out.increase - 0.00125).abs() < 1e-6, "increase {}", out.increase);
        assert!(out.increase >= out.lemma_bound);
    }

    #[test]
    fn sm_increase_shrinks_with_shift() {
        let law = ScalarLaw::Gaussian { sigma: 1.0 };
        let mut last = f64::INFINITY;
        for &zeta in &[0.0, 0.001, 0.005, 0.02] {
            let out = sm_increase_oracle(&law, 0.05, zeta).unwrap();
            assert!(out.increase < last, "zeta {zeta}: {} !< {last}", out.increase);
            last = out.increase;
        }
    }

    #[test]
    fn sm_increase_uniform_beats_lemma_bound() {
        let law = ScalarLaw::Uniform { half_width: 1.0 };
        let out = sm_increase_oracle(&law, 0.05, 0.0).unwrap();
        assert!(
            out.increase >= out.lemma_bound,
            "increase {} below bound {}",
            out.increase,
            out.lemma_bound
        );
        // Small-eps limit: increase ~ eps^2 Pr(X > 0) = eps^2/2.
        assert!((out.increase - 0.00125).abs() < 2e-4, "increase {}", out.increase);
    }

    #[test]
    fn oracle_matches_known_limits() {
        // k=1, v = w, unit Gaussian noise: m1 ~ 0, m2_plus ~ 1/2.
        let ws = RegressorSet::from_rows(&[vec![1.0, 0.0, 0.0]], 1.0, 2.0).unwrap();
        let noise = NoiseSpec::gaussian(1, 1.0);
        let v = array![1.0, 0.0, 0.0];
        let event = LocalizationEvent::with_bounds(v.clone(), 2.0, 4.0).unwrap();
        let out =
            monte_carlo_conditional_oracle(&ws, &noise, v.view(), &event, 400_000, 29).unwrap();
        assert!(out.m1.abs() < 4.0 * out.m1_se.max(1e-3), "m1 {} se {}", out.m1, out.m1_se);
        assert!(
            (out.m2_plus - 0.5).abs() < 4.0 * out.m2_plus_se.max(1e-3),
            "m2 {} se {}",
            out.m2_plus,
            out.m2_plus_se
        );
    }

    #[test]
    fn oracle_matches_truncated_mean_composition() {
        // k=1, v = 0.5 e1, w = e1, zero noise, event (2,4):
        // m1 = 0.5 * truncated mean on (2,4).
        let ws = RegressorSet::from_rows(&[vec![1.0, 0.0]], 0.4, 2.0).unwrap();
        let noise = NoiseSpec::zero(1);
        let v = array![0.5, 0.0];
        let event = LocalizationEvent::for_vector(v.view(), 1.0, 1, (-4.0f64).exp()).unwrap();
        let out =
            monte_carlo_conditional_oracle(&ws, &noise, v.view(), &event, 300_000, 31).unwrap();
        let want = 0.5 * truncated_gaussian_mean(2.0, 4.0).unwrap();
        assert!(
            (out.m1 - want).abs() < 3.0 * out.m1_se.max(1e-4),
            "m1 {} want {want} se {}",
            out.m1,
            out.m1_se
        );
    }
}
