//! Dense symmetric eigendecomposition (cyclic Jacobi) and a small Cholesky
//! solver. Matrices here are at most a few hundred rows, so simplicity and
//! determinism win over asymptotics.

use crate::{Error, Result};
use ndarray::{Array1, Array2};

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix, sorted by
/// descending eigenvalue. Column `j` of `vectors` pairs with `values[j]`.
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

const MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi eigendecomposition. The input is symmetrized as
/// `(A + A^T)/2` first so rounding asymmetry cannot leak into the rotations.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::structural(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-15 * scale;

    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = off_diagonal_norm(&m);
        if off <= tol {
            return Ok(sorted(m, v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let (c, s) = rotation(m[[p, p]], m[[q, q]], apq);
                apply_rotation(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let off = off_diagonal_norm(&m);
    Err(Error::EigenNonConvergence {
        diagnostics: format!(
            "off-diagonal norm {off:.3e} after {MAX_SWEEPS} sweeps (n = {n}, frobenius = {scale:.3e})"
        ),
    })
}

fn off_diagonal_norm(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += m[[p, q]] * m[[p, q]];
            }
        }
    }
    s.sqrt()
}

fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    (c, t * c)
}

fn apply_rotation(m: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for i in 0..n {
        let mip = m[[i, p]];
        let miq = m[[i, q]];
        m[[i, p]] = c * mip - s * miq;
        m[[i, q]] = s * mip + c * miq;
    }
    for j in 0..n {
        let mpj = m[[p, j]];
        let mqj = m[[q, j]];
        m[[p, j]] = c * mpj - s * mqj;
        m[[q, j]] = s * mpj + c * mqj;
    }
    for i in 0..n {
        let vip = v[[i, p]];
        let viq = v[[i, q]];
        v[[i, p]] = c * vip - s * viq;
        v[[i, q]] = s * vip + c * viq;
    }
}

fn sorted(m: Array2<f64>, v: Array2<f64>) -> SymmetricEigen {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = m[[src, src]];
        // Deterministic sign: largest-magnitude component made positive.
        let mut imax = 0;
        for i in 1..n {
            if v[[i, src]].abs() > v[[imax, src]].abs() {
                imax = i;
            }
        }
        let sign = if v[[imax, src]] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * v[[i, src]];
        }
    }
    SymmetricEigen { values, vectors }
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
/// Fails with a structural error naming the pivot when `A` is not positive
/// definite, so callers can apply a ridge and retry.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::structural("cholesky_solve dimension mismatch"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::structural(format!(
                "cholesky pivot {j} nonpositive ({d:e})"
            )));
        }
        l[[j, j]] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / l[[j, j]];
        }
    }
    // Forward then back substitution.
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_eigen() {
        let m = Array2::from_diag(&array![3.0, 1.0, 1.0, 1.0]);
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.vectors[[0, 0]].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 5, 12] {
            let mut a = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    a[[i, j]] = x;
                    a[[j, i]] = x;
                }
            }
            let e = symmetric_eigen(&a).unwrap();
            // Orthonormality.
            let gram = e.vectors.t().dot(&e.vectors);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - want).abs() < 1e-10);
                }
            }
            // A = V diag(w) V^T.
            let recon = e.vectors.dot(&Array2::from_diag(&e.values)).dot(&e.vectors.t());
            for i in 0..n {
                for j in 0..n {
                    assert!((recon[[i, j]] - a[[i, j]]).abs() < 1e-9);
                }
            }
            // Nonincreasing eigenvalues.
            for i in 1..n {
                assert!(e.values[i - 1] >= e.values[i] - 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = cholesky_solve(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_solve(&a, &array![1.0, 1.0]).is_err());
    }
}
