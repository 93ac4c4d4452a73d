//! Dense symmetric eigendecomposition (cyclic Jacobi), PSD factorization and
//! a matrix-free conjugate-gradient solver.
//!
//! Keeping these in-crate (rather than binding LAPACK) keeps the whole
//! numerical core generic over the scalar type; the sizes that show up here
//! (K x K local-field covariances, D x D input covariances up to ~1000,
//! small readout systems) are well inside Jacobi territory.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

const MAX_JACOBI_SWEEPS: usize = 64;

/// Symmetric eigendecomposition `a = V diag(vals) V^T`.
///
/// Eigenvalues are returned in descending order, eigenvectors as the columns
/// of the second output. The sign of each eigenvector is fixed so that its
/// largest-magnitude component is nonnegative, which makes the decomposition
/// deterministic and permutation-equivariant.
pub fn sym_eigen<F: Scalar>(a: &Array2<F>) -> (Array1<F>, Array2<F>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigen needs a square matrix");
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }

    // Flat working copies; the rotation loops are the hot path.
    let mut m: Vec<F> = a.iter().cloned().collect();
    let mut v: Vec<F> = vec![F::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = F::one();
    }

    let frob: F = m.iter().map(|x| *x * *x).sum::<F>().sqrt();
    let tol = F::cast(1e-14) * frob.max(F::cast(1e-300));

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = F::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * F::cast(1e-3) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (F::cast(2.0) * apq);
                let t = if theta >= F::zero() {
                    F::one() / (theta + (theta * theta + F::one()).sqrt())
                } else {
                    -F::one() / (-theta + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of the symmetric matrix.
                for i in 0..n {
                    let aip = m[i * n + p];
                    let aiq = m[i * n + q];
                    m[i * n + p] = c * aip - s * aiq;
                    m[i * n + q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = m[p * n + i];
                    let aqi = m[q * n + i];
                    m[p * n + i] = c * api - s * aqi;
                    m[q * n + i] = s * api + c * aqi;
                }
                // Accumulate the eigenvector rotation.
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<F> = (0..n).map(|i| m[i * n + i]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));

    let mut vals = Array1::zeros(n);
    let mut vecs = Array2::zeros((n, n));
    for (col, &idx) in order.iter().enumerate() {
        vals[col] = diag[idx];
        // Sign convention: largest-|.| component nonnegative.
        let mut amax = F::zero();
        let mut smax = F::one();
        for i in 0..n {
            let x = v[i * n + idx];
            if x.abs() > amax {
                amax = x.abs();
                smax = if x >= F::zero() { F::one() } else { -F::one() };
            }
        }
        for i in 0..n {
            vecs[[i, col]] = smax * v[i * n + idx];
        }
    }
    (vals, vecs)
}

/// Factor a symmetric PSD matrix as `L L^T` with `L` of shape `(n, rank)`,
/// clamping eigenvalues below `rank_tol * max_eig` to zero.
///
/// Errors if the most negative eigenvalue is beyond `-neg_tol * max_eig`,
/// i.e. the matrix is not PSD up to round-off.
pub fn psd_sqrt_factor<F: Scalar>(a: &Array2<F>, neg_tol: F) -> Result<Array2<F>> {
    let (vals, vecs) = sym_eigen(a);
    let n = a.nrows();
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let max_eig = vals[0].max(F::zero());
    let floor = -neg_tol * max_eig.max(F::cast(1e-300));
    if vals[n - 1] < floor {
        return Err(Error::NotPsd(format!(
            "eigenvalue {} below tolerance {}",
            vals[n - 1],
            floor
        )));
    }
    let rank_tol = F::cast(1e-14) * max_eig;
    let rank = vals.iter().filter(|&&x| x > rank_tol).count();
    let mut l = Array2::zeros((n, rank));
    for (col, r) in (0..n).filter(|&c| vals[c] > rank_tol).enumerate() {
        let s = vals[r].sqrt();
        for i in 0..n {
            l[[i, col]] = vecs[[i, r]] * s;
        }
    }
    Ok(l)
}

/// Solve `a x = b` for symmetric `a` through the eigendecomposition,
/// dropping modes with eigenvalue at or below `rel_cutoff * max |eig|`
/// (pseudo-inverse semantics).
pub fn pinv_solve_sym<F: Scalar>(a: &Array2<F>, b: &Array1<F>, rel_cutoff: F) -> Array1<F> {
    let (vals, vecs) = sym_eigen(a);
    let n = a.nrows();
    let max_abs = vals.iter().fold(F::zero(), |m, &x| m.max(x.abs()));
    let cutoff = rel_cutoff * max_abs;
    let mut x = Array1::zeros(n);
    for c in 0..n {
        if vals[c].abs() <= cutoff {
            continue;
        }
        let col = vecs.column(c);
        let proj = col.dot(b) / vals[c];
        for i in 0..n {
            x[i] += vecs[[i, c]] * proj;
        }
    }
    x
}

/// Minimum-norm solution of the underdetermined system `g v = y`
/// (`g` is `r x c` with `r <= c`): `v = g^T (g g^T)^+ y`.
pub fn min_norm_lsq<F: Scalar>(g: &Array2<F>, y: &Array1<F>, rel_cutoff: F) -> Array1<F> {
    let gram = g.dot(&g.t());
    let lam = pinv_solve_sym(&gram, y, rel_cutoff);
    g.t().dot(&lam)
}

/// Solve a small dense square system by Gaussian elimination with partial
/// pivoting.
pub fn solve_dense<F: Scalar>(a: &Array2<F>, b: &Array1<F>) -> Result<Array1<F>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let mut m: Vec<F> = a.iter().cloned().collect();
    let mut x: Vec<F> = b.iter().cloned().collect();
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if m[r * n + col].abs() > m[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if m[pivot * n + col].abs() <= F::cast(1e-300) {
            return Err(Error::RankDeficient(format!("singular at column {col}")));
        }
        if pivot != col {
            for c in 0..n {
                m.swap(col * n + c, pivot * n + c);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == F::zero() {
                continue;
            }
            for c in col..n {
                let v = m[col * n + c];
                m[r * n + c] -= f * v;
            }
            let xv = x[col];
            x[r] -= f * xv;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in (col + 1)..n {
            acc -= m[col * n + c] * x[c];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(Array1::from_vec(x))
}

/// Conjugate gradients for a symmetric positive-definite operator given as a
/// closure. Converges to relative residual `rel_tol`.
pub fn cg_solve<F, A>(apply: A, b: &Array1<F>, rel_tol: F, max_iter: usize) -> Result<Array1<F>>
where
    F: Scalar,
    A: Fn(&Array1<F>) -> Array1<F>,
{
    let n = b.len();
    let b_norm = b.dot(b).sqrt();
    if b_norm == F::zero() {
        return Ok(Array1::zeros(n));
    }
    let mut x = Array1::<F>::zeros(n);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    for _ in 0..max_iter {
        if rs.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > F::zero()) {
            return Err(Error::NotPsd(format!(
                "conjugate gradients hit non-positive curvature {pap}"
            )));
        }
        let alpha = rs / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_new = r.dot(&r);
        let beta = rs_new / rs;
        rs = rs_new;
        p = &r + &(p * beta);
    }
    if rs.sqrt() <= rel_tol * b_norm {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            residual: (rs.sqrt() / b_norm).to_f64_lossy(),
            iterations: max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal() {
        let a = array![[3.0f64, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eigen(&a);
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[[0, 0]].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random::<f64>() - 0.5;
                a[[i, j]] = x;
                a[[j, i]] = x;
            }
        }
        let (vals, vecs) = sym_eigen(&a);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for i in 0..n {
            for j in 0..n {
                assert!((recon[[i, j]] - a[[i, j]]).abs() < 1e-10);
            }
        }
        // Orthonormality.
        let gram = vecs.t().dot(&vecs);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psd_factor_clamps_tiny_negatives() {
        let a = array![[1.0f64, 1.0], [1.0, 1.0 - 1e-12]];
        let l = psd_sqrt_factor(&a, 1e-8).unwrap();
        let recon = l.dot(&l.t());
        assert!((recon[[0, 0]] - 1.0).abs() < 1e-9);
        assert!((recon[[0, 1]] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let a = array![[1.0f64, 0.0], [0.0, -0.5]];
        assert!(psd_sqrt_factor(&a, 1e-8).is_err());
    }

    #[test]
    fn cg_matches_direct_solve() {
        let a = array![[4.0f64, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = array![1.0f64, -2.0, 0.5];
        let x = cg_solve(|v| a.dot(v), &b, 1e-12, 100).unwrap();
        let r = &a.dot(&x) - &b;
        assert!(r.dot(&r).sqrt() < 1e-10);
    }

    #[test]
    fn dense_solve_recovers_known_solution() {
        let a = array![[2.0f64, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        let x_true = array![1.0f64, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = solve_dense(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn min_norm_solution_satisfies_system() {
        let g = array![[1.0f64, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let y = array![1.0f64, 2.0];
        let v = min_norm_lsq(&g, &y, 1e-12);
        let gy = g.dot(&v);
        assert!((gy[0] - 1.0).abs() < 1e-12);
        assert!((gy[1] - 2.0).abs() < 1e-12);
    }
}
