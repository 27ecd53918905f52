//! Small dense linear-algebra helpers shared across modules.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Solve, SVD};

use crate::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.assign(&(b * aij));
        }
    }
    out
}

/// Column-major vectorization: stacks the columns of `m` into one vector.
pub fn vec_cm(m: &Array2<f64>) -> Array1<f64> {
    let (r, c) = m.dim();
    let mut out = Array1::zeros(r * c);
    for j in 0..c {
        for i in 0..r {
            out[j * r + i] = m[[i, j]];
        }
    }
    out
}

/// Inverse of [`vec_cm`]: reshapes a vector into an `rows × cols` matrix
/// filled column by column.
pub fn unvec_cm(v: &Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    assert_eq!(v.len(), rows * cols, "unvec_cm: length mismatch");
    let mut out = Array2::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[[i, j]] = v[j * rows + i];
        }
    }
    out
}

/// `log|det M|` and the sign of the determinant via a pivoted LU.
pub fn log_abs_det(m: &Array2<f64>) -> Result<(f64, f64)> {
    use ndarray_linalg::Determinant;
    let (sign, ln) = m
        .sln_det()
        .map_err(|e| Error::NumericFailure(format!("determinant: {e}")))?;
    Ok((ln, sign))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &Array2<f64>) -> Result<f64> {
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| Error::NumericFailure(format!("svd: {e}")))?;
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Solves `M x = b` for a square `M`, mapping LAPACK errors to
/// [`Error::NumericFailure`].
pub fn solve_system(m: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    m.solve(b)
        .map_err(|e| Error::NumericFailure(format!("linear solve: {e}")))
}

/// Maximum absolute entry of a vector; 0 for an empty one.
pub fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Median of absolute values; 0 for an empty input.
pub fn median_abs(v: &Array1<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut vals: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_small() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.0, 1.0], [1.0, 0.0]];
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[0, 1]], 1.0);
        assert_eq!(k[[0, 3]], 2.0);
        assert_eq!(k[[3, 0]], 3.0);
    }

    #[test]
    fn vec_unvec_roundtrip() {
        let m = array![[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]];
        let v = vec_cm(&m);
        assert_eq!(v.as_slice().unwrap(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m2 = unvec_cm(&v, 3, 2);
        assert_eq!(m, m2);
    }

    // vec(A B C) = (Cᵀ ⊗ A) vec(B), the identity the KKT Jacobian assembly
    // relies on.
    #[test]
    fn kron_vec_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (m, k, n, p) = (3usize, 4usize, 2usize, 5usize);
            let a = Array2::from_shape_fn((m, k), |_| rng.random_range(-1.0..1.0));
            let b = Array2::from_shape_fn((k, n), |_| rng.random_range(-1.0..1.0));
            let c = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
            let lhs = vec_cm(&a.dot(&b).dot(&c));
            let rhs = kron(&c.t().to_owned(), &a).dot(&vec_cm(&b));
            let err = (&lhs - &rhs).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            assert!(err < 1e-12, "kron identity violated: {err}");
        }
    }

    #[test]
    fn median_of_abs_values() {
        let v = array![-3.0, 1.0, 2.0];
        assert_eq!(median_abs(&v), 2.0);
        let v = array![-4.0, 1.0, 2.0, 3.0];
        assert_eq!(median_abs(&v), 2.5);
    }
}
