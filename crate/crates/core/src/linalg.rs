//! Small shared linear-algebra helpers on top of LAPACK.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eigh, Factorize, Norm, Solve, UPLO};
use num_complex::Complex64;

use crate::error::{EltoError, Result};

/// Eigendecomposition of a symmetric PSD matrix together with the
/// pseudo-inverted square root `C^{-1/2}`, truncating eigenvalues below
/// `rel_tol * max_eig`.
pub struct SymInvSqrt {
    /// Orthonormal eigenvectors, one per column.
    pub vectors: Array2<f64>,
    /// Raw eigenvalues (ascending, as returned by LAPACK).
    pub eigenvalues: Array1<f64>,
    /// `f(d) = d^{-1/2}` applied to kept eigenvalues, zero for truncated.
    pub inv_sqrt_eigs: Array1<f64>,
    /// `C^{-1/2}` as a symmetric matrix.
    pub inv_sqrt: Array2<f64>,
}

pub fn sym_inv_sqrt(c: ArrayView2<f64>, rel_tol: f64) -> Result<SymInvSqrt> {
    let (eigs, vecs) = c.eigh(UPLO::Lower)?;
    let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_tol * max_eig.max(f64::MIN_POSITIVE);
    let inv_sqrt_eigs = eigs.mapv(|d| if d > cut { 1.0 / d.sqrt() } else { 0.0 });
    let scaled = &vecs * &inv_sqrt_eigs; // scales columns
    let inv_sqrt = scaled.dot(&vecs.t());
    Ok(SymInvSqrt { vectors: vecs, eigenvalues: eigs, inv_sqrt_eigs, inv_sqrt })
}

/// Solve `(A + eps I) X = B` for square `A` via LU.
pub fn solve_regularized(a: ArrayView2<f64>, eps: f64, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(EltoError::Internal(format!(
            "solve_regularized shape mismatch: a {}x{}, b {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut m = a.to_owned();
    for i in 0..n {
        m[[i, i]] += eps;
    }
    let f = m.factorize()?;
    let mut out = Array2::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        let x = f.solve(&col.to_owned())?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

/// Symmetrize in place: `S <- (S + S^T) / 2`.
pub fn symmetrize(s: &mut Array2<f64>) {
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
}

/// Cheap condition estimate from the extreme absolute values of the
/// diagonal of the Cholesky-free LU surrogate: here we just use the ratio
/// of extreme row norms, good enough for a diagnostic flag.
pub fn rough_condition(a: ArrayView2<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for row in a.rows() {
        let n = row.norm_l2();
        lo = lo.min(n);
        hi = hi.max(n);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Lift a real matrix into complex entries.
pub fn to_complex(a: ArrayView2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}

/// All entries finite?
pub fn all_finite(a: ArrayView2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn inv_sqrt_of_identity_is_identity() {
        let i3 = Array2::eye(3);
        let s = sym_inv_sqrt(i3.view(), 1e-10).unwrap();
        for (a, b) in s.inv_sqrt.iter().zip(i3.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn inv_sqrt_truncates_null_directions() {
        // rank-1 matrix: [[1,1],[1,1]] has eigenvalues {0, 2}
        let c = array![[1.0, 1.0], [1.0, 1.0]];
        let s = sym_inv_sqrt(c.view(), 1e-10).unwrap();
        // C^{-1/2} C C^{-1/2} should be the projector onto the range
        let p = s.inv_sqrt.dot(&c).dot(&s.inv_sqrt);
        let pp = p.dot(&p);
        for (a, b) in pp.iter().zip(p.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn regularized_solve_matches_direct() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = Array2::eye(2);
        let x = solve_regularized(a.view(), 0.0, b.view()).unwrap();
        let id = a.dot(&x);
        for (i, v) in id.indexed_iter() {
            let want = if i.0 == i.1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, want, epsilon = 1e-12);
        }
    }
}
