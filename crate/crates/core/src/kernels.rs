//! Kernel evaluation, Gram matrices, and empirical centering.
//!
//! Everything downstream (realization, operators, filtering, mode
//! decomposition) is built on top of these primitives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelKind {
    Rbf,
    Linear,
}

/// A positive definite kernel. RBF uses the convention
/// `k(a, b) = exp(-gamma * ||a - b||^2)` with `gamma` stored as `bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(EltoError::InvalidArgument(format!(
                "RBF bandwidth must be a positive finite real, got {gamma}"
            )));
        }
        Ok(KernelSpec { kind: KernelKind::Rbf, bandwidth: gamma })
    }

    pub fn linear() -> Self {
        KernelSpec { kind: KernelKind::Linear, bandwidth: 1.0 }
    }

    /// Evaluate the kernel on two vectors of equal dimension.
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
        if a.len() != b.len() {
            return Err(EltoError::InvalidArgument(format!(
                "kernel arguments have mismatched dimensions {} vs {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self.kind {
            KernelKind::Rbf => {
                let mut d2 = 0.0;
                for (x, y) in a.iter().zip(b.iter()) {
                    let d = x - y;
                    d2 += d * d;
                }
                (-self.bandwidth * d2).exp()
            }
            KernelKind::Linear => a.dot(&b),
        }
    }
}

/// Kernel evaluation `k(a, b)`.
pub fn eval_kernel(spec: &KernelSpec, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    spec.eval(a, b)
}

/// A (cross-)Gram matrix with provenance tags for its row and column
/// sample sets. When the tags coincide the matrix is a self-Gram and is
/// symmetric positive semidefinite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub row_source: String,
    pub col_source: String,
}

impl GramMatrix {
    pub fn is_self_gram(&self) -> bool {
        self.row_source == self.col_source
    }
}

/// Build the Gram matrix `values[i][j] = k(rows[i], cols[j])`. Samples are
/// the rows of the input matrices.
pub fn gram(
    spec: &KernelSpec,
    rows: ArrayView2<f64>,
    cols: ArrayView2<f64>,
    row_source: &str,
    col_source: &str,
) -> Result<GramMatrix> {
    if rows.nrows() == 0 || cols.nrows() == 0 {
        return Err(EltoError::InvalidArgument("empty sample set for Gram matrix".into()));
    }
    if rows.ncols() != cols.ncols() {
        return Err(EltoError::InvalidArgument(format!(
            "Gram sample sets have mismatched feature dimensions {} vs {}",
            rows.ncols(),
            cols.ncols()
        )));
    }
    let mut values = Array2::zeros((rows.nrows(), cols.nrows()));
    for (i, ri) in rows.rows().into_iter().enumerate() {
        for (j, cj) in cols.rows().into_iter().enumerate() {
            values[[i, j]] = spec.eval_unchecked(ri, cj);
        }
    }
    Ok(GramMatrix {
        values,
        row_source: row_source.to_string(),
        col_source: col_source.to_string(),
    })
}

/// Plain self-Gram over one sample set (rows of `samples`).
pub fn self_gram(spec: &KernelSpec, samples: ArrayView2<f64>, source: &str) -> Result<Array2<f64>> {
    Ok(gram(spec, samples, samples, source, source)?.values)
}

/// The empirical centering matrix `Q = I - (1/n) 1 1^T`.
pub fn centering_matrix(n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(EltoError::InvalidArgument("centering matrix requires n >= 1".into()));
    }
    let mut q = Array2::from_elem((n, n), -1.0 / n as f64);
    for i in 0..n {
        q[[i, i]] += 1.0;
    }
    Ok(q)
}

/// Subtract the column mean from each column in place; equivalent to a
/// left-multiplication by `centering_matrix(nrows)`.
pub fn center_columns(m: &mut Array2<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Evaluate a kernel section vector `[k(rows[0], y), ..., k(rows[n-1], y)]`.
pub fn section(spec: &KernelSpec, rows: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    if rows.ncols() != y.len() {
        return Err(EltoError::InvalidArgument(format!(
            "kernel section dimension mismatch {} vs {}",
            rows.ncols(),
            y.len()
        )));
    }
    Ok(Array1::from_iter(rows.rows().into_iter().map(|r| spec.eval_unchecked(r, y))))
}
