//! Linear operators with an explicit adjoint.
//!
//! The solvers only ever need `x ↦ Ax` and `y ↦ Aᵀy`, so anything that can
//! provide that pair (a dense matrix, a sparse matrix, a convolution stencil)
//! plugs in through [`LinearOperator`].

use crate::error::{check_len, Error, Result};

pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `out = A x`. Lengths are the caller's responsibility.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = Aᵀ y`. Lengths are the caller's responsibility.
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    /// Smallest entry of the operator, used to validate nonnegativity.
    fn min_entry(&self) -> f64;

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols(), x.len())?;
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), y.len())?;
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    /// `Aᵀ 1`.
    fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(&vec![1.0; self.rows()], &mut out);
        out
    }
}

/// Dot product with independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    const W: usize = 8;
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; W];
    let mut ca = a.chunks_exact(W);
    let mut cb = b.chunks_exact(W);
    for (p, q) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..W {
            acc[k] += p[k] * q[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| p * q).sum();
    acc.iter().sum::<f64>() + tail
}

/// Row-major dense matrix. A column-major copy is kept so that both products
/// are contiguous dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    data_t: Vec<f64>,
}

fn transpose(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = data[i * cols + j];
        }
    }
    t
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Param(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        check_len(rows * cols, data.len())?;
        let data_t = transpose(rows, cols, &data);
        Ok(Self { rows, cols, data, data_t })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data_t: data.clone(), data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data_t[j * self.rows..(j + 1) * self.rows]
    }
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(self.data_t.chunks_exact(self.rows)) {
            *o = dot(col, y);
        }
    }

    fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Compressed sparse rows, with a transposed copy so both products are
/// gathers.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    fwd: Compressed,
    rev: Compressed,
}

#[derive(Debug, Clone)]
struct Compressed {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Compressed {
    fn gather(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(self.offsets.windows(2)) {
            let (s, e) = (w[0], w[1]);
            *o = self.indices[s..e]
                .iter()
                .zip(&self.values[s..e])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }
}

impl CsrMatrix {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let build = |outer: usize, inner: usize, at: &dyn Fn(usize, usize) -> f64| {
            let mut offsets = Vec::with_capacity(outer + 1);
            let mut indices = Vec::new();
            let mut values = Vec::new();
            offsets.push(0);
            for i in 0..outer {
                for j in 0..inner {
                    let v = at(i, j);
                    if v != 0.0 {
                        indices.push(j);
                        values.push(v);
                    }
                }
                offsets.push(indices.len());
            }
            Compressed { offsets, indices, values }
        };
        let fwd = build(m.rows, m.cols, &|i, j| m.get(i, j));
        let rev = build(m.cols, m.rows, &|j, i| m.get(i, j));
        Self { rows: m.rows, cols: m.cols, fwd, rev }
    }

    pub fn nnz(&self) -> usize {
        self.fwd.values.len()
    }
}

impl LinearOperator for CsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.fwd.gather(x, out);
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.rev.gather(y, out);
    }

    fn min_entry(&self) -> f64 {
        let dense_zero = if self.nnz() < self.rows * self.cols { 0.0 } else { f64::INFINITY };
        self.fwd.values.iter().copied().fold(dense_zero, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        DenseMatrix::new(2, 3, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.5]).unwrap()
    }

    #[test]
    fn dense_products() {
        let a = sample();
        assert_eq!(a.apply(&[1.0, 1.0, 2.0]).unwrap(), vec![5.0, 4.0]);
        assert_eq!(a.adjoint(&[1.0, 2.0]).unwrap(), vec![1.0, 6.0, 3.0]);
        assert_eq!(a.column_sums(), vec![1.0, 3.0, 2.5]);
        assert!(matches!(a.apply(&[1.0]), Err(Error::Size { expected: 3, got: 1 })));
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let a = sample();
        let s = CsrMatrix::from_dense(&a);
        assert_eq!(s.nnz(), 4);
        let x = [0.3, -1.0, 2.0];
        let y = [1.5, -0.25];
        assert_eq!(s.apply(&x).unwrap(), a.apply(&x).unwrap());
        assert_eq!(s.adjoint(&y).unwrap(), a.adjoint(&y).unwrap());
        assert_eq!(s.min_entry(), 0.0);
        assert_eq!(a.min_entry(), 0.0);
    }

    #[test]
    fn adjoint_identity() {
        let a = sample();
        let x = [0.7, 1.1, -0.4];
        let y = [2.0, 0.9];
        let lhs: f64 = a.apply(&x).unwrap().iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.adjoint(&y).unwrap().iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
