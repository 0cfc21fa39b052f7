//! Dense vectors and row-major matrices in 64-bit floating point.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or direction in the latent space.
///
/// Always non-empty with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParameter(
                "latent vector must have dimension >= 1".into(),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(LatentVector(data))
    }

    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "latent vector must have dimension >= 1");
        LatentVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        check_same(self.dim(), other.dim(), "dot")?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, a: f64) -> LatentVector {
        LatentVector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn sub(&self, other: &LatentVector) -> Result<LatentVector> {
        check_same(self.dim(), other.dim(), "sub")?;
        Ok(LatentVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &LatentVector) -> Result<LatentVector> {
        axpy(1.0, other, self)
    }

    /// Unchecked construction for internal hot paths whose inputs are already finite.
    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        LatentVector(data)
    }
}

impl Deref for LatentVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        LatentVector::new(v)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Vec<f64> {
        v.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix data length", rows * cols, data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::dims(format!("matrix row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        DenseMatrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_same(self.cols, other.rows, "matmul inner dimension")?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

fn check_same(expected: usize, actual: usize, context: &str) -> Result<()> {
    if expected != actual {
        return Err(Error::dims(context, expected, actual));
    }
    Ok(())
}

/// `y = m x`.
pub fn matvec(m: &DenseMatrix, x: &LatentVector) -> Result<LatentVector> {
    if m.cols != x.dim() {
        return Err(Error::dims(
            format!("matvec: matrix has {} columns but vector", m.cols),
            m.cols,
            x.dim(),
        ));
    }
    if m.rows == 0 {
        return Err(Error::InvalidParameter("matvec: matrix has no rows".into()));
    }
    let mut y = vec![0.0; m.rows];
    gemv(&m.data, m.rows, m.cols, x, &mut y);
    Ok(LatentVector(y))
}

/// `a x + y`.
pub fn axpy(a: f64, x: &LatentVector, y: &LatentVector) -> Result<LatentVector> {
    check_same(x.dim(), y.dim(), "axpy")?;
    Ok(LatentVector(
        x.0.iter().zip(&y.0).map(|(xi, yi)| a * xi + yi).collect(),
    ))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance, summed in index order.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `y = W x` for a row-major `rows x cols` slice. Overwrites `y`.
#[inline]
pub(crate) fn gemv(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (i, yi) in y.iter_mut().enumerate().take(rows) {
        *yi = dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `y += W x`.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate().take(rows) {
        *yi += dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// `y += Wᵀ g` for a row-major `rows x cols` slice; `y` has `cols` entries.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], y: &mut [f64]) {
    for (i, &gi) in g.iter().enumerate().take(rows) {
        if gi == 0.0 {
            continue;
        }
        for (yj, wij) in y.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *yj += gi * wij;
        }
    }
}

/// `dw += g ⊗ x` (rank-one update of a row-major `g.len() x x.len()` slice).
#[inline]
pub(crate) fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let cols = x.len();
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        for (d, xj) in dw[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *d += gi * xj;
        }
    }
}
