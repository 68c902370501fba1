//! Dense row-major `f64` tensors.
//!
//! Storage is generic over rank, but every differentiable op in this crate
//! works on rank-2 values; rank-1 tensors appear as biases and rank-3 as
//! frame stacks `[frames, tokens, dim]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a rank-2 tensor from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            shape: vec![r, c],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor (or 1 for a rank-1 tensor).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Columns of a rank-2 tensor (or the length of a rank-1 tensor).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data: out,
        }
    }

    /// Contiguous row range `[start, end)` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.cols();
        Self {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
        }
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.data[i * c + start..i * c + end]);
        }
        Self {
            shape: vec![r, w],
            data,
        }
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Self> {
        let c = parts.first().map_or(0, |t| t.cols());
        if parts.iter().any(|t| t.cols() != c) {
            return Err(Error::Dimension("concat_rows: column mismatch".into()));
        }
        let rows = parts.iter().map(|t| t.rows()).sum();
        let mut data = Vec::with_capacity(rows * c);
        for t in parts {
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            shape: vec![rows, c],
            data,
        })
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Self> {
        let r = parts.first().map_or(0, |t| t.rows());
        if parts.iter().any(|t| t.rows() != r) {
            return Err(Error::Dimension("concat_cols: row mismatch".into()));
        }
        let c: usize = parts.iter().map(|t| t.cols()).sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for t in parts {
                data.extend_from_slice(t.row(i));
            }
        }
        Ok(Self {
            shape: vec![r, c],
            data,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a [m,k] · b [k,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `a [m,k] · bᵀ` for `b [n,k]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "matmul_nt {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `aᵀ · b` for `a [k,m]`, `b [k,n]`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "matmul_tn {:?}ᵀ x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b.data[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a.data[p * m + i];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.data.clone();
    for row in out.chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: out,
    }
}
