//! Tape-style reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward
//! pass. Parameters bound into the graph become leaves; every op appends a
//! node holding its value, so [`Graph::backward`] is a single reverse sweep
//! over the node list. A graph is single-use and single-threaded.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    MaskRows(Var, Vec<f64>),
    Sum(Var),
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

/// Gradients of a scalar with respect to every trainable parameter the
/// graph touched. Frozen parameters have no entry.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }

    /// Moves gradients into the store's `grad` slots, accumulating.
    pub fn accumulate_into(self, store: &mut ParamStore) {
        for (id, g) in self.by_param {
            let p = store.get_mut(id);
            match &mut p.grad {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(what));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Binds a parameter as a leaf. Binding the same id twice returns the
    /// same variable, so gradients from all uses are summed.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let p = self.store.get(id);
        self.nodes.push(Node {
            value: p.value.clone(),
            op: Op::Leaf,
            requires_grad: p.requires_grad,
            param: Some(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulNt(a, b), rg, "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension(format!(
                "add {:?} + {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` value.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.len() != n || tx.rank() != 2 {
            return Err(Error::Dimension(format!(
                "add_bias {:?} + {:?}",
                tx.shape(),
                tb.shape()
            )));
        }
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(n.max(1)) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        self.push(out, Op::AddBias(x, bias), rg, "add_bias")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, s), rg, "scale")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = tensor::softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg, "softmax_rows")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if start > end || end > t.rows() || t.rank() != 2 {
            return Err(Error::Dimension(format!(
                "slice_rows {start}..{end} of {:?}",
                t.shape()
            )));
        }
        let out = t.slice_rows(start, end);
        let rg = self.rg(x);
        self.push(out, Op::SliceRows(x, start), rg, "slice_rows")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if start > end || end > t.cols() || t.rank() != 2 {
            return Err(Error::Dimension(format!(
                "slice_cols {start}..{end} of {:?}",
                t.shape()
            )));
        }
        let out = t.slice_cols(start, end);
        let rg = self.rg(x);
        self.push(out, Op::SliceCols(x, start), rg, "slice_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let ts: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat_rows(&ts)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let ts: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat_cols(&ts)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Column means, `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        if m == 0 {
            return Err(Error::Dimension("mean_rows of empty tensor".into()));
        }
        let mut out = vec![0.0; n];
        for row in t.data().chunks(n.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let rg = self.rg(x);
        self.push(Tensor::new(vec![1, n], out)?, Op::MeanRows(x), rg, "mean_rows")
    }

    /// Multiplies row `i` by the constant `mask[i]`.
    pub fn mask_rows(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if mask.len() != t.rows() {
            return Err(Error::Dimension(format!(
                "mask of {} rows for {:?}",
                mask.len(),
                t.shape()
            )));
        }
        let n = t.cols();
        let mut out = t.clone();
        for (row, m) in out.data_mut().chunks_mut(n.max(1)).zip(&mask) {
            for v in row {
                *v *= m;
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::MaskRows(x, mask), rg, "mask_rows")
    }

    /// Sum of all entries as a `[1, 1]` value.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::new(vec![1, 1], vec![s])?, Op::Sum(x), rg, "sum")
    }

    /// Mean softmax cross-entropy of `logits [B, C]` against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (b, c) = (t.rows(), t.cols());
        if labels.len() != b || labels.iter().any(|&l| l >= c) {
            return Err(Error::Dimension(format!(
                "cross_entropy: {} labels for logits {:?}",
                labels.len(),
                t.shape()
            )));
        }
        let mut total = 0.0;
        for (row, &label) in t.data().chunks(c).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[label];
        }
        let rg = self.rg(logits);
        self.push(
            Tensor::new(vec![1, 1], vec![total / b as f64])?,
            Op::CrossEntropy(logits, labels.to_vec()),
            rg,
            "cross_entropy",
        )
    }

    /// Reverse sweep from a `[1, 1]` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(self.shape(output), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if node.param.is_some() {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
        }

        let mut by_param = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate().take(output.0 + 1) {
            if let (Some(id), true) = (node.param, node.requires_grad) {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                by_param.insert(id, g);
            }
        }
        Ok(Gradients { by_param })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, tensor::matmul_nt(g, self.value(*b))?);
                }
                if self.rg(*b) {
                    acc(*b, tensor::matmul_tn(self.value(*a), g)?);
                }
            }
            Op::MatMulNt(a, b) => {
                if self.rg(*a) {
                    acc(*a, tensor::matmul(g, self.value(*b))?);
                }
                if self.rg(*b) {
                    acc(*b, tensor::matmul_tn(g, self.value(*a))?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddBias(x, bias) => {
                acc(*x, g.clone());
                if self.rg(*bias) {
                    let n = g.cols();
                    let mut col = vec![0.0; n];
                    for row in g.data().chunks(n.max(1)) {
                        for (c, v) in col.iter_mut().zip(row) {
                            *c += v;
                        }
                    }
                    let shape = self.shape(*bias).to_vec();
                    acc(*bias, Tensor::new(shape, col)?);
                }
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * s)),
            Op::SoftmaxRows(x) => {
                let n = out.cols();
                let mut dx = out.clone();
                for ((drow, yrow), grow) in dx
                    .data_mut()
                    .chunks_mut(n.max(1))
                    .zip(out.data().chunks(n.max(1)))
                    .zip(g.data().chunks(n.max(1)))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(y, gv)| y * gv).sum();
                    for ((d, y), gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d = y * (gv - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::SliceRows(x, start) => {
                let mut dx = Tensor::zeros(self.shape(*x));
                let n = dx.cols();
                dx.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                acc(*x, dx);
            }
            Op::SliceCols(x, start) => {
                let mut dx = Tensor::zeros(self.shape(*x));
                let (n, w) = (dx.cols(), g.cols());
                for i in 0..g.rows() {
                    dx.data_mut()[i * n + start..i * n + start + w].copy_from_slice(g.row(i));
                }
                acc(*x, dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    acc(p, g.slice_rows(offset, offset + r));
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    acc(p, g.slice_cols(offset, offset + c));
                    offset += c;
                }
            }
            Op::MeanRows(x) => {
                let shape = self.shape(*x).to_vec();
                let m = shape[0] as f64;
                let row: Vec<f64> = g.data().iter().map(|v| v / m).collect();
                let data = row.iter().copied().cycle().take(shape.iter().product()).collect();
                acc(*x, Tensor::new(shape, data)?);
            }
            Op::MaskRows(x, mask) => {
                let n = g.cols();
                let mut dx = g.clone();
                for (row, m) in dx.data_mut().chunks_mut(n.max(1)).zip(mask) {
                    for v in row {
                        *v *= m;
                    }
                }
                acc(*x, dx);
            }
            Op::Sum(x) => {
                let s = g.data()[0];
                acc(*x, Tensor::filled(self.shape(*x), s));
            }
            Op::CrossEntropy(logits, labels) => {
                let t = self.value(*logits);
                let (b, c) = (t.rows(), t.cols());
                let mut dx = tensor::softmax_rows(t);
                let scale = g.data()[0] / b as f64;
                for (i, &label) in labels.iter().enumerate() {
                    dx.data_mut()[i * c + label] -= 1.0;
                }
                for v in dx.data_mut() {
                    *v *= scale;
                }
                acc(*logits, dx);
            }
        }
        Ok(())
    }
}
