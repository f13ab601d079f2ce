//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably for the duration of a
//! forward pass. [`Graph::backward`] returns a [`Tape`] with per-node and
//! per-parameter gradients; the optimizer applies parameter gradients once
//! the graph has been dropped.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Named parameter tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    frozen: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        self.frozen.push(false);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) {
        for (name, flag) in self.names.iter().zip(self.frozen.iter_mut()) {
            if name.starts_with(prefix) {
                *flag = frozen;
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    /// Copies values from `other` for every name present in both stores with
    /// the same shape. Returns the number of tensors copied.
    pub fn copy_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for (name, value) in other.iter() {
            if let Some(id) = self.find(name) {
                if self.values[id.0].shape() == value.shape() {
                    self.values[id.0] = value.clone();
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Overwrites every tensor with the same-named tensor of `saved`. Both
    /// stores must hold exactly the same names and shapes.
    pub fn restore(&mut self, saved: &ParamStore) -> Result<(), String> {
        if saved.names.len() != saved.values.len() || saved.len() != self.len() {
            return Err(format!("expected {} tensors, found {}", self.len(), saved.len()));
        }
        for (name, value) in saved.iter() {
            let (rows, cols) = value.shape();
            if value.data().len() != rows * cols {
                return Err(format!("{name}: {} values for shape {rows}x{cols}", value.data().len()));
            }
            let Some(id) = self.find(name) else {
                return Err(format!("unexpected tensor {name}"));
            };
            if self.values[id.0].shape() != value.shape() {
                return Err(format!(
                    "{name}: shape {rows}x{cols}, expected {:?}",
                    self.values[id.0].shape()
                ));
            }
        }
        for (name, value) in saved.iter() {
            let id = self.find(name).expect("checked above");
            self.values[id.0] = value.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddN(Vec<NodeId>),
    AddRow(NodeId, NodeId),
    AddConst(NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    CrossEntropy(NodeId, usize, Vec<f64>),
    SquaredError(NodeId, f64),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Matrix>,
}

/// A single forward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.params.value(*p),
            (_, Some(v)) => v,
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    /// Input leaf. Gradients reach it but go no further.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Rows of an embedding table.
    pub fn gather(&mut self, table: ParamId, indices: &[usize]) -> NodeId {
        let t = self.params.value(table);
        let mut out = Matrix::zeros(indices.len(), t.cols());
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(Op::Gather(table, indices.to_vec()), out)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulT(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    /// Sum of equally shaped nodes, accumulated left to right.
    pub fn add_n(&mut self, terms: &[NodeId]) -> NodeId {
        assert!(!terms.is_empty(), "add_n of nothing");
        let mut v = self.value(terms[0]).clone();
        for &t in &terms[1..] {
            v.add_assign(self.value(t));
        }
        self.push(Op::AddN(terms.to_vec()), v)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols(), r.cols(), "add_row width mismatch");
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(r.data()) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    /// Adds a constant (no gradient flows into it).
    pub fn add_const(&mut self, a: NodeId, c: &Matrix) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(c);
        self.push(Op::AddConst(a), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.scale_assign(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(libm::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + libm::tanh(GELU_C * (x + 0.044_715 * x * x * x))));
        self.push(Op::Gelu(a), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Row-wise layer normalization with `1 × n` gain and bias.
    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            for (o, v) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = normalized.clone();
        for r in 0..rows {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        self.push(
            Op::LayerNorm {
                input: a,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            out,
        )
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_rows(start, len);
        self.push(Op::SliceRows(a, start), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_cols(start, len);
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&mats);
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Cross-entropy of a `1 × C` logit row against class `target`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let z = self.value(logits);
        assert_eq!(z.rows(), 1, "cross_entropy expects one logit row");
        assert!(target < z.cols(), "cross_entropy target out of range");
        let mut probs = z.data().to_vec();
        softmax_in_place(&mut probs);
        let max = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(z.data().iter().map(|v| libm::exp(v - max)).sum::<f64>());
        let loss = lse - z.data()[target];
        self.push(Op::CrossEntropy(logits, target, probs), Matrix::scalar(loss))
    }

    /// `(a - target)²` for a `1 × 1` node.
    pub fn squared_error(&mut self, a: NodeId, target: f64) -> NodeId {
        let d = self.value(a).item() - target;
        self.push(Op::SquaredError(a, target), Matrix::scalar(d * d))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: NodeId) -> Tape {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        self.backward_with(root, Matrix::scalar(1.0), &[])
    }

    /// Backpropagates `seed` (shaped like `root`) through the graph. Node
    /// gradients are kept for leaves and for the nodes in `retain`.
    pub fn backward_with(&self, root: NodeId, seed: Matrix, retain: &[NodeId]) -> Tape {
        assert_eq!(seed.shape(), self.value(root).shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Matrix>> = vec![None; self.params.len()];
        grads[root.0] = Some(seed);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            let kept = retain.contains(&NodeId(idx)).then(|| g.clone());
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Param(p) => accumulate(&mut param_grads[p.index()], g.clone()),
                Op::Gather(table, indices) => {
                    let shape = self.params.value(*table).shape();
                    let slot = param_grads[table.index()].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
                    for (r, &i) in indices.iter().enumerate() {
                        for (t, v) in slot.row_mut(i).iter_mut().zip(g.row(r)) {
                            *t += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::AddN(terms) => {
                    for t in terms {
                        accumulate(&mut grads[t.0], g.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                    accumulate(&mut grads[row.0], gr);
                }
                Op::AddConst(a) => accumulate(&mut grads[a.0], g),
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, y, |d, v| d * v);
                    let gb = zip_map(&g, x, |d, v| d * v);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale_assign(*s);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("value");
                    accumulate(&mut grads[a.0], zip_map(&g, y, |d, t| d * (1.0 - t * t)));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    accumulate(&mut grads[a.0], zip_map(&g, y, |d, s| d * s * (1.0 - s)));
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads[a.0], zip_map(&g, x, |d, x| d * gelu_grad(x)));
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("value");
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    input,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let (rows, cols) = normalized.shape();
                    let n = cols as f64;
                    let mut d_gamma = Matrix::zeros(1, cols);
                    let mut d_beta = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dxhat = vec![0.0; cols];
                    for (r, &inv) in inv_std.iter().enumerate().take(rows) {
                        let (xh, gr) = (normalized.row(r), g.row(r));
                        for c in 0..cols {
                            d_gamma.data_mut()[c] += gr[c] * xh[c];
                            d_beta.data_mut()[c] += gr[c];
                            dxhat[c] = gr[c] * gv.data()[c];
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let sum_xh: f64 = dxhat.iter().zip(xh).map(|(d, x)| d * x).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv / n * (n * dxhat[c] - sum - xh[c] * sum_xh);
                        }
                    }
                    accumulate(&mut grads[input.0], dx);
                    accumulate(&mut grads[gamma.0], d_gamma);
                    accumulate(&mut grads[beta.0], d_beta);
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let slot = grads[a.0].get_or_insert_with(|| Matrix::zeros(rows, cols));
                    for r in 0..g.rows() {
                        for (o, v) in slot.row_mut(start + r).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let slot = grads[a.0].get_or_insert_with(|| Matrix::zeros(rows, cols));
                    for r in 0..g.rows() {
                        let dst = &mut slot.row_mut(r)[*start..start + g.cols()];
                        for (o, v) in dst.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        accumulate(&mut grads[p.0], g.slice_cols(offset, w));
                        offset += w;
                    }
                }
                Op::CrossEntropy(logits, target, probs) => {
                    let scale = g.item();
                    let mut d = probs.clone();
                    d[*target] -= 1.0;
                    for v in &mut d {
                        *v *= scale;
                    }
                    accumulate(&mut grads[logits.0], Matrix::row_vector(d));
                }
                Op::SquaredError(a, target) => {
                    let diff = self.value(*a).item() - target;
                    accumulate(&mut grads[a.0], Matrix::scalar(2.0 * diff * g.item()));
                }
            }
            grads[idx] = kept;
        }
        Tape {
            nodes: grads,
            params: param_grads,
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Option<Matrix>>,
    params: Vec<Option<Matrix>>,
}

impl Tape {
    /// Gradient at a leaf or retained node, `None` when the root does not
    /// depend on it.
    pub fn node_grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&Matrix> {
        self.params.get(id.index()).and_then(Option::as_ref)
    }

    pub fn into_param_grads(self) -> Gradients {
        Gradients { grads: self.params }
    }
}

/// Per-parameter gradient accumulator, indexed like a [`ParamStore`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(id.index()).and_then(Option::as_ref)
    }

    pub fn merge(&mut self, other: Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (slot, g) in self.grads.iter_mut().zip(other.grads) {
            if let Some(g) = g {
                accumulate(slot, g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(self.grads.iter().flatten().map(Matrix::sum_squares).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Matrix::is_finite)
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044_715 * x * x * x);
    let t = libm::tanh(inner);
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044_715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Matrix)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, m) in values {
            s.add(*n, m.clone());
        }
        s
    }

    /// Central finite differences of `f` with respect to every entry of
    /// parameter `pid`.
    fn numeric_grad(store: &ParamStore, pid: ParamId, f: &dyn Fn(&ParamStore) -> f64) -> Matrix {
        let h = 1e-6;
        let base = store.value(pid).clone();
        let mut out = Matrix::zeros(base.rows(), base.cols());
        for i in 0..base.data().len() {
            let mut plus = store.clone();
            plus.value_mut(pid).data_mut()[i] += h;
            let mut minus = store.clone();
            minus.value_mut(pid).data_mut()[i] -= h;
            out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    fn composite(store: &ParamStore) -> (f64, Gradients) {
        let mut g = Graph::new(store);
        let x = g.gather(ParamId(0), &[2, 0, 1]);
        let w = g.param(ParamId(1));
        let gamma = g.param(ParamId(2));
        let beta = g.param(ParamId(3));
        let h = g.matmul(x, w);
        let h = g.layer_norm(h, gamma, beta, 1e-5);
        let s = g.matmul_t(h, h);
        let a = g.softmax_rows(s);
        let y = g.matmul(a, h);
        let y = g.gelu(y);
        let t = g.tanh(y);
        let sg = g.sigmoid(y);
        let m = g.mul(t, sg);
        let first = g.slice_rows(m, 0, 1);
        let cols = g.slice_cols(m, 1, 2);
        let cols_row = g.slice_rows(cols, 2, 1);
        let cat = g.concat_cols(&[first, cols_row]);
        let lo = g.slice_cols(cat, 0, 2);
        let ce = g.cross_entropy(lo, 1);
        let one = g.slice_cols(cat, 4, 1);
        let se = g.squared_error(one, 0.3);
        let sum = g.add_n(&[ce, se]);
        let loss = g.scale(sum, 0.5);
        let value = g.value(loss).item();
        (value, g.backward(loss).into_param_grads())
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let store = store_with(&[
            ("emb", Matrix::from_vec(3, 2, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7])),
            ("w", Matrix::from_vec(2, 3, vec![0.2, -0.5, 0.9, 0.4, 0.3, -0.6])),
            ("gamma", Matrix::row_vector(vec![1.1, 0.9, 1.2])),
            ("beta", Matrix::row_vector(vec![0.05, -0.1, 0.2])),
        ]);
        let (_, grads) = composite(&store);
        for pid in store.ids() {
            let numeric = numeric_grad(&store, pid, &|s| composite(s).0);
            assert_close(grads.get(pid).unwrap(), &numeric, 1e-6);
        }
    }

    #[test]
    fn add_row_and_add_const_gradients() {
        let store = store_with(&[
            ("a", Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4])),
            ("b", Matrix::row_vector(vec![0.5, -0.5])),
        ]);
        let f = |s: &ParamStore| {
            let mut g = Graph::new(s);
            let a = g.param(ParamId(0));
            let b = g.param(ParamId(1));
            let y = g.add_row(a, b);
            let y = g.add_const(y, &Matrix::filled(2, 2, 1.0));
            let y2 = g.add(y, a);
            let sq = g.mul(y2, y2);
            let r0 = g.slice_rows(sq, 0, 1);
            let r1 = g.slice_rows(sq, 1, 1);
            let s0 = g.slice_cols(r0, 0, 1);
            let s1 = g.slice_cols(r1, 1, 1);
            let loss = g.add(s0, s1);
            (g.value(loss).item(), g.backward(loss).into_param_grads())
        };
        let (_, grads) = f(&store);
        for pid in store.ids() {
            let numeric = numeric_grad(&store, pid, &|s| f(s).0);
            assert_close(grads.get(pid).unwrap(), &numeric, 1e-6);
        }
    }

    #[test]
    fn cross_entropy_of_confident_correct_logits_tends_to_zero() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.leaf(Matrix::row_vector(vec![-20.0, 20.0]));
        let ce = g.cross_entropy(z, 1);
        assert!(g.value(ce).item() < 1e-15);
        let z = g.leaf(Matrix::row_vector(vec![0.0, 0.0]));
        let ce = g.cross_entropy(z, 0);
        assert!((g.value(ce).item() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn frozen_prefix_and_copy_matching() {
        let mut a = store_with(&[("enc.w", Matrix::scalar(1.0)), ("head.w", Matrix::scalar(2.0))]);
        a.set_frozen_prefix("enc.", true);
        assert!(a.is_frozen(ParamId(0)));
        assert!(!a.is_frozen(ParamId(1)));
        let b = store_with(&[("head.w", Matrix::scalar(5.0)), ("x", Matrix::scalar(0.0))]);
        assert_eq!(a.copy_matching(&b), 1);
        assert_eq!(a.value(ParamId(1)).item(), 5.0);
    }
}
