use alloc::format;

use super::layers::{uniform, xavier_limit};
use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Single-layer, left-to-right LSTM. Gate columns are ordered input, forget,
/// cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    input_weight: ParamId,
    hidden_weight: ParamId,
    bias: ParamId,
    hidden: usize,
}

impl Lstm {
    /// Forget-gate bias starts at 1.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, seed: u64) -> Self {
        let wx = format!("{name}.input_weight");
        let wh = format!("{name}.hidden_weight");
        let input_weight = store.add(
            wx.clone(),
            uniform(seed, &wx, input, 4 * hidden, xavier_limit(input, hidden)),
        );
        let hidden_weight = store.add(
            wh.clone(),
            uniform(seed, &wh, hidden, 4 * hidden, xavier_limit(hidden, hidden)),
        );
        let mut b = Matrix::zeros(1, 4 * hidden);
        for c in hidden..2 * hidden {
            b.set(0, c, 1.0);
        }
        let bias = store.add(format!("{name}.bias"), b);
        Self {
            input_weight,
            hidden_weight,
            bias,
            hidden,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.input_weight, self.hidden_weight, self.bias]
    }

    /// Runs over the rows of `sequence` listed in `positions` and returns the
    /// final hidden state (`1 × hidden`).
    pub fn final_state(&self, g: &mut Graph<'_>, sequence: NodeId, positions: &[usize]) -> NodeId {
        let n = self.hidden;
        let wx = g.param(self.input_weight);
        let wh = g.param(self.hidden_weight);
        let b = g.param(self.bias);
        let mut h = g.leaf(Matrix::zeros(1, n));
        let mut c = g.leaf(Matrix::zeros(1, n));
        for &t in positions {
            let x = g.slice_rows(sequence, t, 1);
            let zx = g.matmul(x, wx);
            let zh = g.matmul(h, wh);
            let z = g.add(zx, zh);
            let z = g.add_row(z, b);
            let i = g.slice_cols(z, 0, n);
            let i = g.sigmoid(i);
            let f = g.slice_cols(z, n, n);
            let f = g.sigmoid(f);
            let cand = g.slice_cols(z, 2 * n, n);
            let cand = g.tanh(cand);
            let o = g.slice_cols(z, 3 * n, n);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            c = g.add(keep, write);
            let ct = g.tanh(c);
            h = g.mul(o, ct);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matches_hand_computed_single_step() {
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", 1, 1, 0);
        let [wx, wh, b] = lstm.param_ids();
        *store.value_mut(wx) = Matrix::row_vector(vec![0.5, -0.3, 0.8, 0.2]);
        *store.value_mut(wh) = Matrix::row_vector(vec![0.1, 0.1, 0.1, 0.1]);
        *store.value_mut(b) = Matrix::row_vector(vec![0.0, 1.0, 0.0, 0.0]);
        let mut g = Graph::new(&store);
        let seq = g.leaf(Matrix::from_vec(1, 1, vec![2.0]));
        let h = lstm.final_state(&mut g, seq, &[0]);
        let s = crate::autograd::sigmoid;
        let c = s(1.0) * libm::tanh(1.6);
        let expected = s(0.4) * libm::tanh(c);
        assert!((g.value(h).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", 3, 2, 0);
        for id in lstm.param_ids() {
            let (r, c) = store.value(id).shape();
            *store.value_mut(id) = Matrix::zeros(r, c);
        }
        let mut g = Graph::new(&store);
        let seq = g.leaf(Matrix::filled(4, 3, 0.7));
        let h = lstm.final_state(&mut g, seq, &[0, 1, 2, 3]);
        assert_eq!(g.value(h).data(), &[0.0, 0.0]);
    }
}
