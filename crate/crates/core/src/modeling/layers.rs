use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::seed;
use crate::tensor::Matrix;

/// Uniform samples in `[-limit, limit]` drawn from the stream keyed by
/// `init:<name>`.
pub(crate) fn uniform(seed: u64, name: &str, rows: usize, cols: usize, limit: f64) -> Matrix {
    let mut rng = seed::stream(seed, &format!("init:{name}"));
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

pub(crate) fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// `y = x·W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Xavier-uniform weight, zero bias. Parameters are `<name>.weight` and
    /// `<name>.bias`.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, seed: u64) -> Self {
        let wname = format!("{name}.weight");
        let w = uniform(seed, &wname, input, output, xavier_limit(input, output));
        Self::with_weight(store, name, w)
    }

    pub(crate) fn with_weight(store: &mut ParamStore, name: &str, weight: Matrix) -> Self {
        let out = weight.cols();
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    pub fn input_size(&self, store: &ParamStore) -> usize {
        store.value(self.weight).rows()
    }

    pub fn output_size(&self, store: &ParamStore) -> usize {
        store.value(self.weight).cols()
    }
}

/// Row-wise layer norm with learned gain (init 1) and bias (init 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
    eps: f64,
}

impl LayerNorm {
    pub(crate) fn new(store: &mut ParamStore, name: &str, width: usize, eps: f64) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, width)),
            eps,
        }
    }

    pub(crate) fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, self.eps)
    }
}
