use alloc::vec::Vec;

use super::encoder::{BuiltinEncoder, EncodedNodes, Encoder, EncoderConfig};
use super::layers::{uniform, xavier_limit, Linear};
use super::lstm::Lstm;
use super::{ModelError, Parameterized, TaskId, TaskOutput};
use crate::autograd::{Graph, NodeId, ParamStore};
use crate::corpus::TokenizedInput;
use crate::tensor::Matrix;

/// Output nodes of one multi-task pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MtlNodes {
    pub encoded: EncodedNodes,
    /// `1 × 2` logits.
    pub h1a: NodeId,
    /// `1 × 2` logits.
    pub h1c: NodeId,
    /// `1 × 1`.
    pub h1b: NodeId,
    /// `1 × 1`.
    pub off2: NodeId,
}

impl MtlNodes {
    pub fn get(&self, task: TaskId) -> NodeId {
        match task {
            TaskId::H1A => self.h1a,
            TaskId::H1B => self.h1b,
            TaskId::H1C => self.h1c,
            TaskId::OFF2 => self.off2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlOutputs {
    pub h1a: [f64; 2],
    pub h1c: [f64; 2],
    pub h1b: f64,
    pub off2: f64,
}

impl MtlOutputs {
    pub fn get(&self, task: TaskId) -> TaskOutput {
        match task {
            TaskId::H1A => TaskOutput::Logits(self.h1a),
            TaskId::H1C => TaskOutput::Logits(self.h1c),
            TaskId::H1B => TaskOutput::Scalar(self.h1b),
            TaskId::OFF2 => TaskOutput::Scalar(self.off2),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h1a
            .iter()
            .chain(&self.h1c)
            .chain([&self.h1b, &self.off2])
            .all(|v| v.is_finite())
    }
}

/// One shared encoder feeding a classification branch (affine map on
/// `[CLS]`, logits for H1A then H1C) and a regression branch (LSTM over all
/// token embeddings, final state mapped to H1B then OFF2).
#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    params: ParamStore,
    encoder: BuiltinEncoder,
    cls_branch: Linear,
    recurrent: Lstm,
    reg_out: Linear,
    seed: u64,
}

impl MtlModel {
    pub fn new(config: EncoderConfig, vocab_size: usize, seed: u64) -> Self {
        let d = config.hidden;
        let mut params = ParamStore::new();
        let encoder = BuiltinEncoder::new(&mut params, "encoder", config, vocab_size, seed);
        // Each logit pair draws from the same stream as the single-task head
        // of that task, so the two families start from identical heads.
        let limit = xavier_limit(d, 2);
        let a = uniform(seed, "head.H1A.weight", d, 2, limit);
        let c = uniform(seed, "head.H1C.weight", d, 2, limit);
        let cls_branch = Linear::with_weight(&mut params, "cls_branch", Matrix::concat_cols(&[&a, &c]));
        let recurrent = Lstm::new(&mut params, "reg_branch.lstm", d, d, seed);
        let reg_out = Linear::new(&mut params, "reg_branch.out", d, 2, seed);
        Self {
            params,
            encoder,
            cls_branch,
            recurrent,
            reg_out,
            seed,
        }
    }

    pub fn reinitialized(&self) -> Self {
        Self::new(*self.encoder.config(), self.encoder.vocab_size(), self.seed)
    }

    pub fn encoder(&self) -> &BuiltinEncoder {
        &self.encoder
    }

    pub fn cls_branch(&self) -> Linear {
        self.cls_branch
    }

    pub fn recurrent(&self) -> Lstm {
        self.recurrent
    }

    pub fn reg_out(&self) -> Linear {
        self.reg_out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Both branches on top of already computed encoder nodes. `positions`
    /// are the rows fed to the recurrent branch, in order.
    pub fn branch_nodes(&self, g: &mut Graph<'_>, encoded: EncodedNodes, positions: &[usize]) -> MtlNodes {
        let logits = self.cls_branch.forward(g, encoded.cls);
        let h1a = g.slice_cols(logits, 0, 2);
        let h1c = g.slice_cols(logits, 2, 2);
        let state = self.recurrent.final_state(g, encoded.tokens, positions);
        let reg = self.reg_out.forward(g, state);
        let h1b = g.slice_cols(reg, 0, 1);
        let off2 = g.slice_cols(reg, 1, 1);
        MtlNodes {
            encoded,
            h1a,
            h1c,
            h1b,
            off2,
        }
    }

    pub fn forward_nodes(&self, g: &mut Graph<'_>, input: &TokenizedInput) -> Result<MtlNodes, ModelError> {
        let encoded = self.encoder.encode_nodes(g, input)?;
        let active: Vec<usize> = input
            .attention_mask
            .iter()
            .take(self.encoder.max_len())
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(i, _)| i)
            .collect();
        Ok(self.branch_nodes(g, encoded, &active))
    }

    pub fn forward(&self, input: &TokenizedInput) -> Result<MtlOutputs, ModelError> {
        let mut g = Graph::new(&self.params);
        let n = self.forward_nodes(&mut g, input)?;
        let pair = |id| {
            let v = g.value(id).data();
            [v[0], v[1]]
        };
        Ok(MtlOutputs {
            h1a: pair(n.h1a),
            h1c: pair(n.h1c),
            h1b: g.value(n.h1b).item(),
            off2: g.value(n.off2).item(),
        })
    }
}

impl Parameterized for MtlModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeling::StmModel;
    use alloc::vec;

    fn small() -> EncoderConfig {
        EncoderConfig {
            hidden: 16,
            heads: 2,
            ff_hidden: 32,
            max_len: 32,
            ..EncoderConfig::default()
        }
    }

    fn input() -> TokenizedInput {
        TokenizedInput {
            token_ids: vec![1, 4, 5, 6, 7],
            attention_mask: vec![1; 5],
            cls_index: 0,
        }
    }

    #[test]
    fn emits_four_outputs_of_correct_arity() {
        let m = MtlModel::new(small(), 10, 3);
        let out = m.forward(&input()).unwrap();
        assert!(out.is_finite());
        for t in TaskId::ALL {
            assert_eq!(out.get(t).values().len(), t.arity());
        }
    }

    #[test]
    fn zeroed_recurrent_branch_emits_output_bias() {
        let mut m = MtlModel::new(small(), 10, 3);
        let out_layer = m.reg_out();
        let ids = m.recurrent().param_ids().into_iter().chain([out_layer.weight]);
        for id in ids.collect::<Vec<_>>() {
            let (r, c) = m.params().value(id).shape();
            *m.params_mut().value_mut(id) = Matrix::zeros(r, c);
        }
        *m.params_mut().value_mut(out_layer.bias) = Matrix::row_vector(vec![1.25, -0.5]);
        let out = m.forward(&input()).unwrap();
        assert_eq!((out.h1b, out.off2), (1.25, -0.5));
    }

    #[test]
    fn classification_logits_ignore_non_cls_rows() {
        let m = MtlModel::new(small(), 10, 3);
        let mut base = Matrix::zeros(5, 16);
        for (i, v) in base.data_mut().iter_mut().enumerate() {
            *v = libm::sin(i as f64 * 0.37);
        }
        // rows 1..5 reversed, row 0 untouched
        let mut permuted = base.clone();
        for r in 1..5 {
            permuted.row_mut(r).copy_from_slice(base.row(5 - r));
        }
        let run = |tokens: &Matrix| {
            let mut g = Graph::new(m.params());
            let t = g.leaf(tokens.clone());
            let cls = g.slice_rows(t, 0, 1);
            let nodes = m.branch_nodes(&mut g, EncodedNodes { tokens: t, cls }, &[0, 1, 2, 3, 4]);
            (
                g.value(nodes.h1a).clone(),
                g.value(nodes.h1c).clone(),
                g.value(nodes.off2).item(),
            )
        };
        let (a0, c0, o0) = run(&base);
        let (a1, c1, o1) = run(&permuted);
        assert_eq!(a0, a1);
        assert_eq!(c0, c1);
        assert_ne!(o0, o1);
    }

    #[test]
    fn classification_head_matches_single_task_initialization() {
        let m = MtlModel::new(small(), 10, 5);
        let s = StmModel::new(TaskId::H1A, small(), 10, 5);
        let mw = m.params().value(m.cls_branch().weight).slice_cols(0, 2);
        assert_eq!(&mw, s.params().value(s.head().weight));
        for (name, v) in s.params().iter().filter(|(n, _)| n.starts_with("encoder.")) {
            assert_eq!(m.params().value(m.params().find(name).unwrap()), v);
        }
    }
}
