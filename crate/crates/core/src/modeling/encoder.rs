use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::{uniform, LayerNorm, Linear};
use super::ModelError;
use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::corpus::TokenizedInput;
use crate::tensor::Matrix;

/// Identity string recorded in checkpoints for [`BuiltinEncoder`].
pub const BUILTIN_ENCODER_ID: &str = "builtin-transformer/v1";

/// Graph nodes produced by one encoder pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedNodes {
    /// `T × d` token embeddings.
    pub tokens: NodeId,
    /// `1 × d` embedding at the `[CLS]` position.
    pub cls: NodeId,
}

/// Anything that maps a tokenized input to per-token embeddings plus a
/// `[CLS]` summary, inside a differentiable graph.
pub trait Encoder {
    fn identity(&self) -> &str;

    fn hidden_size(&self) -> usize;

    fn max_len(&self) -> usize;

    fn encode_nodes(&self, g: &mut Graph<'_>, input: &TokenizedInput) -> Result<EncodedNodes, ModelError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub token_embeddings: Matrix,
    pub cls_embedding: Vec<f64>,
}

/// Evaluation-mode encoder pass outside of any training graph.
pub fn encode<E: Encoder + ?Sized>(
    encoder: &E,
    params: &ParamStore,
    input: &TokenizedInput,
) -> Result<EncoderOutput, ModelError> {
    let mut g = Graph::new(params);
    let nodes = encoder.encode_nodes(&mut g, input)?;
    Ok(EncoderOutput {
        token_embeddings: g.value(nodes.tokens).clone(),
        cls_embedding: g.value(nodes.cls).data().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub max_len: usize,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_hidden: 128,
            max_len: 128,
            layer_norm_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    ff_norm: LayerNorm,
}

/// Small trainable post-norm transformer encoder with learned token and
/// position embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinEncoder {
    config: EncoderConfig,
    vocab_size: usize,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    blocks: Vec<Block>,
}

impl BuiltinEncoder {
    /// Registers all parameters under `prefix` (e.g. `"encoder"`).
    pub fn new(store: &mut ParamStore, prefix: &str, config: EncoderConfig, vocab_size: usize, seed: u64) -> Self {
        assert!(
            config.heads > 0 && config.hidden.is_multiple_of(config.heads),
            "hidden size must divide into heads"
        );
        let d = config.hidden;
        let tok_name = format!("{prefix}.token_embedding");
        let token_embedding = store.add(tok_name.clone(), uniform(seed, &tok_name, vocab_size, d, 0.5));
        let pos_name = format!("{prefix}.position_embedding");
        let position_embedding = store.add(pos_name.clone(), uniform(seed, &pos_name, config.max_len, d, 0.5));
        let eps = config.layer_norm_eps;
        let embedding_norm = LayerNorm::new(store, &format!("{prefix}.embedding_norm"), d, eps);
        let blocks = (0..config.layers)
            .map(|i| {
                let p = format!("{prefix}.block{i}");
                Block {
                    query: Linear::new(store, &format!("{p}.query"), d, d, seed),
                    key: Linear::new(store, &format!("{p}.key"), d, d, seed),
                    value: Linear::new(store, &format!("{p}.value"), d, d, seed),
                    attn_out: Linear::new(store, &format!("{p}.attn_out"), d, d, seed),
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), d, eps),
                    ff_in: Linear::new(store, &format!("{p}.ff_in"), d, config.ff_hidden, seed),
                    ff_out: Linear::new(store, &format!("{p}.ff_out"), config.ff_hidden, d, seed),
                    ff_norm: LayerNorm::new(store, &format!("{p}.ff_norm"), d, eps),
                }
            })
            .collect();
        Self {
            config,
            vocab_size,
            token_embedding,
            position_embedding,
            embedding_norm,
            blocks,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn attention(&self, g: &mut Graph<'_>, block: &Block, x: NodeId, mask: Option<&Matrix>) -> NodeId {
        let heads = self.config.heads;
        let dh = self.config.hidden / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let q = block.query.forward(g, x);
        let k = block.key.forward(g, x);
        let v = block.value.forward(g, x);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_t(qh, kh);
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.add_const(scores, m);
            }
            let weights = g.softmax_rows(scores);
            outs.push(g.matmul(weights, vh));
        }
        let joined = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
        block.attn_out.forward(g, joined)
    }
}

/// Additive key mask: large negative score wherever the key is padding.
fn key_mask(mask: &[u8]) -> Option<Matrix> {
    if mask.iter().all(|&m| m == 1) {
        return None;
    }
    let t = mask.len();
    let mut m = Matrix::zeros(t, t);
    for i in 0..t {
        for (j, &keep) in mask.iter().enumerate() {
            if keep == 0 {
                m.set(i, j, -1e9);
            }
        }
    }
    Some(m)
}

impl Encoder for BuiltinEncoder {
    fn identity(&self) -> &str {
        BUILTIN_ENCODER_ID
    }

    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn encode_nodes(&self, g: &mut Graph<'_>, input: &TokenizedInput) -> Result<EncodedNodes, ModelError> {
        if input.token_ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if input.attention_mask.len() != input.token_ids.len() {
            return Err(ModelError::DimensionMismatch {
                expected: input.token_ids.len(),
                actual: input.attention_mask.len(),
            });
        }
        if let Some(&id) = input.token_ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(ModelError::UnknownTokenId {
                id,
                vocab_size: self.vocab_size,
            });
        }
        let max = self.config.max_len;
        let (ids, mask) = if input.token_ids.len() > max {
            log::warn!("sequence of {} tokens truncated to {max}", input.token_ids.len());
            (&input.token_ids[..max], &input.attention_mask[..max])
        } else {
            (&input.token_ids[..], &input.attention_mask[..])
        };
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = g.gather(self.token_embedding, ids);
        let pos = g.gather(self.position_embedding, &positions);
        let x = g.add(tok, pos);
        let mut x = self.embedding_norm.forward(g, x);
        let mask = key_mask(mask);
        for block in &self.blocks {
            let attn = self.attention(g, block, x, mask.as_ref());
            let res = g.add(x, attn);
            x = block.attn_norm.forward(g, res);
            let h = block.ff_in.forward(g, x);
            let h = g.gelu(h);
            let h = block.ff_out.forward(g, h);
            let res = g.add(x, h);
            x = block.ff_norm.forward(g, res);
        }
        let cls = g.slice_rows(x, input.cls_index, 1);
        Ok(EncodedNodes { tokens: x, cls })
    }
}
