use alloc::format;

use super::encoder::{BuiltinEncoder, Encoder, EncoderConfig};
use super::layers::Linear;
use super::{ModelError, Parameterized, SingleTaskModel, TaskId};
use crate::autograd::{Graph, NodeId, ParamStore};
use crate::corpus::TokenizedInput;

/// Encoder plus one affine head on the `[CLS]` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct StmModel {
    params: ParamStore,
    encoder: BuiltinEncoder,
    head: Linear,
    task: TaskId,
    seed: u64,
}

impl StmModel {
    /// Fresh model. Parameters are `encoder.*` and `head.<task>.*`; every
    /// tensor is initialized from its own seed stream.
    pub fn new(task: TaskId, config: EncoderConfig, vocab_size: usize, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let encoder = BuiltinEncoder::new(&mut params, "encoder", config, vocab_size, seed);
        let head = Linear::new(&mut params, &format!("head.{task}"), config.hidden, task.arity(), seed);
        Self {
            params,
            encoder,
            head,
            task,
            seed,
        }
    }

    /// A freshly initialized model with the same shape and seed.
    pub fn reinitialized(&self) -> Self {
        Self::new(self.task, *self.encoder.config(), self.encoder.vocab_size(), self.seed)
    }

    pub fn encoder(&self) -> &BuiltinEncoder {
        &self.encoder
    }

    pub fn head(&self) -> Linear {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Parameterized for StmModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl SingleTaskModel for StmModel {
    type Input = TokenizedInput;

    fn task(&self) -> TaskId {
        self.task
    }

    fn fresh(&self) -> Self {
        self.reinitialized()
    }

    fn forward_node(&self, g: &mut Graph<'_>, input: &TokenizedInput) -> Result<NodeId, ModelError> {
        let enc = self.encoder.encode_nodes(g, input)?;
        Ok(self.head.forward(g, enc.cls))
    }
}
