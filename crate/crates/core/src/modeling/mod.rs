//! Task registry, the encoder interface and the two model families.
//!
//! A single-task model is an encoder plus one affine head on the `[CLS]`
//! embedding. The multi-task model shares one encoder between an affine
//! classification branch on `[CLS]` and a recurrent regression branch over
//! every token embedding.

mod encoder;
mod layers;
mod lstm;
mod mtl;
mod stm;

pub use encoder::{encode, BuiltinEncoder, EncodedNodes, Encoder, EncoderConfig, EncoderOutput, BUILTIN_ENCODER_ID};
pub use layers::Linear;
pub use lstm::Lstm;
pub use mtl::{MtlModel, MtlNodes, MtlOutputs};
pub use stm::StmModel;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, NodeId, ParamStore};
use crate::corpus::Record;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input has no tokens")]
    EmptyInput,
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    UnknownTokenId { id: usize, vocab_size: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("task {0} is not served by this model")]
    TaskMismatch(TaskId),
    #[error("output arity {actual} does not match task {task} (expects {expected})")]
    ArityMismatch {
        task: TaskId,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

/// The four subtasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    /// Is the text humorous?
    H1A,
    /// Humor rating of a humorous text.
    H1B,
    /// Is the humor controversial?
    H1C,
    /// Offense rating.
    OFF2,
}

/// Target value of one record for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::H1A, TaskId::H1B, TaskId::H1C, TaskId::OFF2];

    pub fn kind(self) -> TaskKind {
        match self {
            TaskId::H1A | TaskId::H1C => TaskKind::Classification,
            TaskId::H1B | TaskId::OFF2 => TaskKind::Regression,
        }
    }

    pub fn is_classification(self) -> bool {
        self.kind() == TaskKind::Classification
    }

    /// Width of the head output: two logits or one scalar.
    pub fn arity(self) -> usize {
        match self.kind() {
            TaskKind::Classification => 2,
            TaskKind::Regression => 1,
        }
    }

    /// Tasks labelled only for humorous texts.
    pub fn requires_humor(self) -> bool {
        matches!(self, TaskId::H1B | TaskId::H1C)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::H1A => "H1A",
            TaskId::H1B => "H1B",
            TaskId::H1C => "H1C",
            TaskId::OFF2 => "OFF2",
        }
    }

    /// Column-group name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            TaskId::H1A => "Task1-a",
            TaskId::H1B => "Task1-b",
            TaskId::H1C => "Task1-c",
            TaskId::OFF2 => "Task2",
        }
    }

    /// Name of the early-stopping metric for this task.
    pub fn metric_name(self) -> &'static str {
        match self.kind() {
            TaskKind::Classification => "f_score",
            TaskKind::Regression => "rmse",
        }
    }

    /// The record's label for this task, `None` when masked.
    pub fn target(self, record: &Record) -> Option<Target> {
        match self {
            TaskId::H1A => Some(Target::Class(usize::from(record.is_humor))),
            TaskId::H1B => record.humor_rating.filter(|_| record.is_humor).map(Target::Value),
            TaskId::H1C => record
                .humor_controversy
                .filter(|_| record.is_humor)
                .map(|c| Target::Class(usize::from(c))),
            TaskId::OFF2 => Some(Target::Value(record.offense_rating)),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "H1A" | "1A" | "TASK1-A" | "TASK1A" => Ok(TaskId::H1A),
            "H1B" | "1B" | "TASK1-B" | "TASK1B" => Ok(TaskId::H1B),
            "H1C" | "1C" | "TASK1-C" | "TASK1C" => Ok(TaskId::H1C),
            "OFF2" | "2" | "TASK2" => Ok(TaskId::OFF2),
            _ => Err(alloc::format!("unknown task `{s}`")),
        }
    }
}

/// Argmax of two logits, ties going to class 1.
pub fn predict_class(logits: &[f64]) -> usize {
    debug_assert_eq!(logits.len(), 2);
    usize::from(logits[1] >= logits[0])
}

/// Raw output of a model for one task on one input.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutput {
    Logits([f64; 2]),
    Scalar(f64),
}

impl TaskOutput {
    pub fn from_slice(task: TaskId, values: &[f64]) -> Result<Self, ModelError> {
        match (task.kind(), values) {
            (TaskKind::Classification, [a, b]) => Ok(TaskOutput::Logits([*a, *b])),
            (TaskKind::Regression, [v]) => Ok(TaskOutput::Scalar(*v)),
            _ => Err(ModelError::ArityMismatch {
                task,
                expected: task.arity(),
                actual: values.len(),
            }),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            TaskOutput::Logits(l) => l.to_vec(),
            TaskOutput::Scalar(v) => alloc::vec![*v],
        }
    }

    /// The exported prediction: class label for logits, value otherwise.
    pub fn prediction(&self) -> f64 {
        match self {
            TaskOutput::Logits(l) => predict_class(l) as f64,
            TaskOutput::Scalar(v) => *v,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// A model that owns its parameters.
pub trait Parameterized {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

/// A model emitting one task's output node, trainable by the single-task
/// loop. `Input` is what one example is tokenized into.
pub trait SingleTaskModel: Parameterized {
    type Input;

    fn task(&self) -> TaskId;

    /// Same architecture and seed with freshly initialized parameters.
    fn fresh(&self) -> Self
    where
        Self: Sized;

    fn forward_node(&self, g: &mut Graph<'_>, input: &Self::Input) -> Result<NodeId, ModelError>;

    fn predict(&self, input: &Self::Input) -> Result<TaskOutput, ModelError> {
        let mut g = Graph::new(self.params());
        let out = self.forward_node(&mut g, input)?;
        TaskOutput::from_slice(self.task(), g.value(out).data())
    }
}
