//! Core of the humor and offense rating toolkit.
//!
//! Everything here is pure computation over in-memory data: records and
//! splits, a small differentiable encoder with single-task and multi-task
//! heads, masked losses and training loops with per-task early stopping,
//! prediction ensembling, and evaluation metrics. File formats, checkpoints
//! and the command line live in the `jestlab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autograd;
pub mod corpus;
pub mod ensembling;
pub mod evaluation;
pub mod modeling;
pub mod seed;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use autograd::{Graph, NodeId, ParamId, ParamStore};
pub use tensor::Matrix;
