//! Masked losses, optimizers, early stopping and the training loops.
//!
//! Single-task training picks the epoch count `n` on a validation split and
//! restores the parameters of that epoch; [`retrain_full`] then trains a
//! fresh model for exactly `n` epochs on merged data. Multi-task training
//! optimizes the weighted sum of the four masked task losses and keeps one
//! early-stopping state and one best checkpoint per task.

mod early_stop;
mod loss;
mod optim;

pub use early_stop::{replay, Direction, EarlyStopState, MultiTaskStopper, Observation};
pub use loss::{compute_task_loss, task_loss_node, TaskLoss};
pub use optim::{clip_global_norm, Optimizer, OptimizerFamily};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, NodeId};
use crate::corpus::{tokenize_with, Dataset, Record, Stopwords, TokenizedInput, Vocab};
use crate::evaluation::{self, EvalError};
use crate::modeling::{ModelError, MtlModel, Parameterized, SingleTaskModel, TaskId, TaskKind, TaskOutput};
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}{}", task.map(|t| format!(", task {t}")).unwrap_or_default())]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        task: Option<TaskId>,
    },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("{outputs} outputs for {records} records")]
    BatchMismatch { outputs: usize, records: usize },
    #[error("output of width {actual} does not fit task {task}")]
    ArityMismatch { task: TaskId, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Per-task multipliers of the multi-task sum loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskWeights {
    pub h1a: f64,
    pub h1b: f64,
    pub h1c: f64,
    pub off2: f64,
}

impl TaskWeights {
    pub const UNIFORM: Self = Self {
        h1a: 1.0,
        h1b: 1.0,
        h1c: 1.0,
        off2: 1.0,
    };

    /// Weight 1 on `task`, 0 elsewhere.
    pub fn only(task: TaskId) -> Self {
        let mut w = Self {
            h1a: 0.0,
            h1b: 0.0,
            h1c: 0.0,
            off2: 0.0,
        };
        *w.get_mut(task) = 1.0;
        w
    }

    pub fn get(&self, task: TaskId) -> f64 {
        match task {
            TaskId::H1A => self.h1a,
            TaskId::H1B => self.h1b,
            TaskId::H1C => self.h1c,
            TaskId::OFF2 => self.off2,
        }
    }

    fn get_mut(&mut self, task: TaskId) -> &mut f64 {
        match task {
            TaskId::H1A => &mut self.h1a,
            TaskId::H1B => &mut self.h1b,
            TaskId::H1C => &mut self.h1c,
            TaskId::OFF2 => &mut self.off2,
        }
    }
}

impl Default for TaskWeights {
    fn default() -> Self {
        Self::UNIFORM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub optimizer: OptimizerFamily,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Multi-task loss weights; ignored by single-task training.
    pub task_weights: TaskWeights,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::stm()
    }
}

impl TrainingConfig {
    /// AdamW at 2e-5 with 0.01 decoupled decay.
    pub fn stm() -> Self {
        Self {
            learning_rate: 2e-5,
            max_epochs: 10,
            patience: 2,
            batch_size: 16,
            seed: 0,
            weight_decay: 0.01,
            optimizer: OptimizerFamily::AdamW,
            grad_clip: Some(1.0),
            task_weights: TaskWeights::UNIFORM,
        }
    }

    /// Adam at 2e-5, no decay.
    pub fn mtl() -> Self {
        Self {
            weight_decay: 0.0,
            optimizer: OptimizerFamily::Adam,
            ..Self::stm()
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if self.grad_clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        if TaskId::ALL
            .iter()
            .any(|&t| self.task_weights.get(t).is_nan() || self.task_weights.get(t) < 0.0)
        {
            return bad("task weights must be non-negative");
        }
        Ok(())
    }

    fn optimizer(&self) -> Optimizer {
        Optimizer::new(self.optimizer, self.learning_rate, self.weight_decay)
    }
}

/// A record with its model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<I> {
    pub record: Record,
    pub input: I,
}

/// Tokenizes every record of `dataset`.
pub fn prepare(dataset: &Dataset, vocab: &Vocab, stopwords: Option<&Stopwords>) -> Vec<Example<TokenizedInput>> {
    dataset
        .records()
        .iter()
        .map(|r| Example {
            record: r.clone(),
            input: tokenize_with(&r.text, stopwords, vocab),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Fit,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Fit => "fit",
            Split::Val => "val",
        }
    }
}

/// One line of the training log: `epoch,task,split,metric_name,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub task: TaskId,
    pub split: Split,
    pub metric: &'static str,
    pub value: f64,
}

/// Epochs covered by a history.
pub fn epochs_in(history: &[HistoryEntry]) -> usize {
    history.iter().map(|h| h.epoch).max().unwrap_or(0)
}

/// Example order for one epoch.
fn batch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::stream(seed, &format!("batches:{epoch}")));
    idx
}

fn apply(
    params: &mut crate::autograd::ParamStore,
    optimizer: &mut Optimizer,
    config: &TrainingConfig,
    mut grads: Gradients,
    epoch: usize,
    batch: usize,
) -> Result<(), TrainingError> {
    if !grads.is_finite() {
        return Err(TrainingError::NonFiniteLoss {
            epoch,
            batch,
            task: None,
        });
    }
    if let Some(max) = config.grad_clip {
        clip_global_norm(&mut grads, max);
    }
    optimizer.step(params, &grads);
    Ok(())
}

/// Per-epoch fit statistics.
#[derive(Debug, Clone, Default)]
struct EpochStats {
    loss_sum: BTreeMap<TaskId, f64>,
    batches: BTreeMap<TaskId, usize>,
    masked: BTreeMap<TaskId, usize>,
}

impl EpochStats {
    fn record(&mut self, task: TaskId, loss: Option<f64>) {
        match loss {
            Some(l) => {
                *self.loss_sum.entry(task).or_default() += l;
                *self.batches.entry(task).or_default() += 1;
            }
            None => *self.masked.entry(task).or_default() += 1,
        }
    }

    fn flush(&self, epoch: usize, tasks: &[TaskId], history: &mut Vec<HistoryEntry>) {
        for &task in tasks {
            if let Some(&n) = self.batches.get(&task) {
                history.push(HistoryEntry {
                    epoch,
                    task,
                    split: Split::Fit,
                    metric: "loss",
                    value: self.loss_sum[&task] / n as f64,
                });
            }
            if let Some(&m) = self.masked.get(&task) {
                history.push(HistoryEntry {
                    epoch,
                    task,
                    split: Split::Fit,
                    metric: "masked_batches",
                    value: m as f64,
                });
            }
        }
    }
}

fn stm_epoch<M: SingleTaskModel>(
    model: &mut M,
    optimizer: &mut Optimizer,
    examples: &[Example<M::Input>],
    config: &TrainingConfig,
    epoch: usize,
    history: &mut Vec<HistoryEntry>,
) -> Result<(), TrainingError> {
    let task = model.task();
    let order = batch_order(examples.len(), config.seed, epoch);
    let mut stats = EpochStats::default();
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let grads = {
            let mut g = Graph::new(model.params());
            let mut outs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                outs.push(model.forward_node(&mut g, &examples[i].input)?);
            }
            let records: Vec<&Record> = chunk.iter().map(|&i| &examples[i].record).collect();
            let Some((loss, _)) = task_loss_node(&mut g, task, &outs, &records)? else {
                stats.record(task, None);
                continue;
            };
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(TrainingError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    task: Some(task),
                });
            }
            stats.record(task, Some(value));
            g.backward(loss).into_param_grads()
        };
        apply(model.params_mut(), optimizer, config, grads, epoch, b)?;
    }
    stats.flush(epoch, &[task], history);
    Ok(())
}

/// Exported prediction for each example: class label or raw value.
pub fn predictions<M: SingleTaskModel>(
    model: &M,
    examples: &[Example<M::Input>],
) -> Result<Vec<TaskOutput>, ModelError> {
    examples.iter().map(|e| model.predict(&e.input)).collect()
}

/// Validation metric (F-score or RMSE) over the examples labelled for
/// `task`. `None` when no example carries a label.
pub fn task_metric(task: TaskId, outputs: &[TaskOutput], records: &[&Record]) -> Result<Option<f64>, EvalError> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (out, r) in outputs.iter().zip(records) {
        let Some(target) = task.target(r) else { continue };
        pred.push(out.prediction());
        gold.push(match target {
            crate::modeling::Target::Class(c) => c as f64,
            crate::modeling::Target::Value(v) => v,
        });
    }
    if pred.is_empty() {
        return Ok(None);
    }
    Ok(Some(match task.kind() {
        TaskKind::Classification => {
            let p = evaluation::to_labels(&pred)?;
            let g = evaluation::to_labels(&gold)?;
            evaluation::f_score(&p, &g)?.value
        }
        TaskKind::Regression => evaluation::rmse(&pred, &gold)?,
    }))
}

fn stm_val_metric<M: SingleTaskModel>(model: &M, val: &[Example<M::Input>]) -> Result<f64, TrainingError> {
    let outs = predictions(model, val)?;
    let records: Vec<&Record> = val.iter().map(|e| &e.record).collect();
    task_metric(model.task(), &outs, &records)?
        .ok_or_else(|| TrainingError::DegenerateSplit(format!("validation set has no labels for {}", model.task())))
}

/// Result of single-task training.
#[derive(Debug, Clone)]
pub struct StmRun<M> {
    /// Parameters of the best epoch (final epoch for [`retrain_full`]).
    pub model: M,
    /// Selected epoch count `n` (1-based).
    pub best_epoch: usize,
    pub best_metric: Option<f64>,
    pub epochs_run: usize,
    pub history: Vec<HistoryEntry>,
}

/// Trains up to `max_epochs`, scoring the validation set after every epoch
/// and stopping once `patience` epochs pass without improvement. Returns the
/// parameters of the best epoch.
pub fn train_stm<M>(
    mut model: M,
    fit: &[Example<M::Input>],
    val: &[Example<M::Input>],
    config: &TrainingConfig,
) -> Result<StmRun<M>, TrainingError>
where
    M: SingleTaskModel + Clone,
{
    config.validate()?;
    if fit.is_empty() || val.is_empty() {
        return Err(TrainingError::DegenerateSplit(format!(
            "fit has {} and val has {} examples",
            fit.len(),
            val.len()
        )));
    }
    let task = model.task();
    let mut optimizer = config.optimizer();
    let mut stopper = EarlyStopState::new(Direction::for_task(task), config.patience);
    let mut history = Vec::new();
    let mut best = model.clone();
    for epoch in 1..=config.max_epochs {
        stm_epoch(&mut model, &mut optimizer, fit, config, epoch, &mut history)?;
        let metric = stm_val_metric(&model, val)?;
        history.push(HistoryEntry {
            epoch,
            task,
            split: Split::Val,
            metric: task.metric_name(),
            value: metric,
        });
        let obs = stopper.observe(metric);
        log::debug!("{task} epoch {epoch}: val {} = {metric:.4}", task.metric_name());
        if obs.improved {
            best = model.clone();
        }
        if obs.exhausted {
            break;
        }
    }
    Ok(StmRun {
        model: best,
        best_epoch: stopper.best_epoch().unwrap_or(1),
        best_metric: stopper.best(),
        epochs_run: stopper.epoch(),
        history,
    })
}

/// Trains a fresh copy of `blueprint` for exactly `epochs` epochs on all of
/// `merged`, without validation, and returns the final parameters.
pub fn retrain_full<M>(
    blueprint: &M,
    merged: &[Example<M::Input>],
    epochs: usize,
    config: &TrainingConfig,
) -> Result<StmRun<M>, TrainingError>
where
    M: SingleTaskModel + Clone,
{
    if epochs == 0 {
        return Err(TrainingError::InvalidConfig("retraining needs n >= 1 epochs".into()));
    }
    config.validate()?;
    if merged.is_empty() {
        return Err(TrainingError::DegenerateSplit("no examples to retrain on".into()));
    }
    let mut model = blueprint.fresh();
    let mut optimizer = config.optimizer();
    let mut history = Vec::new();
    for epoch in 1..=epochs {
        stm_epoch(&mut model, &mut optimizer, merged, config, epoch, &mut history)?;
    }
    Ok(StmRun {
        model,
        best_epoch: epochs,
        best_metric: None,
        epochs_run: epochs,
        history,
    })
}

/// Best checkpoint of one task in a multi-task run.
#[derive(Debug, Clone)]
pub struct TaskCheckpoint {
    pub epoch: usize,
    pub metric: f64,
    pub model: MtlModel,
}

#[derive(Debug, Clone)]
pub struct MtlRun {
    pub checkpoints: BTreeMap<TaskId, TaskCheckpoint>,
    pub final_model: MtlModel,
    pub epochs_run: usize,
    pub history: Vec<HistoryEntry>,
}

impl MtlRun {
    pub fn best_epochs(&self) -> BTreeMap<TaskId, usize> {
        self.checkpoints.iter().map(|(t, c)| (*t, c.epoch)).collect()
    }
}

fn mtl_epoch(
    model: &mut MtlModel,
    optimizer: &mut Optimizer,
    examples: &[Example<TokenizedInput>],
    config: &TrainingConfig,
    epoch: usize,
    history: &mut Vec<HistoryEntry>,
) -> Result<(), TrainingError> {
    let order = batch_order(examples.len(), config.seed, epoch);
    let mut stats = EpochStats::default();
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let grads = {
            let mut g = Graph::new(model.params());
            let mut nodes = Vec::with_capacity(chunk.len());
            for &i in chunk {
                nodes.push(model.forward_nodes(&mut g, &examples[i].input)?);
            }
            let records: Vec<&Record> = chunk.iter().map(|&i| &examples[i].record).collect();
            let mut terms: Vec<NodeId> = Vec::new();
            for task in TaskId::ALL {
                let outs: Vec<NodeId> = nodes.iter().map(|n| n.get(task)).collect();
                let loss = task_loss_node(&mut g, task, &outs, &records)?;
                let value = loss.map(|(node, _)| g.value(node).item());
                if value.is_some_and(|v| !v.is_finite()) {
                    return Err(TrainingError::NonFiniteLoss {
                        epoch,
                        batch: b,
                        task: Some(task),
                    });
                }
                stats.record(task, value);
                let weight = config.task_weights.get(task);
                if let Some((node, _)) = loss.filter(|_| weight != 0.0) {
                    terms.push(g.scale(node, weight));
                }
            }
            if terms.is_empty() {
                continue;
            }
            let total = g.add_n(&terms);
            g.backward(total).into_param_grads()
        };
        apply(model.params_mut(), optimizer, config, grads, epoch, b)?;
    }
    stats.flush(epoch, &TaskId::ALL, history);
    Ok(())
}

/// Per-task validation metrics of a multi-task model.
pub fn mtl_val_metrics(
    model: &MtlModel,
    val: &[Example<TokenizedInput>],
) -> Result<BTreeMap<TaskId, Option<f64>>, TrainingError> {
    let mut outputs = Vec::with_capacity(val.len());
    for e in val {
        outputs.push(model.forward(&e.input)?);
    }
    let records: Vec<&Record> = val.iter().map(|e| &e.record).collect();
    let mut metrics = BTreeMap::new();
    for task in TaskId::ALL {
        let outs: Vec<TaskOutput> = outputs.iter().map(|o| o.get(task)).collect();
        metrics.insert(task, task_metric(task, &outs, &records)?);
    }
    Ok(metrics)
}

/// Multi-task training with one early-stopping state per task. Halts when
/// every task has gone `patience` epochs without improving and returns each
/// task's best-epoch checkpoint.
pub fn train_mtl(
    mut model: MtlModel,
    fit: &[Example<TokenizedInput>],
    val: &[Example<TokenizedInput>],
    config: &TrainingConfig,
) -> Result<MtlRun, TrainingError> {
    config.validate()?;
    if fit.is_empty() || val.is_empty() {
        return Err(TrainingError::DegenerateSplit(format!(
            "fit has {} and val has {} examples",
            fit.len(),
            val.len()
        )));
    }
    if !val.iter().any(|e| e.record.is_humor) {
        return Err(TrainingError::DegenerateSplit(
            "validation set has no humorous records".into(),
        ));
    }
    let mut optimizer = config.optimizer();
    let mut stopper = MultiTaskStopper::new(&TaskId::ALL, config.patience);
    let mut checkpoints: BTreeMap<TaskId, TaskCheckpoint> = BTreeMap::new();
    let mut history = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        mtl_epoch(&mut model, &mut optimizer, fit, config, epoch, &mut history)?;
        epochs_run = epoch;
        let metrics: BTreeMap<TaskId, f64> = mtl_val_metrics(&model, val)?
            .into_iter()
            .map(|(t, m)| (t, m.expect("every task is labelled in a humorous val set")))
            .collect();
        for (&task, &value) in &metrics {
            history.push(HistoryEntry {
                epoch,
                task,
                split: Split::Val,
                metric: task.metric_name(),
                value,
            });
        }
        for task in stopper.observe(&metrics) {
            checkpoints.insert(
                task,
                TaskCheckpoint {
                    epoch,
                    metric: metrics[&task],
                    model: model.clone(),
                },
            );
        }
        if stopper.all_exhausted() {
            break;
        }
    }
    // A task whose metric never became finite falls back to the last epoch.
    for task in TaskId::ALL {
        checkpoints.entry(task).or_insert_with(|| TaskCheckpoint {
            epoch: epochs_run,
            metric: f64::NAN,
            model: model.clone(),
        });
    }
    Ok(MtlRun {
        checkpoints,
        final_model: model,
        epochs_run,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::stm().validate().is_ok());
        assert!(TrainingConfig::mtl().validate().is_ok());
        for bad in [
            TrainingConfig {
                learning_rate: 0.0,
                ..TrainingConfig::stm()
            },
            TrainingConfig {
                max_epochs: 0,
                ..TrainingConfig::stm()
            },
            TrainingConfig {
                patience: 0,
                ..TrainingConfig::stm()
            },
            TrainingConfig {
                grad_clip: Some(-1.0),
                ..TrainingConfig::stm()
            },
        ] {
            assert!(matches!(bad.validate(), Err(TrainingError::InvalidConfig(_))));
        }
    }

    #[test]
    fn defaults_follow_the_training_recipe() {
        let stm = TrainingConfig::stm();
        assert_eq!(stm.learning_rate, 2e-5);
        assert_eq!(stm.optimizer, OptimizerFamily::AdamW);
        assert_eq!(stm.batch_size, 16);
        assert_eq!(TrainingConfig::mtl().optimizer, OptimizerFamily::Adam);
    }

    #[test]
    fn batch_order_is_a_seeded_permutation() {
        let a = batch_order(20, 3, 1);
        assert_eq!(a, batch_order(20, 3, 1));
        assert_ne!(a, batch_order(20, 3, 2));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn task_weights() {
        let w = TaskWeights::only(TaskId::OFF2);
        assert_eq!(w.get(TaskId::OFF2), 1.0);
        assert_eq!(w.get(TaskId::H1A), 0.0);
    }
}
