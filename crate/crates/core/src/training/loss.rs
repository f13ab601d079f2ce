use alloc::vec::Vec;

use super::TrainingError;
use crate::autograd::{Graph, NodeId};
use crate::corpus::Record;
use crate::modeling::{Target, TaskId, TaskOutput};

/// Masked mean loss of one task over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskLoss {
    pub loss: f64,
    /// Records that carry a label for the task.
    pub mask_count: usize,
}

impl TaskLoss {
    /// Every record was masked out; `loss` is 0.
    pub fn fully_masked(&self) -> bool {
        self.mask_count == 0
    }
}

/// Mean cross-entropy (classification) or mean squared error (regression)
/// over the records that carry a label for `task`. Records without one
/// (non-humorous texts for H1B and H1C) contribute nothing.
pub fn compute_task_loss(task: TaskId, outputs: &[TaskOutput], batch: &[Record]) -> Result<TaskLoss, TrainingError> {
    if outputs.len() != batch.len() {
        return Err(TrainingError::BatchMismatch {
            outputs: outputs.len(),
            records: batch.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0;
    for (out, record) in outputs.iter().zip(batch) {
        let Some(target) = task.target(record) else { continue };
        total += match (out, target) {
            (TaskOutput::Logits(z), Target::Class(c)) => {
                let max = z[0].max(z[1]);
                let lse = max + libm::log(libm::exp(z[0] - max) + libm::exp(z[1] - max));
                lse - z[c]
            }
            (TaskOutput::Scalar(p), Target::Value(y)) => (p - y) * (p - y),
            _ => {
                return Err(TrainingError::ArityMismatch {
                    task,
                    actual: out.values().len(),
                })
            }
        };
        count += 1;
    }
    Ok(TaskLoss {
        loss: if count == 0 { 0.0 } else { total / count as f64 },
        mask_count: count,
    })
}

/// Graph counterpart of [`compute_task_loss`]: `outputs[i]` is the output
/// node for `records[i]`. Returns `None` when every record is masked.
pub fn task_loss_node(
    g: &mut Graph<'_>,
    task: TaskId,
    outputs: &[NodeId],
    records: &[&Record],
) -> Result<Option<(NodeId, usize)>, TrainingError> {
    let mut terms = Vec::new();
    for (&out, record) in outputs.iter().zip(records) {
        let Some(target) = task.target(record) else { continue };
        let width = g.value(out).cols();
        if width != task.arity() {
            return Err(TrainingError::ArityMismatch { task, actual: width });
        }
        terms.push(match target {
            Target::Class(c) => g.cross_entropy(out, c),
            Target::Value(y) => g.squared_error(out, y),
        });
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let sum = g.add_n(&terms);
    let mean = g.scale(sum, 1.0 / terms.len() as f64);
    Ok(Some((mean, terms.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::ParamStore;
    use crate::tensor::Matrix;
    use alloc::string::String;

    fn rec(humor: bool, rating: f64, offense: f64) -> Record {
        Record {
            id: 0,
            text: String::new(),
            is_humor: humor,
            humor_rating: humor.then_some(rating),
            humor_controversy: humor.then_some(true),
            offense_rating: offense,
        }
    }

    #[test]
    fn exact_predictions_give_zero_mse() {
        let batch = [rec(true, 1.5, 0.0), rec(true, 2.5, 0.0)];
        let outs = [TaskOutput::Scalar(1.5), TaskOutput::Scalar(2.5)];
        assert_eq!(compute_task_loss(TaskId::H1B, &outs, &batch).unwrap().loss, 0.0);
    }

    #[test]
    fn mse_formula() {
        let batch = [rec(false, 0.0, 1.0), rec(false, 0.0, 3.0)];
        let outs = [TaskOutput::Scalar(0.0), TaskOutput::Scalar(0.0)];
        let l = compute_task_loss(TaskId::OFF2, &outs, &batch).unwrap();
        assert_eq!((l.loss, l.mask_count), (5.0, 2));
    }

    #[test]
    fn fully_masked_batch() {
        let batch = [rec(false, 0.0, 1.0), rec(false, 0.0, 3.0)];
        let outs = [TaskOutput::Scalar(9.0), TaskOutput::Scalar(9.0)];
        let l = compute_task_loss(TaskId::H1B, &outs, &batch).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.fully_masked());
    }

    #[test]
    fn masked_records_are_excluded_from_mean() {
        let batch = [rec(true, 1.0, 0.0), rec(false, 0.0, 0.0)];
        let outs = [TaskOutput::Logits([0.0, 0.0]), TaskOutput::Logits([5.0, -5.0])];
        let l = compute_task_loss(TaskId::H1C, &outs, &batch).unwrap();
        assert_eq!(l.mask_count, 1);
        assert!((l.loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn arity_mismatch() {
        let batch = [rec(true, 1.0, 0.0)];
        let outs = [TaskOutput::Scalar(0.0)];
        assert!(matches!(
            compute_task_loss(TaskId::H1A, &outs, &batch),
            Err(TrainingError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn graph_loss_agrees_with_direct_computation() {
        let batch = [rec(true, 1.0, 0.5), rec(false, 0.0, 2.0), rec(true, 3.0, 4.0)];
        let logits = [[0.3, -0.2], [1.0, 2.0], [-0.7, 0.4]];
        let store = ParamStore::new();
        for task in [TaskId::H1A, TaskId::H1C] {
            let mut g = Graph::new(&store);
            let nodes: Vec<_> = logits.iter().map(|z| g.leaf(Matrix::row_vector(z.to_vec()))).collect();
            let refs: Vec<&Record> = batch.iter().collect();
            let (node, n) = task_loss_node(&mut g, task, &nodes, &refs).unwrap().unwrap();
            let outs: Vec<_> = logits.iter().map(|z| TaskOutput::Logits(*z)).collect();
            let direct = compute_task_loss(task, &outs, &batch).unwrap();
            assert_eq!(n, direct.mask_count);
            assert!((g.value(node).item() - direct.loss).abs() < 1e-14);
        }
    }
}
