use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::modeling::{TaskId, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// F-score and friends.
    Maximize,
    /// RMSE.
    Minimize,
}

impl Direction {
    pub fn for_task(task: TaskId) -> Self {
        match task.kind() {
            TaskKind::Classification => Direction::Maximize,
            TaskKind::Regression => Direction::Minimize,
        }
    }

    fn better(self, candidate: f64, best: f64) -> bool {
        match self {
            Direction::Maximize => candidate > best,
            Direction::Minimize => candidate < best,
        }
    }
}

/// Outcome of feeding one epoch's metric to an [`EarlyStopState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub exhausted: bool,
}

/// Patience-based stopping on a validation metric. Epochs are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState {
    direction: Direction,
    patience: usize,
    best: Option<f64>,
    best_epoch: Option<usize>,
    since_improvement: usize,
    epoch: usize,
}

impl EarlyStopState {
    pub fn new(direction: Direction, patience: usize) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            direction,
            patience,
            best: None,
            best_epoch: None,
            since_improvement: 0,
            epoch: 0,
        }
    }

    /// Records the metric of the next epoch. Only strict improvements count;
    /// a NaN never improves.
    pub fn observe(&mut self, value: f64) -> Observation {
        self.epoch += 1;
        let improved = !value.is_nan() && self.best.is_none_or(|b| self.direction.better(value, b));
        if improved {
            self.best = Some(value);
            self.best_epoch = Some(self.epoch);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        Observation {
            improved,
            exhausted: self.is_exhausted(),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.since_improvement >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }
}

/// Independent stopping state per task. Every task keeps being observed
/// until all of them are exhausted at the same time.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskStopper {
    states: BTreeMap<TaskId, EarlyStopState>,
}

impl MultiTaskStopper {
    pub fn new(tasks: &[TaskId], patience: usize) -> Self {
        Self {
            states: tasks
                .iter()
                .map(|&t| (t, EarlyStopState::new(Direction::for_task(t), patience)))
                .collect(),
        }
    }

    /// Feeds one epoch of metrics; returns the tasks that improved.
    ///
    /// Panics if a tracked task is missing from `metrics`.
    pub fn observe(&mut self, metrics: &BTreeMap<TaskId, f64>) -> Vec<TaskId> {
        let mut improved = Vec::new();
        for (task, state) in &mut self.states {
            let value = *metrics.get(task).expect("metric for every tracked task");
            if state.observe(value).improved {
                improved.push(*task);
            }
        }
        improved
    }

    pub fn all_exhausted(&self) -> bool {
        self.states.values().all(EarlyStopState::is_exhausted)
    }

    pub fn state(&self, task: TaskId) -> Option<&EarlyStopState> {
        self.states.get(&task)
    }

    pub fn best_epochs(&self) -> BTreeMap<TaskId, usize> {
        self.states
            .iter()
            .filter_map(|(t, s)| s.best_epoch().map(|e| (*t, e)))
            .collect()
    }
}

/// Runs a scripted metric sequence through one state; returns
/// `(epochs consumed, best epoch)`.
pub fn replay(direction: Direction, patience: usize, metrics: &[f64]) -> (usize, Option<usize>) {
    let mut s = EarlyStopState::new(direction, patience);
    for &m in metrics {
        if s.observe(m).exhausted {
            break;
        }
    }
    (s.epoch(), s.best_epoch())
}
