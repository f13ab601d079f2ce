//! Post-hoc aggregation of exported predictions (weighted sums, simplex
//! grid search, voting) and the jointly trained concatenated-embedding
//! ensemble.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, NodeId, ParamStore};
use crate::corpus::TokenizedInput;
use crate::evaluation;
use crate::modeling::{
    BuiltinEncoder, Encoder, EncoderConfig, Linear, ModelError, Parameterized, SingleTaskModel, TaskId, TaskKind,
};

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// RMSE differences below this are treated as ties during grid search.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnsembleError {
    #[error("{weights} weights for {models} models")]
    WeightArityMismatch { weights: usize, models: usize },
    #[error("weights violate the simplex: {0}")]
    SimplexViolation(String),
    #[error("no predictions to combine")]
    EmptyPredictions,
    #[error("model {model} predicts {value} for record {record}; expected 0 or 1")]
    NonBinaryPrediction { model: usize, record: usize, value: f64 },
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("prediction files are not aligned: {0}")]
    AlignmentError(String),
    #[error("{task} is not a {expected:?} task")]
    WrongTaskKind { task: TaskId, expected: TaskKind },
    #[error("grid step {0} must lie in (0, 1] and divide 1")]
    InvalidStep(f64),
}

/// Predictions of `k` models for the same `m` records.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    task: TaskId,
    model_ids: Vec<String>,
    record_ids: Vec<i64>,
    predictions: Vec<Vec<f64>>,
}

impl PredictionSet {
    /// `predictions[i][j]` is model `i`'s output for `record_ids[j]`.
    pub fn new(
        task: TaskId,
        model_ids: Vec<String>,
        record_ids: Vec<i64>,
        predictions: Vec<Vec<f64>>,
    ) -> Result<Self, EnsembleError> {
        if predictions.is_empty() || record_ids.is_empty() {
            return Err(EnsembleError::EmptyPredictions);
        }
        if model_ids.len() != predictions.len() {
            return Err(EnsembleError::DimensionMismatch(format!(
                "{} model ids for {} prediction vectors",
                model_ids.len(),
                predictions.len()
            )));
        }
        if let Some((i, p)) = predictions
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() != record_ids.len())
        {
            return Err(EnsembleError::DimensionMismatch(format!(
                "model {i} has {} predictions for {} records",
                p.len(),
                record_ids.len()
            )));
        }
        Ok(Self {
            task,
            model_ids,
            record_ids,
            predictions,
        })
    }

    /// Aligns per-model `(id, prediction)` lists on the record order of the
    /// first model. Every model must cover exactly the same ids.
    pub fn align(task: TaskId, models: Vec<(String, Vec<(i64, f64)>)>) -> Result<Self, EnsembleError> {
        let Some((_, first)) = models.first() else {
            return Err(EnsembleError::EmptyPredictions);
        };
        let record_ids: Vec<i64> = first.iter().map(|(id, _)| *id).collect();
        let mut model_ids = Vec::with_capacity(models.len());
        let mut predictions = Vec::with_capacity(models.len());
        for (name, rows) in models {
            let mut by_id = BTreeMap::new();
            for (id, p) in &rows {
                if by_id.insert(*id, *p).is_some() {
                    return Err(EnsembleError::AlignmentError(format!("{name} repeats id {id}")));
                }
            }
            if by_id.len() != record_ids.len() {
                return Err(EnsembleError::AlignmentError(format!(
                    "{name} has {} records, expected {}",
                    by_id.len(),
                    record_ids.len()
                )));
            }
            let mut aligned = Vec::with_capacity(record_ids.len());
            for id in &record_ids {
                match by_id.get(id) {
                    Some(p) => aligned.push(*p),
                    None => return Err(EnsembleError::AlignmentError(format!("{name} lacks id {id}"))),
                }
            }
            model_ids.push(name);
            predictions.push(aligned);
        }
        Self::new(task, model_ids, record_ids, predictions)
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn record_ids(&self) -> &[i64] {
        &self.record_ids
    }

    pub fn predictions(&self) -> &[Vec<f64>] {
        &self.predictions
    }

    /// Number of models `k`.
    pub fn models(&self) -> usize {
        self.predictions.len()
    }

    /// Number of records `m`.
    pub fn records(&self) -> usize {
        self.record_ids.len()
    }

    fn require(&self, kind: TaskKind) -> Result<(), EnsembleError> {
        if self.task.kind() == kind {
            Ok(())
        } else {
            Err(EnsembleError::WrongTaskKind {
                task: self.task,
                expected: kind,
            })
        }
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EnsembleWeights {
    lambdas: Vec<f64>,
}

impl EnsembleWeights {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, EnsembleError> {
        if lambdas.is_empty() {
            return Err(EnsembleError::EmptyPredictions);
        }
        if let Some(l) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(EnsembleError::SimplexViolation(format!(
                "weight {l} is negative or not finite"
            )));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(EnsembleError::SimplexViolation(format!("weights sum to {sum}")));
        }
        Ok(Self { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

impl TryFrom<Vec<f64>> for EnsembleWeights {
    type Error = EnsembleError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EnsembleWeights> for Vec<f64> {
    fn from(w: EnsembleWeights) -> Self {
        w.lambdas
    }
}

/// `λᵢ = 1/k`.
pub fn uniform_weights(k: usize) -> Result<EnsembleWeights, EnsembleError> {
    if k == 0 {
        return Err(EnsembleError::EmptyPredictions);
    }
    EnsembleWeights::new(alloc::vec![1.0 / k as f64; k])
}

fn aggregate_unchecked(predictions: &[Vec<f64>], lambdas: &[f64]) -> Vec<f64> {
    let m = predictions[0].len();
    (0..m)
        .map(|j| {
            let mut acc = 0.0;
            for (p, l) in predictions.iter().zip(lambdas) {
                acc += l * p[j];
            }
            acc
        })
        .collect()
}

/// `ŷ[j] = Σᵢ λᵢ·ŷᵢ[j]`.
pub fn weighted_aggregate(preds: &PredictionSet, weights: &EnsembleWeights) -> Result<Vec<f64>, EnsembleError> {
    preds.require(TaskKind::Regression)?;
    if weights.len() != preds.models() {
        return Err(EnsembleError::WeightArityMismatch {
            weights: weights.len(),
            models: preds.models(),
        });
    }
    Ok(aggregate_unchecked(&preds.predictions, &weights.lambdas))
}

/// Which weight vectors the grid search visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lattice {
    /// Non-negative multiples of the step summing to one.
    #[default]
    Simplex,
    /// Every coordinate independently in `{0, step, …, 1}`.
    Box,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// Box-lattice results need not sum to one, so these are raw.
    pub lambdas: Vec<f64>,
    pub rmse: f64,
    pub candidates: usize,
}

impl GridSearchResult {
    /// The winning weights as a validated simplex point.
    pub fn weights(&self) -> Result<EnsembleWeights, EnsembleError> {
        EnsembleWeights::new(self.lambdas.clone())
    }
}

/// Number of step units in 1, if `step` divides it.
pub fn lattice_divisions(step: f64) -> Result<usize, EnsembleError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EnsembleError::InvalidStep(step));
    }
    let n = libm::round(1.0 / step);
    if (n * step - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(EnsembleError::InvalidStep(step));
    }
    Ok(n as usize)
}

/// Visits lattice points as integer unit counts in ascending lexicographic
/// order.
fn for_each_point(k: usize, n: usize, lattice: Lattice, f: &mut impl FnMut(&[usize])) {
    fn rec(
        counts: &mut Vec<usize>,
        k: usize,
        n: usize,
        remaining: usize,
        lattice: Lattice,
        f: &mut impl FnMut(&[usize]),
    ) {
        if counts.len() + 1 == k && lattice == Lattice::Simplex {
            counts.push(remaining);
            f(counts);
            counts.pop();
            return;
        }
        if counts.len() == k {
            f(counts);
            return;
        }
        let hi = match lattice {
            Lattice::Simplex => remaining,
            Lattice::Box => n,
        };
        for c in 0..=hi {
            counts.push(c);
            rec(counts, k, n, remaining.saturating_sub(c), lattice, f);
            counts.pop();
        }
    }
    rec(&mut Vec::with_capacity(k), k, n, n, lattice, f);
}

/// Exhaustive search for the weights minimizing RMSE against `targets`.
/// Candidates are visited in ascending lexicographic order and only a
/// strictly lower RMSE (by more than [`TIE_TOLERANCE`]) replaces the
/// incumbent, so ties go to the lexicographically smallest λ.
pub fn grid_search_weights(
    preds: &PredictionSet,
    targets: &[f64],
    step: f64,
    lattice: Lattice,
) -> Result<GridSearchResult, EnsembleError> {
    preds.require(TaskKind::Regression)?;
    if targets.len() != preds.records() {
        return Err(EnsembleError::AlignmentError(format!(
            "{} targets for {} records",
            targets.len(),
            preds.records()
        )));
    }
    let n = lattice_divisions(step)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut candidates = 0;
    let mut failure = None;
    for_each_point(preds.models(), n, lattice, &mut |counts| {
        candidates += 1;
        let lambdas: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let agg = aggregate_unchecked(&preds.predictions, &lambdas);
        match evaluation::rmse(&agg, targets) {
            Ok(r) => {
                if best.as_ref().is_none_or(|(_, b)| r < b - TIE_TOLERANCE) {
                    best = Some((lambdas, r));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(EnsembleError::DimensionMismatch(format!("{e}")));
    }
    let (lambdas, rmse) = best.ok_or(EnsembleError::EmptyPredictions)?;
    Ok(GridSearchResult {
        lambdas,
        rmse,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteRule {
    /// Most frequent label; ties go to 1.
    #[default]
    Majority,
    /// 1 if any model predicts 1.
    Or,
}

/// Per-record vote over `k` binary predictions.
pub fn max_vote(preds: &PredictionSet, rule: VoteRule) -> Result<Vec<u8>, EnsembleError> {
    preds.require(TaskKind::Classification)?;
    for (i, p) in preds.predictions.iter().enumerate() {
        if let Some((j, v)) = p.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
            return Err(EnsembleError::NonBinaryPrediction {
                model: i,
                record: j,
                value: *v,
            });
        }
    }
    let k = preds.models();
    Ok((0..preds.records())
        .map(|j| {
            let ones = preds.predictions.iter().filter(|p| p[j] == 1.0).count();
            let positive = match rule {
                VoteRule::Majority => 2 * ones >= k,
                VoteRule::Or => ones > 0,
            };
            u8::from(positive)
        })
        .collect())
}

/// `k` encoders whose `[CLS]` embeddings are concatenated and projected by
/// one affine head. Encoder `i` owns parameters `encoder{i}.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEnsemble {
    params: ParamStore,
    encoders: Vec<BuiltinEncoder>,
    head: Linear,
    task: TaskId,
    seed: u64,
    frozen: bool,
}

impl JointEnsemble {
    /// `members` lists each encoder's configuration and vocabulary size.
    pub fn new(task: TaskId, members: &[(EncoderConfig, usize)], seed: u64) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut params = ParamStore::new();
        let encoders: Vec<BuiltinEncoder> = members
            .iter()
            .enumerate()
            .map(|(i, (config, vocab))| BuiltinEncoder::new(&mut params, &format!("encoder{i}"), *config, *vocab, seed))
            .collect();
        let width = encoders.iter().map(|e| e.hidden_size()).sum();
        let head = Linear::new(&mut params, &format!("head.{task}"), width, task.arity(), seed);
        Ok(Self {
            params,
            encoders,
            head,
            task,
            seed,
            frozen: false,
        })
    }

    /// Excludes (or re-includes) every encoder parameter from optimizer
    /// updates so only the head trains.
    pub fn set_frozen_encoders(&mut self, frozen: bool) {
        for i in 0..self.encoders.len() {
            self.params.set_frozen_prefix(&format!("encoder{i}."), frozen);
        }
        self.frozen = frozen;
    }

    pub fn encoders_frozen(&self) -> bool {
        self.frozen
    }

    pub fn encoders(&self) -> &[BuiltinEncoder] {
        &self.encoders
    }

    pub fn head(&self) -> Linear {
        self.head
    }

    /// Input width of the head, `Σ dᵢ`.
    pub fn head_input_size(&self) -> usize {
        self.head.input_size(&self.params)
    }

    fn members(&self) -> Vec<(EncoderConfig, usize)> {
        self.encoders.iter().map(|e| (*e.config(), e.vocab_size())).collect()
    }
}

impl Parameterized for JointEnsemble {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl SingleTaskModel for JointEnsemble {
    /// One tokenization per encoder.
    type Input = Vec<TokenizedInput>;

    fn task(&self) -> TaskId {
        self.task
    }

    fn fresh(&self) -> Self {
        let mut m = Self::new(self.task, &self.members(), self.seed).expect("at least one encoder");
        m.set_frozen_encoders(self.frozen);
        m
    }

    fn forward_node(&self, g: &mut Graph<'_>, input: &Vec<TokenizedInput>) -> Result<NodeId, ModelError> {
        if input.len() != self.encoders.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.encoders.len(),
                actual: input.len(),
            });
        }
        let mut cls = Vec::with_capacity(input.len());
        for (enc, inp) in self.encoders.iter().zip(input) {
            cls.push(enc.encode_nodes(g, inp)?.cls);
        }
        let joined = if cls.len() == 1 { cls[0] } else { g.concat_cols(&cls) };
        Ok(self.head.forward(g, joined))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeling::{StmModel, TaskOutput};
    use crate::tensor::Matrix;
    use alloc::string::ToString;
    use alloc::vec;

    fn set(task: TaskId, preds: Vec<Vec<f64>>) -> PredictionSet {
        let m = preds[0].len();
        let ids = (0..preds.len()).map(|i| i.to_string()).collect();
        PredictionSet::new(task, ids, (0..m as i64).collect(), preds).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let w = EnsembleWeights::new(vec![0.5, 0.5]).unwrap();
        let y = weighted_aggregate(&set(TaskId::H1B, vec![vec![0.4], vec![0.8]]), &w).unwrap();
        assert!((y[0] - 0.6).abs() < 1e-15);
        let id = EnsembleWeights::new(vec![1.0]).unwrap();
        assert_eq!(
            weighted_aggregate(&set(TaskId::OFF2, vec![vec![0.37, 4.2]]), &id).unwrap(),
            vec![0.37, 4.2]
        );
        let w3 = EnsembleWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let y = weighted_aggregate(&set(TaskId::H1B, vec![vec![1.0], vec![2.0], vec![3.0]]), &w3).unwrap();
        assert!((y[0] - 2.3).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        assert!(matches!(
            EnsembleWeights::new(vec![0.5, 0.4]),
            Err(EnsembleError::SimplexViolation(_))
        ));
        assert!(matches!(
            EnsembleWeights::new(vec![1.5, -0.5]),
            Err(EnsembleError::SimplexViolation(_))
        ));
        let p = set(TaskId::H1B, vec![vec![1.0], vec![2.0]]);
        assert!(matches!(
            weighted_aggregate(&p, &uniform_weights(3).unwrap()),
            Err(EnsembleError::WeightArityMismatch { weights: 3, models: 2 })
        ));
        assert!(matches!(
            weighted_aggregate(&set(TaskId::H1A, vec![vec![1.0]]), &uniform_weights(1).unwrap()),
            Err(EnsembleError::WrongTaskKind { .. })
        ));
    }

    #[test]
    fn uniform() {
        assert_eq!(uniform_weights(4).unwrap().lambdas(), &[0.25; 4]);
        assert_eq!(uniform_weights(1).unwrap().lambdas(), &[1.0]);
        let s: f64 = uniform_weights(3).unwrap().lambdas().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(uniform_weights(0).is_err());
    }

    #[test]
    fn grid_search_examples() {
        let targets = vec![1.0, 2.5, 4.0];
        let shifted: Vec<f64> = targets.iter().map(|t| t + 1.0).collect();
        let r = grid_search_weights(
            &set(TaskId::H1B, vec![targets.clone(), shifted]),
            &targets,
            0.1,
            Lattice::Simplex,
        )
        .unwrap();
        assert_eq!(r.lambdas, vec![1.0, 0.0]);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.candidates, 11);

        let same = grid_search_weights(
            &set(TaskId::H1B, vec![targets.clone(), targets.clone()]),
            &targets,
            0.1,
            Lattice::Simplex,
        )
        .unwrap();
        assert_eq!(same.lambdas, vec![0.0, 1.0]);

        let half = grid_search_weights(
            &set(TaskId::H1B, vec![vec![1.0], vec![2.0]]),
            &[1.5],
            0.5,
            Lattice::Simplex,
        )
        .unwrap();
        assert_eq!(half.candidates, 3);
        assert_eq!(half.lambdas, vec![0.5, 0.5]);
    }

    #[test]
    fn lattice_counts() {
        let count = |k, step, lattice| {
            let mut c = 0;
            for_each_point(k, lattice_divisions(step).unwrap(), lattice, &mut |_| c += 1);
            c
        };
        assert_eq!(count(1, 0.1, Lattice::Simplex), 1);
        assert_eq!(count(3, 0.1, Lattice::Simplex), 66);
        assert_eq!(count(2, 0.5, Lattice::Box), 9);
        assert!(lattice_divisions(0.3).is_err());
        assert!(lattice_divisions(0.0).is_err());
    }

    #[test]
    fn box_lattice_can_leave_the_simplex() {
        let r = grid_search_weights(&set(TaskId::H1B, vec![vec![1.0], vec![1.0]]), &[2.0], 0.5, Lattice::Box).unwrap();
        assert_eq!(r.lambdas, vec![1.0, 1.0]);
        assert!(r.weights().is_err());
    }

    #[test]
    fn voting() {
        let p = set(
            TaskId::H1A,
            vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
        );
        assert_eq!(max_vote(&p, VoteRule::Majority).unwrap(), vec![1, 0, 0]);
        assert_eq!(max_vote(&p, VoteRule::Or).unwrap(), vec![1, 0, 1]);
        let tie = set(TaskId::H1C, vec![vec![1.0], vec![0.0]]);
        assert_eq!(max_vote(&tie, VoteRule::Majority).unwrap(), vec![1]);
        let bad = set(TaskId::H1A, vec![vec![0.5]]);
        assert!(matches!(
            max_vote(&bad, VoteRule::Majority),
            Err(EnsembleError::NonBinaryPrediction { .. })
        ));
    }

    #[test]
    fn alignment() {
        let p = PredictionSet::align(
            TaskId::H1B,
            vec![
                ("a".into(), vec![(3, 1.0), (1, 2.0)]),
                ("b".into(), vec![(1, 20.0), (3, 10.0)]),
            ],
        )
        .unwrap();
        assert_eq!(p.record_ids(), &[3, 1]);
        assert_eq!(p.predictions()[1], vec![10.0, 20.0]);
        assert!(matches!(
            PredictionSet::align(
                TaskId::H1B,
                vec![("a".into(), vec![(1, 1.0)]), ("b".into(), vec![(2, 1.0)])]
            ),
            Err(EnsembleError::AlignmentError(_))
        ));
    }

    fn small() -> EncoderConfig {
        EncoderConfig {
            hidden: 8,
            heads: 2,
            ff_hidden: 16,
            max_len: 16,
            layers: 1,
            ..EncoderConfig::default()
        }
    }

    fn input() -> TokenizedInput {
        TokenizedInput {
            token_ids: vec![1, 3, 4],
            attention_mask: vec![1; 3],
            cls_index: 0,
        }
    }

    #[test]
    fn joint_head_width_is_concatenated() {
        let cfg = EncoderConfig::default();
        let m = JointEnsemble::new(TaskId::H1A, &[(cfg, 20), (cfg, 30)], 0).unwrap();
        assert_eq!(m.head_input_size(), 128);
        assert!(matches!(
            m.predict(&vec![input()]),
            Err(ModelError::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn single_member_matches_stm() {
        let stm = StmModel::new(TaskId::H1A, small(), 10, 4);
        let mut joint = JointEnsemble::new(TaskId::H1A, &[(small(), 10)], 9).unwrap();
        let values: Vec<(String, Matrix)> = stm
            .params()
            .iter()
            .map(|(n, v)| (n.replacen("encoder.", "encoder0.", 1), v.clone()))
            .collect();
        for (name, value) in values {
            let id = joint.params().find(&name).unwrap();
            *joint.params_mut().value_mut(id) = value;
        }
        assert_eq!(stm.predict(&input()).unwrap(), joint.predict(&vec![input()]).unwrap());
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let mut m = JointEnsemble::new(TaskId::H1C, &[(small(), 10), (small(), 12)], 1).unwrap();
        let head = m.head();
        *m.params_mut().value_mut(head.weight) = Matrix::zeros(16, 2);
        assert_eq!(
            m.predict(&vec![input(), input()]).unwrap(),
            TaskOutput::Logits([0.0, 0.0])
        );
    }

    #[test]
    fn freezing_marks_only_encoders() {
        let mut m = JointEnsemble::new(TaskId::H1B, &[(small(), 10), (small(), 10)], 1).unwrap();
        m.set_frozen_encoders(true);
        let head = m.head();
        assert!(!m.params().is_frozen(head.weight));
        let enc = m.params().find("encoder1.token_embedding").unwrap();
        assert!(m.params().is_frozen(enc));
        assert!(m.fresh().encoders_frozen());
    }
}
