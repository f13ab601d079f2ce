//! Stateless commands over CSV files and checkpoints.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use jestlab_core::corpus::{LabelBounds, Provenance, RatingRange};
use jestlab_core::ensembling::{
    grid_search_weights, max_vote, uniform_weights, weighted_aggregate, EnsembleError, EnsembleWeights,
    GridSearchResult, Lattice, PredictionSet, VoteRule,
};
use jestlab_core::evaluation::{build_report, controversy_offense_analysis, EvalRun, MetricReport};
use jestlab_core::modeling::{TaskId, TaskKind};
use jestlab_core::synthetic::{self, SyntheticConfig};

use crate::checkpoint::Checkpoint;
use crate::data::{self, fmt_f64};
use crate::error::{CliError, Result};

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::runtime("io", format!("stdout: {e}")))
}

/// Predicts `task` for every row of `data` (any CSV with `id,text`).
pub fn predict(checkpoint: &Path, data_path: &Path, task: TaskId, clamp: bool) -> Result<Vec<(i64, f64)>> {
    let cp = Checkpoint::load(checkpoint)?;
    let model = cp.model()?;
    let stopwords = cp.stopwords();
    let texts = data::load_texts(data_path)?;
    texts
        .iter()
        .map(|(id, text)| {
            let input = cp.tokenize(text, stopwords.as_ref());
            let mut p = model.predict(task, &input)?.prediction();
            if clamp && task.kind() == TaskKind::Regression {
                p = RatingRange::ZERO_TO_FIVE.clamp(p);
            }
            Ok((*id, p))
        })
        .collect()
}

/// How `ensemble` combines its inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Combine {
    Weights(PathBuf),
    Uniform,
    Vote(VoteRule),
}

fn prediction_set(task: TaskId, inputs: &[PathBuf]) -> Result<PredictionSet> {
    let mut models = Vec::with_capacity(inputs.len());
    for path in inputs {
        models.push((data::model_id(path), data::load_predictions(path)?));
    }
    let ids: Vec<&String> = models.iter().map(|(id, _)| id).collect();
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return Err(CliError::validation(
                "duplicate_model",
                format!("two inputs share the model id `{id}`; file stems must differ"),
            ));
        }
    }
    Ok(PredictionSet::align(task, models)?)
}

/// Weights reordered to match `set`'s model order, by file stem.
fn matched_weights(set: &PredictionSet, path: &Path) -> Result<EnsembleWeights> {
    let (ids, weights) = data::load_weights(path)?;
    if ids.len() != set.models() {
        return Err(EnsembleError::WeightArityMismatch {
            weights: ids.len(),
            models: set.models(),
        }
        .into());
    }
    let by_id: BTreeMap<&str, f64> = ids
        .iter()
        .map(String::as_str)
        .zip(weights.lambdas().iter().copied())
        .collect();
    let ordered = set
        .model_ids()
        .iter()
        .map(|m| {
            by_id.get(m.as_str()).copied().ok_or_else(|| {
                CliError::from(EnsembleError::AlignmentError(format!("no weight for model `{m}`")))
                    .context(path.display())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleWeights::new(ordered)?)
}

pub fn ensemble(task: TaskId, inputs: &[PathBuf], combine: &Combine) -> Result<Vec<(i64, f64)>> {
    let set = prediction_set(task, inputs)?;
    let values: Vec<f64> = match combine {
        Combine::Vote(rule) => max_vote(&set, *rule)?.into_iter().map(f64::from).collect(),
        Combine::Uniform => weighted_aggregate(&set, &uniform_weights(set.models())?)?,
        Combine::Weights(path) => weighted_aggregate(&set, &matched_weights(&set, path)?)?,
    };
    Ok(set.record_ids().iter().copied().zip(values).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub model_ids: Vec<String>,
    pub result: GridSearchResult,
}

pub fn gridsearch(task: TaskId, inputs: &[PathBuf], gold: &Path, step: f64, lattice: Lattice) -> Result<GridOutcome> {
    let set = prediction_set(task, inputs)?;
    let gold = data::load_gold(gold, task, &LabelBounds::default())?;
    let targets = set
        .record_ids()
        .iter()
        .map(|id| {
            gold.get(id)
                .copied()
                .ok_or_else(|| CliError::from(EnsembleError::AlignmentError(format!("no gold value for id {id}"))))
        })
        .collect::<Result<Vec<_>>>()?;
    let result = grid_search_weights(&set, &targets, step, lattice)?;
    Ok(GridOutcome {
        model_ids: set.model_ids().to_vec(),
        result,
    })
}

/// One `NAME:TASK:path` report entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PredSpec {
    pub model: String,
    pub task: TaskId,
    pub path: PathBuf,
}

impl std::str::FromStr for PredSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.splitn(3, ':');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(model), Some(task), Some(path)) if !model.is_empty() && !path.is_empty() => Ok(Self {
                model: model.into(),
                task: task.parse()?,
                path: path.into(),
            }),
            _ => Err(format!("expected NAME:TASK:path, got `{s}`")),
        }
    }
}

/// Scores every prediction file against the gold set. Predictions for ids
/// without a gold value for that task are ignored; gold ids missing from a
/// prediction file are an alignment error.
pub fn report(gold_path: &Path, preds: &[PredSpec]) -> Result<MetricReport> {
    let dataset = data::load_dataset(gold_path, Provenance::PublicDev, &LabelBounds::default())?;
    let mut runs = Vec::with_capacity(preds.len());
    for spec in preds {
        let gold = data::gold_values(dataset.records(), spec.task);
        let predicted: BTreeMap<i64, f64> = data::load_predictions(&spec.path)?.into_iter().collect();
        let mut run = EvalRun {
            model: spec.model.clone(),
            task: spec.task,
            predictions: Vec::with_capacity(gold.len()),
            gold: Vec::with_capacity(gold.len()),
        };
        for (id, g) in &gold {
            let p = predicted.get(id).ok_or_else(|| {
                CliError::from(EnsembleError::AlignmentError(format!(
                    "{}: no prediction for id {id}",
                    spec.path.display()
                )))
            })?;
            run.predictions.push(*p);
            run.gold.push(*g);
        }
        runs.push(run);
    }
    Ok(build_report(&runs)?)
}

pub fn analyze(data_path: &Path, out: &mut dyn Write) -> Result<()> {
    let dataset = data::load_dataset(data_path, Provenance::Train, &LabelBounds::default())?;
    let a = controversy_offense_analysis(&dataset);
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "NA".into());
    emit(out, "group,count,mean_offense_rating")?;
    emit(
        out,
        format!("controversial,{},{}", a.controversial_count, opt(a.controversial_mean)),
    )?;
    emit(
        out,
        format!(
            "non_controversial,{},{}",
            a.non_controversial_count,
            opt(a.non_controversial_mean)
        ),
    )?;
    emit(out, format!("difference,,{}", opt(a.difference)))?;
    if a.is_partial() {
        log::warn!("one controversy group is empty; no difference reported");
    }
    Ok(())
}

pub fn synth(config: &SyntheticConfig) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&config.humor_fraction) || config.records == 0 {
        return Err(CliError::validation(
            "invalid_config",
            "synth needs records >= 1 and humor fraction in [0, 1]",
        ));
    }
    data::dataset_csv(&synthetic::generate(config))
}
