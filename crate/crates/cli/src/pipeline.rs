//! `train` and `retrain`: data loading, the three training protocols and
//! artifact persistence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use jestlab_core::corpus::{self, Dataset, Provenance, Stopwords, TokenizedInput, Vocab};
use jestlab_core::ensembling::JointEnsemble;
use jestlab_core::modeling::{MtlModel, SingleTaskModel, StmModel, TaskId};
use jestlab_core::training::{
    prepare, retrain_full, train_mtl, train_stm, Example, HistoryEntry, StmRun, TrainingConfig,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Meta, Model};
use crate::config::{Mode, RunConfig};
use crate::data::{self, fmt_f64};
use crate::error::{CliError, Result};

/// Everything a run reads, resolved once.
pub struct Inputs {
    pub train: Dataset,
    pub dev: Option<Dataset>,
    pub test: Option<Vec<(i64, String)>>,
    pub stopwords: Option<Stopwords>,
    pub vocab: Vocab,
    pub digests: Vec<DataDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub mode: String,
    pub tasks: Vec<TaskId>,
    pub seed: u64,
    pub deterministic: bool,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub data: Vec<DataDigest>,
    /// Selected epoch count per task.
    pub chosen_n: BTreeMap<TaskId, usize>,
    pub epochs_run: usize,
    pub split: BTreeMap<String, usize>,
    /// Relative artifact path to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let mut digests = Vec::new();
    let mut digest = |role: &str, path: &Path, records: usize| -> Result<()> {
        digests.push(DataDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: data::file_digest(path)?,
            records,
        });
        Ok(())
    };
    let train = data::load_dataset(&config.data.train, Provenance::Train, &config.labels)?;
    digest("train", &config.data.train, train.len())?;
    let dev = match &config.data.dev {
        Some(p) => {
            let d = data::load_dataset(p, Provenance::PublicDev, &config.labels)?;
            digest("dev", p, d.len())?;
            Some(d)
        }
        None => None,
    };
    let test = match &config.data.test {
        Some(p) => {
            let t = data::load_texts(p)?;
            digest("test", p, t.len())?;
            Some(t)
        }
        None => None,
    };
    let stopwords = if config.preprocessing.remove_stopwords {
        Some(match &config.preprocessing.stopwords {
            Some(p) => {
                let s = data::load_stopwords(p)?;
                digest("stopwords", p, s.len())?;
                s
            }
            None => Stopwords::builtin(),
        })
    } else {
        None
    };
    let texts = train
        .records()
        .iter()
        .chain(dev.iter().flat_map(|d| d.records()))
        .map(|r| r.text.as_str());
    let vocab = Vocab::build(texts, config.preprocessing.min_count);
    Ok(Inputs {
        train,
        dev,
        test,
        stopwords,
        vocab,
        digests,
    })
}

impl Inputs {
    fn merged(&self) -> Result<Dataset> {
        Ok(match &self.dev {
            Some(dev) => Dataset::merge(&self.train, dev)?,
            None => self.train.clone(),
        })
    }

    fn examples(&self, d: &Dataset) -> Vec<Example<TokenizedInput>> {
        prepare(d, &self.vocab, self.stopwords.as_ref())
    }

    fn meta<'a>(&'a self, training: &'a TrainingConfig, epoch: usize) -> Meta<'a> {
        Meta {
            vocab: &self.vocab,
            stopwords: self.stopwords.as_ref(),
            training,
            epoch,
        }
    }
}

/// Collects artifacts under one output directory.
pub struct Artifacts {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        data::write_file(&path, bytes)?;
        self.written.insert(relative.to_string(), data::sha256_hex(bytes));
        Ok(path)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

pub fn history_csv(history: &[HistoryEntry]) -> Vec<u8> {
    let mut out = String::from("epoch,task,split,metric_name,value\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch,
            h.task,
            h.split.as_str(),
            h.metric,
            fmt_f64(h.value)
        ));
    }
    out.into_bytes()
}

fn predict_rows(model: &Model, task: TaskId, inputs: &[(i64, TokenizedInput)]) -> Result<Vec<(i64, f64)>> {
    inputs
        .iter()
        .map(|(id, input)| Ok((*id, model.predict(task, input)?.prediction())))
        .collect()
}

fn val_inputs(examples: &[Example<TokenizedInput>]) -> Vec<(i64, TokenizedInput)> {
    examples.iter().map(|e| (e.record.id, e.input.clone())).collect()
}

fn test_inputs(inputs: &Inputs) -> Option<Vec<(i64, TokenizedInput)>> {
    inputs.test.as_ref().map(|rows| {
        rows.iter()
            .map(|(id, text)| {
                (
                    *id,
                    corpus::tokenize_with(text, inputs.stopwords.as_ref(), &inputs.vocab),
                )
            })
            .collect()
    })
}

/// Result of `train`.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub chosen_n: BTreeMap<TaskId, usize>,
    pub epochs_run: usize,
    pub manifest: Manifest,
}

fn stm_like<M, F, C>(
    config: &RunConfig,
    inputs: &Inputs,
    model: M,
    to_input: F,
    checkpoint: C,
    out: &mut Artifacts,
    history: &mut Vec<HistoryEntry>,
) -> Result<(usize, usize, BTreeMap<String, usize>)>
where
    M: SingleTaskModel + Clone,
    F: Fn(&TokenizedInput) -> M::Input,
    C: Fn(&M, &Meta<'_>) -> Checkpoint,
{
    let task = model.task();
    let (fit, val) = corpus::split_stm(&inputs.train, config.data.fit_fraction, config.seed)?;
    let convert = |ex: Vec<Example<TokenizedInput>>| -> Vec<Example<M::Input>> {
        ex.into_iter()
            .map(|e| Example {
                input: to_input(&e.input),
                record: e.record,
            })
            .collect()
    };
    let fit_ex = convert(inputs.examples(&fit));
    let val_tok = inputs.examples(&val);
    let val_ex = convert(val_tok.clone());
    let run: StmRun<M> = train_stm(model, &fit_ex, &val_ex, &config.training)?;
    history.extend(run.history.iter().cloned());
    let n = run.best_epoch;
    log::info!("{task}: best epoch {n} of {}", run.epochs_run);
    let best = checkpoint(&run.model, &inputs.meta(&config.training, n));
    out.write(&format!("checkpoints/{task}.best.json"), &best.to_json())?;
    let best_model = best.model()?;
    let val_rows = predict_rows(&best_model, task, &val_inputs(&val_tok))?;
    out.write(
        &format!("predictions/{task}.val.csv"),
        &data::predictions_csv(&val_rows),
    )?;

    let mut final_model = best_model;
    if config.data.retrain {
        let merged = inputs.merged()?;
        let merged_ex = convert(inputs.examples(&merged));
        let retrained = retrain_full(&run.model, &merged_ex, n, &config.training)?;
        let cp = checkpoint(&retrained.model, &inputs.meta(&config.training, n));
        out.write(&format!("checkpoints/{task}.final.json"), &cp.to_json())?;
        final_model = cp.model()?;
    }
    if let Some(test) = test_inputs(inputs) {
        let rows = predict_rows(&final_model, task, &test)?;
        out.write(&format!("predictions/{task}.test.csv"), &data::predictions_csv(&rows))?;
    }
    let split = BTreeMap::from([("fit".to_string(), fit.len()), ("val".to_string(), val.len())]);
    Ok((n, run.epochs_run, split))
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    let inputs = load_inputs(config)?;
    let mut out = Artifacts::new(&config.output_dir);
    let mut history = Vec::new();
    let mut chosen_n = BTreeMap::new();
    let (epochs_run, split) = match config.mode {
        Mode::Stm => {
            let task = config.tasks[0];
            let model = StmModel::new(task, config.model, inputs.vocab.len(), config.seed);
            let (n, epochs, split) = stm_like(
                config,
                &inputs,
                model,
                |t| t.clone(),
                Checkpoint::of_stm,
                &mut out,
                &mut history,
            )?;
            chosen_n.insert(task, n);
            (epochs, split)
        }
        Mode::JointEnsemble => {
            let task = config.tasks[0];
            let k = config.ensemble.members;
            let members = vec![(config.model, inputs.vocab.len()); k];
            let mut model = JointEnsemble::new(task, &members, config.seed)?;
            model.set_frozen_encoders(config.ensemble.freeze_encoders);
            let seed = config.seed;
            let (n, epochs, split) = stm_like(
                config,
                &inputs,
                model,
                |t| vec![t.clone(); k],
                |m, meta| Checkpoint::of_joint(m, seed, meta),
                &mut out,
                &mut history,
            )?;
            chosen_n.insert(task, n);
            (epochs, split)
        }
        Mode::Mtl => {
            let merged = inputs.merged()?;
            let (fit, val) = corpus::split_mtl(&merged, config.data.mtl_val_count, config.seed)?;
            let fit_ex = inputs.examples(&fit);
            let val_ex = inputs.examples(&val);
            let model = MtlModel::new(config.model, inputs.vocab.len(), config.seed);
            let run = train_mtl(model, &fit_ex, &val_ex, &config.training)?;
            history.extend(run.history.iter().cloned());
            let val_in = val_inputs(&val_ex);
            let test_in = test_inputs(&inputs);
            for (task, cp) in &run.checkpoints {
                let ckpt = Checkpoint::of_mtl(&cp.model, &inputs.meta(&config.training, cp.epoch));
                out.write(&format!("checkpoints/{task}.best.json"), &ckpt.to_json())?;
                let model = ckpt.model()?;
                let rows = predict_rows(&model, *task, &val_in)?;
                out.write(&format!("predictions/{task}.val.csv"), &data::predictions_csv(&rows))?;
                if let Some(test) = &test_in {
                    let rows = predict_rows(&model, *task, test)?;
                    out.write(&format!("predictions/{task}.test.csv"), &data::predictions_csv(&rows))?;
                }
                chosen_n.insert(*task, cp.epoch);
            }
            let last = Checkpoint::of_mtl(&run.final_model, &inputs.meta(&config.training, run.epochs_run));
            out.write("checkpoints/final.json", &last.to_json())?;
            let split = BTreeMap::from([("fit".to_string(), fit.len()), ("val".to_string(), val.len())]);
            (run.epochs_run, split)
        }
    };
    out.write("history.csv", &history_csv(&history))?;
    out.write("chosen_n.json", &json_line(&chosen_n))?;
    let manifest = write_manifest(config, &inputs, "train", &chosen_n, epochs_run, split, &mut out)?;
    Ok(TrainOutcome {
        output_dir: config.output_dir.clone(),
        chosen_n,
        epochs_run,
        manifest,
    })
}

fn json_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializes");
    bytes.push(b'\n');
    bytes
}

fn write_manifest(
    config: &RunConfig,
    inputs: &Inputs,
    command: &str,
    chosen_n: &BTreeMap<TaskId, usize>,
    epochs_run: usize,
    split: BTreeMap<String, usize>,
    out: &mut Artifacts,
) -> Result<Manifest> {
    let canonical = config.canonical_json();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        mode: config.mode_name().into(),
        tasks: config.tasks.clone(),
        seed: config.seed,
        deterministic: true,
        config_sha256: data::sha256_hex(canonical.as_bytes()),
        config: serde_json::from_str(&canonical).expect("canonical json parses"),
        data: inputs.digests.clone(),
        chosen_n: chosen_n.clone(),
        epochs_run,
        split,
        artifacts: out.written.clone(),
    };
    let name = if command == "train" {
        "manifest.json".to_string()
    } else {
        format!("manifest.{command}.json")
    };
    out.write(&name, &json_line(&manifest))?;
    Ok(manifest)
}

/// `retrain`: fresh model, exactly `n` epochs on train + dev. `n` defaults
/// to the value chosen by a previous `train` in the same output directory.
pub fn cmd_retrain(config: &RunConfig, epochs: Option<usize>) -> Result<TrainOutcome> {
    if config.mode == Mode::Mtl {
        return Err(CliError::validation(
            "invalid_config",
            "retrain applies to single-task modes; mtl keeps per-task checkpoints",
        ));
    }
    let task = config.tasks[0];
    let n = match epochs {
        Some(n) => n,
        None => {
            let path = config.output_dir.join("chosen_n.json");
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::validation(
                    "missing_epochs",
                    format!("pass --epochs or run train first ({}: {e})", path.display()),
                )
            })?;
            let map: BTreeMap<TaskId, usize> = serde_json::from_str(&text)
                .map_err(|e| CliError::validation("missing_epochs", format!("{}: {e}", path.display())))?;
            *map.get(&task).ok_or_else(|| {
                CliError::validation("missing_epochs", format!("{} has no entry for {task}", path.display()))
            })?
        }
    };
    let inputs = load_inputs(config)?;
    let merged = inputs.merged()?;
    let examples = inputs.examples(&merged);
    let mut out = Artifacts::new(&config.output_dir);
    let meta = inputs.meta(&config.training, n);
    let (model, history) = match config.mode {
        Mode::Stm => {
            let blueprint = StmModel::new(task, config.model, inputs.vocab.len(), config.seed);
            let run = retrain_full(&blueprint, &examples, n, &config.training)?;
            (Checkpoint::of_stm(&run.model, &meta), run.history)
        }
        _ => {
            let k = config.ensemble.members;
            let mut blueprint = JointEnsemble::new(task, &vec![(config.model, inputs.vocab.len()); k], config.seed)?;
            blueprint.set_frozen_encoders(config.ensemble.freeze_encoders);
            let ex: Vec<Example<Vec<TokenizedInput>>> = examples
                .into_iter()
                .map(|e| Example {
                    input: vec![e.input; k],
                    record: e.record,
                })
                .collect();
            let run = retrain_full(&blueprint, &ex, n, &config.training)?;
            (Checkpoint::of_joint(&run.model, config.seed, &meta), run.history)
        }
    };
    out.write(&format!("checkpoints/{task}.final.json"), &model.to_json())?;
    if let Some(test) = test_inputs(&inputs) {
        let rows = predict_rows(&model.model()?, task, &test)?;
        out.write(&format!("predictions/{task}.test.csv"), &data::predictions_csv(&rows))?;
    }
    out.write("history.retrain.csv", &history_csv(&history))?;
    let chosen_n = BTreeMap::from([(task, n)]);
    let split = BTreeMap::from([("merged".to_string(), merged.len())]);
    let manifest = write_manifest(config, &inputs, "retrain", &chosen_n, n, split, &mut out)?;
    Ok(TrainOutcome {
        output_dir: config.output_dir.clone(),
        chosen_n,
        epochs_run: n,
        manifest,
    })
}
