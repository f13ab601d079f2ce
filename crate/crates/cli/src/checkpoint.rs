//! Self-describing JSON checkpoints.
//!
//! Format `jestlab-checkpoint` version 1:
//!
//! | field              | content                                            |
//! |--------------------|----------------------------------------------------|
//! | `format`, `version`| container tag and format version                   |
//! | `kind`             | `stm`, `mtl` or `joint-ensemble`                   |
//! | `encoder`          | encoder identity string                            |
//! | `encoder_configs`  | one hyperparameter block per encoder               |
//! | `tasks`            | tasks the model serves                             |
//! | `seed`, `epoch`    | initialization seed and the epoch saved            |
//! | `stopwords`        | stopword list removed before tokenizing, or null   |
//! | `training`         | optimizer and loop hyperparameters                 |
//! | `vocab`            | token list; index = token id                       |
//! | `params`           | named tensors (`names`, `values`, `frozen`)        |

use std::fs;
use std::path::Path;

use jestlab_core::corpus::{tokenize_with, Stopwords, TokenizedInput, Vocab};
use jestlab_core::ensembling::JointEnsemble;
use jestlab_core::modeling::{
    EncoderConfig, ModelError, MtlModel, Parameterized, SingleTaskModel, StmModel, TaskId, TaskOutput,
    BUILTIN_ENCODER_ID,
};
use jestlab_core::training::TrainingConfig;
use jestlab_core::ParamStore;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{CliError, Result};

pub const FORMAT: &str = "jestlab-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Stm,
    Mtl,
    JointEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub encoder: String,
    pub encoder_configs: Vec<EncoderConfig>,
    pub tasks: Vec<TaskId>,
    pub seed: u64,
    pub epoch: usize,
    pub stopwords: Option<Vec<String>>,
    pub training: TrainingConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

/// A model rebuilt from a checkpoint.
#[derive(Debug, Clone)]
pub enum Model {
    Stm(StmModel),
    Mtl(MtlModel),
    Joint(JointEnsemble),
}

/// What was trained, plus everything needed to rebuild it.
pub struct Meta<'a> {
    pub vocab: &'a Vocab,
    pub stopwords: Option<&'a Stopwords>,
    pub training: &'a TrainingConfig,
    pub epoch: usize,
}

impl Checkpoint {
    fn build(
        kind: ModelKind,
        configs: Vec<EncoderConfig>,
        tasks: Vec<TaskId>,
        seed: u64,
        params: &ParamStore,
        meta: &Meta<'_>,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind,
            encoder: BUILTIN_ENCODER_ID.into(),
            encoder_configs: configs,
            tasks,
            seed,
            epoch: meta.epoch,
            stopwords: meta.stopwords.map(|s| s.iter().map(String::from).collect()),
            training: meta.training.clone(),
            vocab: meta.vocab.clone(),
            params: params.clone(),
        }
    }

    pub fn of_stm(model: &StmModel, meta: &Meta<'_>) -> Self {
        Self::build(
            ModelKind::Stm,
            vec![*model.encoder().config()],
            vec![model.task()],
            model.seed(),
            model.params(),
            meta,
        )
    }

    pub fn of_mtl(model: &MtlModel, meta: &Meta<'_>) -> Self {
        Self::build(
            ModelKind::Mtl,
            vec![*model.encoder().config()],
            TaskId::ALL.to_vec(),
            model.seed(),
            model.params(),
            meta,
        )
    }

    pub fn of_joint(model: &JointEnsemble, seed: u64, meta: &Meta<'_>) -> Self {
        Self::build(
            ModelKind::JointEnsemble,
            model.encoders().iter().map(|e| *e.config()).collect(),
            vec![model.task()],
            seed,
            model.params(),
            meta,
        )
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("checkpoints serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        data::write_file(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let cp: Self = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::validation("bad_checkpoint", format!("{}: {e}", path.display())))?;
        if cp.format != FORMAT || cp.version != VERSION {
            return Err(CliError::validation(
                "bad_checkpoint",
                format!("{}: unsupported format {} v{}", path.display(), cp.format, cp.version),
            ));
        }
        if cp.encoder != BUILTIN_ENCODER_ID {
            return Err(CliError::validation(
                "bad_checkpoint",
                format!("{}: unknown encoder {}", path.display(), cp.encoder),
            ));
        }
        Ok(cp)
    }

    pub fn model(&self) -> Result<Model> {
        let bad = |m: String| CliError::validation("bad_checkpoint", m);
        let single = || match self.encoder_configs.as_slice() {
            [c] => Ok(*c),
            other => Err(bad(format!("expected one encoder config, found {}", other.len()))),
        };
        let vocab = self.vocab.len();
        let mut model = match self.kind {
            ModelKind::Stm => {
                let [task] = self.tasks[..] else {
                    return Err(bad("single-task checkpoint must name one task".into()));
                };
                Model::Stm(StmModel::new(task, single()?, vocab, self.seed))
            }
            ModelKind::Mtl => Model::Mtl(MtlModel::new(single()?, vocab, self.seed)),
            ModelKind::JointEnsemble => {
                let [task] = self.tasks[..] else {
                    return Err(bad("ensemble checkpoint must name one task".into()));
                };
                let members: Vec<_> = self.encoder_configs.iter().map(|c| (*c, vocab)).collect();
                Model::Joint(JointEnsemble::new(task, &members, self.seed)?)
            }
        };
        let params = match &mut model {
            Model::Stm(m) => m.params_mut(),
            Model::Mtl(m) => m.params_mut(),
            Model::Joint(m) => m.params_mut(),
        };
        params.restore(&self.params).map_err(bad)?;
        Ok(model)
    }

    pub fn stopwords(&self) -> Option<Stopwords> {
        self.stopwords.as_ref().map(|w| Stopwords::from_lines(&w.join("\n")))
    }

    pub fn tokenize(&self, text: &str, stopwords: Option<&Stopwords>) -> TokenizedInput {
        tokenize_with(text, stopwords, &self.vocab)
    }
}

impl Model {
    pub fn tasks(&self) -> Vec<TaskId> {
        match self {
            Model::Stm(m) => vec![m.task()],
            Model::Mtl(_) => TaskId::ALL.to_vec(),
            Model::Joint(m) => vec![m.task()],
        }
    }

    /// Output for `task` on one tokenized text.
    pub fn predict(&self, task: TaskId, input: &TokenizedInput) -> Result<TaskOutput> {
        if !self.tasks().contains(&task) {
            return Err(ModelError::TaskMismatch(task).into());
        }
        Ok(match self {
            Model::Stm(m) => m.predict(input)?,
            Model::Mtl(m) => m.forward(input)?.get(task),
            Model::Joint(m) => m.predict(&vec![input.clone(); m.encoders().len()])?,
        })
    }
}
