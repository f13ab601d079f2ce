//! Declarative run configuration (TOML).
//!
//! ```toml
//! mode = "stm"              # stm | mtl | joint-ensemble
//! tasks = ["H1B"]
//! seed = 7
//! output_dir = "runs/h1b"   # optional
//!
//! [data]
//! train = "train.csv"
//! dev = "dev.csv"           # optional public-dev set
//! test = "test.csv"         # optional; predicted after training
//! fit_fraction = 0.9        # single-task fit/validation split
//!
//! [training]
//! learning_rate = 2e-5
//! max_epochs = 10
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use jestlab_core::corpus::LabelBounds;
use jestlab_core::modeling::{EncoderConfig, TaskId, BUILTIN_ENCODER_ID};
use jestlab_core::training::TrainingConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the default artifact root.
pub const OUTPUT_ROOT_ENV: &str = "JESTLAB_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stm,
    Mtl,
    JointEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_fit_fraction")]
    pub fit_fraction: f64,
    /// Multi-task validation size; defaults to 800/9000 of the merged set.
    #[serde(default)]
    pub mtl_val_count: Option<usize>,
    /// Single-task modes: retrain on train + dev for the selected epochs.
    #[serde(default = "default_true")]
    pub retrain: bool,
}

fn default_fit_fraction() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    #[serde(default)]
    pub remove_stopwords: bool,
    /// Custom stopword file; the shipped list is used when absent.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

fn default_min_count() -> usize {
    1
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            remove_stopwords: false,
            stopwords: None,
            min_count: default_min_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub freeze_encoders: bool,
}

fn default_members() -> usize {
    2
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: default_members(),
            freeze_encoders: false,
        }
    }
}

/// The on-disk shape; `training` is merged onto the mode's defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    tasks: Vec<TaskId>,
    #[serde(default = "default_encoder")]
    encoder: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    data: DataConfig,
    #[serde(default)]
    preprocessing: Preprocessing,
    #[serde(default)]
    model: EncoderConfig,
    #[serde(default)]
    training: toml::Table,
    #[serde(default)]
    ensemble: EnsembleConfig,
    #[serde(default)]
    labels: LabelBounds,
}

fn default_encoder() -> String {
    BUILTIN_ENCODER_ID.into()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub tasks: Vec<TaskId>,
    pub encoder: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub preprocessing: Preprocessing,
    pub model: EncoderConfig,
    pub training: TrainingConfig,
    pub ensemble: EnsembleConfig,
    pub labels: LabelBounds,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub max_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::validation("invalid_config", message)
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Self::parse(&text, base, &stem, overrides)
    }

    /// `base` resolves relative paths; `name` names the default output
    /// directory.
    pub fn parse(text: &str, base: &Path, name: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(e.message().to_string()))?;
        let mut training = match raw.mode {
            Mode::Mtl => TrainingConfig::mtl(),
            Mode::Stm | Mode::JointEnsemble => TrainingConfig::stm(),
        };
        if !raw.training.is_empty() {
            let mut merged = toml::Table::try_from(&training).expect("training config serializes");
            if raw.training.contains_key("seed") {
                return Err(invalid("set `seed` at the top level, not under [training]"));
            }
            merged.extend(raw.training);
            training = merged
                .try_into()
                .map_err(|e: toml::de::Error| invalid(format!("[training]: {}", e.message())))?;
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let output_dir = match (&overrides.output_dir, raw.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => resolve(o),
            (None, None) => match std::env::var_os(OUTPUT_ROOT_ENV) {
                Some(root) => PathBuf::from(root).join(name),
                None => base.join("runs").join(name),
            },
        };
        let mut data = raw.data;
        data.train = resolve(data.train);
        data.dev = data.dev.map(resolve);
        data.test = data.test.map(resolve);
        let mut preprocessing = raw.preprocessing;
        preprocessing.stopwords = preprocessing.stopwords.map(resolve);

        let seed = overrides.seed.unwrap_or(raw.seed);
        training.seed = seed;
        if let Some(v) = overrides.max_epochs {
            training.max_epochs = v;
        }
        if let Some(v) = overrides.learning_rate {
            training.learning_rate = v;
        }
        if let Some(v) = overrides.patience {
            training.patience = v;
        }
        if let Some(v) = overrides.batch_size {
            training.batch_size = v;
        }
        let config = Self {
            mode: raw.mode,
            tasks: raw.tasks,
            encoder: raw.encoder,
            seed,
            output_dir,
            data,
            preprocessing,
            model: raw.model,
            training,
            ensemble: raw.ensemble,
            labels: raw.labels,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let unique: BTreeSet<TaskId> = self.tasks.iter().copied().collect();
        if unique.len() != self.tasks.len() {
            return Err(invalid("tasks are listed more than once"));
        }
        match self.mode {
            Mode::Stm | Mode::JointEnsemble if self.tasks.len() != 1 => {
                return Err(invalid(format!(
                    "{} mode names exactly one task, found {}",
                    self.mode_name(),
                    self.tasks.len()
                )))
            }
            Mode::Mtl if unique.len() != TaskId::ALL.len() => {
                return Err(invalid(format!(
                    "mtl mode names all four tasks, found {}",
                    self.tasks.len()
                )))
            }
            _ => {}
        }
        if self.encoder != BUILTIN_ENCODER_ID {
            return Err(invalid(format!("unknown encoder `{}`", self.encoder)));
        }
        let m = &self.model;
        if m.hidden == 0 || m.heads == 0 || !m.hidden.is_multiple_of(m.heads) || m.layers == 0 || m.max_len < 2 {
            return Err(invalid(
                "[model] needs hidden divisible by heads, layers >= 1 and max_len >= 2",
            ));
        }
        if !(self.data.fit_fraction > 0.0 && self.data.fit_fraction < 1.0) {
            return Err(invalid("data.fit_fraction must lie in (0, 1)"));
        }
        if self.mode == Mode::JointEnsemble && self.ensemble.members == 0 {
            return Err(invalid("ensemble.members must be at least 1"));
        }
        if self.preprocessing.min_count == 0 {
            return Err(invalid("preprocessing.min_count must be at least 1"));
        }
        self.training.validate()?;
        Ok(())
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Stm => "stm",
            Mode::Mtl => "mtl",
            Mode::JointEnsemble => "joint-ensemble",
        }
    }

    /// Canonical JSON of the resolved configuration, minus the output
    /// directory.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        value.to_string()
    }
}
