use std::fmt;
use std::path::Path;

use jestlab_core::corpus::CorpusError;
use jestlab_core::ensembling::EnsembleError;
use jestlab_core::evaluation::EvalError;
use jestlab_core::modeling::ModelError;
use jestlab_core::training::TrainingError;

/// Whether a failure stems from bad input (exit 1) or from running the
/// pipeline (exit 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Validation,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub severity: Severity,
    /// Stable machine-readable identifier, e.g. `simplex_violation`.
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Validation,
            code,
            message: message.into(),
        }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Runtime,
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::runtime("io", format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self.severity {
            Severity::Validation => 1,
            Severity::Runtime => 2,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({
            "error": self.code,
            "exit": self.exit_code(),
            "message": self.message,
        })
        .to_string()
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::MissingColumn(_) => "missing_column",
            CorpusError::LabelInvariantViolation { .. } => "label_invariant_violation",
            CorpusError::ParseError { .. } => "parse_error",
            CorpusError::DuplicateId(_) => "duplicate_id",
            CorpusError::DegenerateSplit(_) => "degenerate_split",
        };
        Self::validation(code, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::TaskMismatch(_) => "task_mismatch",
            ModelError::DimensionMismatch { .. } => "dimension_mismatch",
            _ => "model_error",
        };
        Self::validation(code, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::validation("evaluation_error", e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        let code = match &e {
            EnsembleError::WeightArityMismatch { .. } => "weight_arity_mismatch",
            EnsembleError::SimplexViolation(_) => "simplex_violation",
            EnsembleError::EmptyPredictions => "empty_predictions",
            EnsembleError::NonBinaryPrediction { .. } => "non_binary_prediction",
            EnsembleError::DimensionMismatch(_) => "dimension_mismatch",
            EnsembleError::AlignmentError(_) => "alignment_error",
            EnsembleError::WrongTaskKind { .. } => "task_mismatch",
            EnsembleError::InvalidStep(_) => "invalid_step",
        };
        Self::validation(code, e.to_string())
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Model(m) => m.into(),
            TrainingError::InvalidConfig(_) => Self::validation("invalid_config", e.to_string()),
            TrainingError::DegenerateSplit(_) => Self::validation("degenerate_split", e.to_string()),
            TrainingError::NonFiniteLoss { .. } => Self::runtime("non_finite_loss", e.to_string()),
            _ => Self::runtime("training_error", e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
