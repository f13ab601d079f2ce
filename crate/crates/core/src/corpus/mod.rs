//! Labelled records, dataset splits and tokenization.
//!
//! Every text carries a humor flag and an offense rating. Humor rating and
//! humor controversy exist only for humorous texts; a humorous row missing
//! either, or a non-humorous row carrying either, is rejected.

mod tokenize;

pub use tokenize::{tokenize, tokenize_with, words, Stopwords, TokenizedInput, Vocab};

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

/// Column names of the ingestion CSV, in order.
pub const COLUMNS: [&str; 6] = [
    "id",
    "text",
    "is_humor",
    "humor_rating",
    "humor_controversy",
    "offense_rating",
];

/// Validation-set size relative to the merged set in the multi-task protocol
/// (800 of 9000 records).
pub const MTL_VAL_RATIO: (usize, usize) = (800, 9000);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row} (id {id}): label invariant violated: {reason}")]
    LabelInvariantViolation { row: usize, id: i64, reason: String },
    #[error("row {row}: cannot parse column `{column}` from {value:?}")]
    ParseError {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("duplicate record id {0}")]
    DuplicateId(i64),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
}

/// Inclusive bounds for a rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRange {
    pub min: f64,
    pub max: f64,
}

impl RatingRange {
    pub const ZERO_TO_FIVE: Self = Self { min: 0.0, max: 5.0 };

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelBounds {
    pub humor: RatingRange,
    pub offense: RatingRange,
}

impl Default for LabelBounds {
    fn default() -> Self {
        Self {
            humor: RatingRange::ZERO_TO_FIVE,
            offense: RatingRange::ZERO_TO_FIVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: i64,
    pub text: String,
    pub is_humor: bool,
    pub humor_rating: Option<f64>,
    pub humor_controversy: Option<bool>,
    pub offense_rating: f64,
}

impl Record {
    /// Checks the conditional-label and range invariants. `row` is only used
    /// for error reporting.
    pub fn validate(&self, row: usize, bounds: &LabelBounds) -> Result<(), CorpusError> {
        let violation = |reason: String| CorpusError::LabelInvariantViolation {
            row,
            id: self.id,
            reason,
        };
        match (self.is_humor, self.humor_rating, self.humor_controversy) {
            (true, Some(_), Some(_)) | (false, None, None) => {}
            (true, _, _) => {
                return Err(violation(
                    "humorous text must carry humor_rating and humor_controversy".into(),
                ))
            }
            (false, _, _) => {
                return Err(violation(
                    "non-humorous text must leave humor_rating and humor_controversy empty".into(),
                ))
            }
        }
        if !self.offense_rating.is_finite() || !bounds.offense.contains(self.offense_rating) {
            return Err(violation(alloc::format!(
                "offense_rating {} outside [{}, {}]",
                self.offense_rating,
                bounds.offense.min,
                bounds.offense.max
            )));
        }
        if let Some(h) = self.humor_rating {
            if !h.is_finite() || !bounds.humor.contains(h) {
                return Err(violation(alloc::format!(
                    "humor_rating {h} outside [{}, {}]",
                    bounds.humor.min,
                    bounds.humor.max
                )));
            }
        }
        Ok(())
    }
}

/// Parses one data row (the six cells in [`COLUMNS`] order) into a validated
/// record. `row` is the 1-based data row number used in errors.
pub fn parse_row(row: usize, cells: [&str; 6], bounds: &LabelBounds) -> Result<Record, CorpusError> {
    let [id, text, is_humor, humor_rating, controversy, offense] = cells;
    let parse_err = |column: &'static str, value: &str| CorpusError::ParseError {
        row,
        column,
        value: value.to_string(),
    };
    let id: i64 = id.trim().parse().map_err(|_| parse_err("id", id))?;
    let is_humor = parse_flag(is_humor).ok_or_else(|| parse_err("is_humor", is_humor))?;
    let humor_rating = match humor_rating.trim() {
        "" => None,
        v => Some(v.parse::<f64>().map_err(|_| parse_err("humor_rating", v))?),
    };
    let humor_controversy = match controversy.trim() {
        "" => None,
        v => Some(parse_flag(v).ok_or_else(|| parse_err("humor_controversy", v))?),
    };
    let offense_rating = offense
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err("offense_rating", offense))?;
    let record = Record {
        id,
        text: text.to_string(),
        is_humor,
        humor_rating,
        humor_controversy,
        offense_rating,
    };
    record.validate(row, bounds)?;
    Ok(record)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "1.0" | "true" | "True" => Some(true),
        "0" | "0.0" | "false" | "False" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Train,
    PublicDev,
    Merged,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Record>,
    provenance: Provenance,
}

impl Dataset {
    /// Fails with [`CorpusError::DuplicateId`] if two records share an id.
    pub fn new(records: Vec<Record>, provenance: Provenance) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.id) {
                return Err(CorpusError::DuplicateId(r.id));
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self {
            records: Vec::new(),
            provenance,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn humorous_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_humor).count()
    }

    /// In-memory union of two datasets (train + public-dev).
    pub fn merge(a: &Dataset, b: &Dataset) -> Result<Self, CorpusError> {
        let mut records = a.records.clone();
        records.extend(b.records.iter().cloned());
        Self::new(records, Provenance::Merged)
    }

    fn take_indices(&self, idx: &[usize]) -> Self {
        Self {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    fn shuffled_indices(&self, seed: u64, label: &str) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        idx.shuffle(&mut seed::stream(seed, label));
        idx
    }
}

/// Seeded fit/validation split with `round(fraction * |train|)` fit records.
pub fn split_stm(train: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::DegenerateSplit(alloc::format!(
            "fraction {fraction} not in (0, 1)"
        )));
    }
    let n = train.len();
    let fit_len = libm::round(fraction * n as f64) as usize;
    if fit_len == 0 || fit_len >= n {
        return Err(CorpusError::DegenerateSplit(alloc::format!(
            "{n} records with fraction {fraction} leaves an empty part"
        )));
    }
    let idx = train.shuffled_indices(seed, "split:stm");
    Ok((train.take_indices(&idx[..fit_len]), train.take_indices(&idx[fit_len..])))
}

/// Default validation count for the multi-task split: the 800/9000 ratio
/// scaled to `n`, rounded.
pub fn default_mtl_val_count(n: usize) -> usize {
    let (num, den) = MTL_VAL_RATIO;
    libm::round(n as f64 * num as f64 / den as f64) as usize
}

/// Uniform random split holding out `val_count` records (or the scaled
/// default when `None`).
pub fn split_mtl(merged: &Dataset, val_count: Option<usize>, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
    let n = merged.len();
    let val_count = val_count.unwrap_or_else(|| default_mtl_val_count(n));
    if val_count == 0 || val_count >= n {
        return Err(CorpusError::DegenerateSplit(alloc::format!(
            "val_count {val_count} with {n} records"
        )));
    }
    let idx = merged.shuffled_indices(seed, "split:mtl");
    let fit_len = n - val_count;
    Ok((
        merged.take_indices(&idx[..fit_len]),
        merged.take_indices(&idx[fit_len..]),
    ))
}
