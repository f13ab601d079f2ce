//! CSV and text file formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use jestlab_core::corpus::{self, CorpusError, Dataset, LabelBounds, Provenance, Record, Stopwords, COLUMNS};
use jestlab_core::ensembling::EnsembleWeights;
use jestlab_core::modeling::TaskId;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::validation("csv_error", format!("{}: {e}", path.display()))
}

fn column_index(headers: &csv::StringRecord, path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut map = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if map.insert(h.trim().to_string(), i).is_some() {
            return Err(CliError::validation(
                "duplicate_column",
                format!("{}: column `{h}` appears twice", path.display()),
            ));
        }
    }
    Ok(map)
}

fn require(columns: &BTreeMap<String, usize>, names: &[&str], path: &Path) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            columns
                .get(*n)
                .copied()
                .ok_or_else(|| CliError::from(CorpusError::MissingColumn((*n).to_string())).context(path.display()))
        })
        .collect()
}

/// Loads a labelled dataset. Row numbers in errors are 1-based data rows.
pub fn load_dataset(path: &Path, provenance: Provenance, bounds: &LabelBounds) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idx = require(&column_index(&headers, path)?, &COLUMNS, path)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let cell = |k: usize| row.get(idx[k]).unwrap_or("");
        let cells = [cell(0), cell(1), cell(2), cell(3), cell(4), cell(5)];
        records.push(corpus::parse_row(i + 1, cells, bounds).map_err(|e| CliError::from(e).context(path.display()))?);
    }
    Dataset::new(records, provenance).map_err(|e| CliError::from(e).context(path.display()))
}

/// `(id, text)` pairs from any CSV with `id` and `text` columns.
pub fn load_texts(path: &Path) -> Result<Vec<(i64, String)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idx = require(&column_index(&headers, path)?, &["id", "text"], path)?;
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let raw = row.get(idx[0]).unwrap_or("");
        let id: i64 = raw.trim().parse().map_err(|_| {
            CliError::from(CorpusError::ParseError {
                row: i + 1,
                column: "id",
                value: raw.to_string(),
            })
            .context(path.display())
        })?;
        if !seen.insert(id) {
            return Err(CliError::from(CorpusError::DuplicateId(id)).context(path.display()));
        }
        out.push((id, row.get(idx[1]).unwrap_or("").to_string()));
    }
    Ok(out)
}

/// Renders a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn dataset_csv(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in dataset.records() {
        let rating = r.humor_rating.map(fmt_f64).unwrap_or_default();
        let controversy = r.humor_controversy.map(flag).unwrap_or_default();
        w.write_record([
            r.id.to_string().as_str(),
            &r.text,
            flag(r.is_humor),
            &rating,
            controversy,
            &fmt_f64(r.offense_rating),
        ])
        .expect("in-memory write");
    }
    Ok(w.into_inner().expect("in-memory flush"))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_stopwords(path: &Path) -> Result<Stopwords> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Stopwords::from_lines(&text))
}

/// Prediction file: `id,prediction`.
pub fn predictions_csv(rows: &[(i64, f64)]) -> Vec<u8> {
    let mut out = String::from("id,prediction\n");
    for (id, p) in rows {
        out.push_str(&format!("{id},{}\n", fmt_f64(*p)));
    }
    out.into_bytes()
}

fn two_columns(path: &Path, expected: [&str; 2]) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idx = require(&column_index(&headers, path)?, &expected, path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        out.push((
            row.get(idx[0]).unwrap_or("").trim().to_string(),
            row.get(idx[1]).unwrap_or("").trim().to_string(),
        ));
    }
    Ok(out)
}

fn parse_number<T: std::str::FromStr>(path: &Path, row: usize, column: &'static str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        CliError::from(CorpusError::ParseError {
            row,
            column,
            value: raw.to_string(),
        })
        .context(path.display())
    })
}

pub fn load_predictions(path: &Path) -> Result<Vec<(i64, f64)>> {
    two_columns(path, ["id", "prediction"])?
        .into_iter()
        .enumerate()
        .map(|(i, (id, p))| {
            Ok((
                parse_number(path, i + 1, "id", &id)?,
                parse_number(path, i + 1, "prediction", &p)?,
            ))
        })
        .collect()
}

/// Weights file: `model_id,lambda`; validated against the simplex.
pub fn load_weights(path: &Path) -> Result<(Vec<String>, EnsembleWeights)> {
    let rows = two_columns(path, ["model_id", "lambda"])?;
    let mut ids = Vec::new();
    let mut lambdas = Vec::new();
    for (i, (id, l)) in rows.into_iter().enumerate() {
        lambdas.push(parse_number::<f64>(path, i + 1, "lambda", &l)?);
        ids.push(id);
    }
    let weights = EnsembleWeights::new(lambdas).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((ids, weights))
}

pub fn weights_csv(ids: &[String], lambdas: &[f64]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "lambda"]).expect("in-memory write");
    for (id, l) in ids.iter().zip(lambdas) {
        w.write_record([id.as_str(), &fmt_f64(*l)]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Gold values for `task` keyed by id. Accepts a labelled dataset CSV (rows
/// without a label for the task are skipped) or an `id,gold` file.
pub fn load_gold(path: &Path, task: TaskId, bounds: &LabelBounds) -> Result<BTreeMap<i64, f64>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if column_index(&headers, path)?.contains_key("gold") {
        return two_columns(path, ["id", "gold"])?
            .into_iter()
            .enumerate()
            .map(|(i, (id, g))| {
                Ok((
                    parse_number(path, i + 1, "id", &id)?,
                    parse_number(path, i + 1, "gold", &g)?,
                ))
            })
            .collect();
    }
    let dataset = load_dataset(path, Provenance::PublicDev, bounds)?;
    Ok(gold_values(dataset.records(), task))
}

pub fn gold_values(records: &[Record], task: TaskId) -> BTreeMap<i64, f64> {
    records
        .iter()
        .filter_map(|r| {
            task.target(r).map(|t| {
                let v = match t {
                    jestlab_core::modeling::Target::Class(c) => c as f64,
                    jestlab_core::modeling::Target::Value(v) => v,
                };
                (r.id, v)
            })
        })
        .collect()
}

/// Model id of a prediction file: its file stem.
pub fn model_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
