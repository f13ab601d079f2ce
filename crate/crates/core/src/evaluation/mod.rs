//! Shared-task metrics, report tables and the controversy/offense analysis.

mod metrics;

pub use metrics::{accuracy, f_score, rmse, Confusion, FScore};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::corpus::Dataset;
use crate::modeling::{TaskId, TaskKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions vs {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("non-binary label at index {index}")]
    NonBinary { index: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("no values to score")]
    Empty,
    #[error("model `{model}` has more than one run for {task}")]
    DuplicateRun { model: String, task: TaskId },
}

/// Converts `0.0`/`1.0` predictions to labels.
pub fn to_labels(values: &[f64]) -> Result<Vec<u8>, EvalError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(EvalError::NonBinary { index: i })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskMetrics {
    Classification { f_score: f64, accuracy: f64 },
    Regression { rmse: f64 },
}

/// Scores one task: F-score and accuracy for classification (predictions
/// must be 0/1 labels), RMSE for regression.
pub fn score(task: TaskId, predictions: &[f64], gold: &[f64]) -> Result<TaskMetrics, EvalError> {
    match task.kind() {
        TaskKind::Classification => {
            let (p, g) = (to_labels(predictions)?, to_labels(gold)?);
            Ok(TaskMetrics::Classification {
                f_score: f_score(&p, &g)?.value,
                accuracy: accuracy(&p, &g)?,
            })
        }
        TaskKind::Regression => Ok(TaskMetrics::Regression {
            rmse: rmse(predictions, gold)?,
        }),
    }
}

/// One model's predictions on one task, aligned with gold values.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub model: String,
    pub task: TaskId,
    pub predictions: Vec<f64>,
    pub gold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    /// Indexed in [`TaskId::ALL`] order.
    pub cells: [Option<TaskMetrics>; 4],
}

/// Per-model, per-task metrics laid out like the shared-task results table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

const COLUMNS: [&str; 7] = [
    "Model",
    "Task1-a F-Score",
    "Task1-a Accuracy",
    "Task1-b RMSE",
    "Task1-c F-Score",
    "Task1-c Accuracy",
    "Task2 RMSE",
];

const CSV_COLUMNS: [&str; 7] = [
    "model",
    "task1a_f_score",
    "task1a_accuracy",
    "task1b_rmse",
    "task1c_f_score",
    "task1c_accuracy",
    "task2_rmse",
];

fn task_index(task: TaskId) -> usize {
    TaskId::ALL.iter().position(|&t| t == task).expect("known task")
}

/// Scores every run. Rows keep the order in which models first appear.
pub fn build_report(runs: &[EvalRun]) -> Result<MetricReport, EvalError> {
    let mut report = MetricReport::default();
    for run in runs {
        let metrics = score(run.task, &run.predictions, &run.gold)?;
        let row = match report.rows.iter_mut().position(|r| r.model == run.model) {
            Some(i) => &mut report.rows[i],
            None => {
                report.rows.push(ReportRow {
                    model: run.model.clone(),
                    cells: [None; 4],
                });
                report.rows.last_mut().expect("just pushed")
            }
        };
        let cell = &mut row.cells[task_index(run.task)];
        if cell.is_some() {
            return Err(EvalError::DuplicateRun {
                model: run.model.clone(),
                task: run.task,
            });
        }
        *cell = Some(metrics);
    }
    Ok(report)
}

impl ReportRow {
    /// Six metric cells formatted to four decimals, `None` where missing.
    pub fn formatted_cells(&self) -> [Option<String>; 6] {
        let fmt = |v: f64| Some(format!("{v:.4}"));
        let mut out: [Option<String>; 6] = Default::default();
        let slots = [(0, 0), (1, 2), (2, 3), (3, 5)];
        for (task_idx, col) in slots {
            match self.cells[task_idx] {
                Some(TaskMetrics::Classification { f_score, accuracy }) => {
                    out[col] = fmt(f_score);
                    out[col + 1] = fmt(accuracy);
                }
                Some(TaskMetrics::Regression { rmse }) => out[col] = fmt(rmse),
                None => {}
            }
        }
        out
    }
}

impl MetricReport {
    /// Aligned plain-text table; missing cells are `-`.
    pub fn render_table(&self) -> String {
        let mut grid: Vec<[String; 7]> = Vec::with_capacity(self.rows.len() + 1);
        grid.push(COLUMNS.map(String::from));
        for row in &self.rows {
            let cells = row.formatted_cells();
            let mut line: [String; 7] = Default::default();
            line[0] = row.model.clone();
            for (dst, src) in line[1..].iter_mut().zip(cells) {
                *dst = src.unwrap_or_else(|| String::from("-"));
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(
                    |(c, (s, &w))| {
                        if c == 0 {
                            format!("{s:<w$}")
                        } else {
                            format!("{s:>w$}")
                        }
                    },
                )
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                let _ = writeln!(out, "{}", rule.join("-+-"));
            }
        }
        out
    }

    /// CSV with one row per model; missing cells are empty.
    pub fn render_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_field(&row.model));
            for cell in row.formatted_cells() {
                out.push(',');
                out.push_str(cell.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        String::from(s)
    }
}

/// Mean offense rating of humorous texts, split by the controversy label.
#[derive(Debug, Clone, PartialEq)]
pub struct ControversyAnalysis {
    pub controversial_count: usize,
    pub non_controversial_count: usize,
    pub controversial_mean: Option<f64>,
    pub non_controversial_mean: Option<f64>,
    /// Absolute difference of the two means, when both exist.
    pub difference: Option<f64>,
}

impl ControversyAnalysis {
    /// One of the groups is empty.
    pub fn is_partial(&self) -> bool {
        self.difference.is_none()
    }
}

pub fn controversy_offense_analysis(dataset: &Dataset) -> ControversyAnalysis {
    let (mut sum_c, mut n_c, mut sum_n, mut n_n) = (0.0, 0usize, 0.0, 0usize);
    for r in dataset.records() {
        match r.humor_controversy {
            Some(true) => {
                sum_c += r.offense_rating;
                n_c += 1;
            }
            Some(false) => {
                sum_n += r.offense_rating;
                n_n += 1;
            }
            None => {}
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    let (mc, mn) = (mean(sum_c, n_c), mean(sum_n, n_n));
    ControversyAnalysis {
        controversial_count: n_c,
        non_controversial_count: n_n,
        controversial_mean: mc,
        non_controversial_mean: mn,
        difference: mc.zip(mn).map(|(a, b)| libm::fabs(a - b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Provenance, Record};
    use alloc::vec;

    fn run(model: &str, task: TaskId, p: Vec<f64>, g: Vec<f64>) -> EvalRun {
        EvalRun {
            model: model.into(),
            task,
            predictions: p,
            gold: g,
        }
    }

    #[test]
    fn four_decimal_rendering() {
        // RMSE of a single residual of 0.521 is 0.521.
        let r = build_report(&[run("STM + MTL", TaskId::H1B, vec![0.521], vec![0.0])]).unwrap();
        let table = r.render_table();
        assert!(table.contains("0.5210"), "{table}");
    }

    #[test]
    fn sparse_rows_render_dashes() {
        let r = build_report(&[run("m", TaskId::H1B, vec![1.0, 2.0], vec![1.0, 2.0])]).unwrap();
        let cells = r.rows[0].formatted_cells();
        assert_eq!(cells[2].as_deref(), Some("0.0000"));
        assert_eq!(cells.iter().filter(|c| c.is_none()).count(), 5);
        let table = r.render_table();
        let data_line = table.lines().nth(2).unwrap();
        assert_eq!(
            data_line.matches(" - ").count() + usize::from(data_line.ends_with(" -")),
            5
        );
        assert_eq!(r.render_csv().lines().nth(1).unwrap(), "m,,,0.0000,,,");
    }

    #[test]
    fn empty_report() {
        let r = build_report(&[]).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.render_table().lines().count(), 2);
        assert_eq!(r.render_csv().lines().count(), 1);
    }

    #[test]
    fn rows_group_by_model() {
        let r = build_report(&[
            run("a", TaskId::H1A, vec![1.0, 0.0], vec![1.0, 1.0]),
            run("b", TaskId::OFF2, vec![1.0], vec![2.0]),
            run("a", TaskId::OFF2, vec![1.0], vec![1.0]),
        ])
        .unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(
            r.rows[0].cells[0],
            Some(TaskMetrics::Classification {
                f_score: 2.0 / 3.0,
                accuracy: 0.5
            })
        );
        assert!(build_report(&[
            run("a", TaskId::OFF2, vec![1.0], vec![1.0]),
            run("a", TaskId::OFF2, vec![1.0], vec![1.0]),
        ])
        .is_err());
        assert!(matches!(
            build_report(&[run("a", TaskId::H1A, vec![0.5], vec![1.0])]),
            Err(EvalError::NonBinary { .. })
        ));
    }

    fn humorous(id: i64, controversial: bool, offense: f64) -> Record {
        Record {
            id,
            text: String::new(),
            is_humor: true,
            humor_rating: Some(1.0),
            humor_controversy: Some(controversial),
            offense_rating: offense,
        }
    }

    #[test]
    fn controversy_group_means() {
        let ds = Dataset::new(
            vec![
                humorous(1, true, 2.0),
                humorous(2, true, 2.0),
                humorous(3, false, 1.0),
                humorous(4, false, 1.0),
            ],
            Provenance::Synthetic,
        )
        .unwrap();
        let a = controversy_offense_analysis(&ds);
        assert_eq!(a.controversial_mean, Some(2.0));
        assert_eq!(a.non_controversial_mean, Some(1.0));
        assert_eq!(a.difference, Some(1.0));
    }

    #[test]
    fn controversy_degenerate_groups() {
        let one_sided = Dataset::new(vec![humorous(1, true, 3.0)], Provenance::Synthetic).unwrap();
        let a = controversy_offense_analysis(&one_sided);
        assert!(a.is_partial());
        assert_eq!(a.non_controversial_mean, None);
        let flat = Dataset::new(
            vec![humorous(1, true, 1.5), humorous(2, false, 1.5)],
            Provenance::Synthetic,
        )
        .unwrap();
        assert_eq!(controversy_offense_analysis(&flat).difference, Some(0.0));
    }
}
