//! Evidence precision/recall/F1, token statistics and condition-level reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::TerminationReason;
use crate::error::{Error, Result};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Title-level P/R/F1. Selected titles are de-duplicated first; an empty
/// selection scores zero everywhere.
pub fn evidence_prf<S: AsRef<str>>(selected_titles: &[S], gold_titles: &BTreeSet<String>) -> Result<Prf> {
    if gold_titles.is_empty() {
        return Err(Error::invalid("gold title set is empty"));
    }
    let sel: BTreeSet<&str> = selected_titles.iter().map(AsRef::as_ref).collect();
    if sel.is_empty() {
        return Ok(Prf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let hit = sel.iter().filter(|t| gold_titles.contains(**t)).count() as f64;
    let precision = hit / sel.len() as f64;
    let recall = hit / gold_titles.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf { precision, recall, f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub example_id: String,
    pub condition: String,
    pub mode: String,
    pub correct: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub input_tokens: usize,
    pub docs_passed: usize,
    pub termination_reason: Option<TerminationReason>,
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub result: ExampleResult,
    #[serde(default)]
    pub predicted_answer: String,
    #[serde(default)]
    pub gold_answer: String,
    #[serde(default)]
    pub selected_titles: Vec<String>,
    /// Set when the example failed; such records are excluded from aggregates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub avg_tokens: f64,
    pub avg_docs: f64,
    /// Mean input tokens over correctly answered examples; `None` when none is correct.
    pub tokens_per_correct: Option<f64>,
}

pub fn token_stats(results: &[ExampleResult]) -> Result<TokenStats> {
    if results.is_empty() {
        return Err(Error::invalid("token statistics need at least one result"));
    }
    let n = results.len() as f64;
    let avg_tokens = results.iter().map(|r| r.input_tokens as f64).sum::<f64>() / n;
    let avg_docs = results.iter().map(|r| r.docs_passed as f64).sum::<f64>() / n;
    let correct: Vec<f64> = results
        .iter()
        .filter(|r| r.correct)
        .map(|r| r.input_tokens as f64)
        .collect();
    let tokens_per_correct = (!correct.is_empty()).then(|| correct.iter().sum::<f64>() / correct.len() as f64);
    Ok(TokenStats {
        avg_tokens,
        avg_docs,
        tokens_per_correct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub condition: String,
    pub mode: String,
    pub n: usize,
    pub accuracy_pct: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub avg_tokens: f64,
    pub avg_docs: f64,
    pub tokens_per_correct: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub failed: usize,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "condition",
    "mode",
    "n",
    "accuracy_pct",
    "precision",
    "recall",
    "f1",
    "avg_tokens",
    "avg_docs",
    "tokens_per_correct",
];

const UNDEFINED: &str = "n/a";

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// One row per (condition, mode) present in `records`, sorted by key. Failed
/// records are counted but not aggregated.
pub fn build_report(records: &[ResultRecord]) -> Result<Report> {
    let mut groups: BTreeMap<(String, String), Vec<&ExampleResult>> = BTreeMap::new();
    let mut failed = 0;
    for r in records {
        if r.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "record {} has schema version {}, expected {RESULT_SCHEMA_VERSION}",
                r.result.example_id, r.schema_version
            )));
        }
        if r.error.is_some() {
            failed += 1;
            continue;
        }
        groups
            .entry((r.result.condition.clone(), r.result.mode.clone()))
            .or_default()
            .push(&r.result);
    }
    let rows = groups
        .into_iter()
        .map(|((condition, mode), rs)| {
            let owned: Vec<ExampleResult> = rs.iter().map(|r| (*r).clone()).collect();
            let stats = token_stats(&owned).expect("groups are non-empty");
            let n = rs.len();
            ReportRow {
                condition,
                mode,
                n,
                accuracy_pct: 100.0 * rs.iter().filter(|r| r.correct).count() as f64 / n as f64,
                precision: mean(rs.iter().map(|r| r.precision)),
                recall: mean(rs.iter().map(|r| r.recall)),
                f1: mean(rs.iter().map(|r| r.f1)),
                avg_tokens: stats.avg_tokens,
                avg_docs: stats.avg_docs,
                tokens_per_correct: stats.tokens_per_correct,
            }
        })
        .collect();
    Ok(Report { rows, failed })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            index,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl ReportRow {
    fn cells(&self) -> [String; 10] {
        [
            self.condition.clone(),
            self.mode.clone(),
            self.n.to_string(),
            format!("{:.1}", self.accuracy_pct),
            format!("{:.3}", self.precision),
            format!("{:.3}", self.recall),
            format!("{:.3}", self.f1),
            format!("{:.1}", self.avg_tokens),
            format!("{:.2}", self.avg_docs),
            self.tokens_per_correct
                .map(|t| format!("{t:.1}"))
                .unwrap_or_else(|| UNDEFINED.to_string()),
        ]
    }
}

impl Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(REPORT_COLUMNS).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.cells()).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Space-aligned table: text columns left-aligned, numbers right-aligned.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 10]> = self.rows.iter().map(ReportRow::cells).collect();
        let mut widths: Vec<usize> = REPORT_COLUMNS.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            let parts: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i < 2 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        let header: Vec<String> = REPORT_COLUMNS.iter().map(|s| s.to_string()).collect();
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}
