//! The run ledger and its derived analyses: per-iteration best/average
//! curves, diversity statistics, and the convergence summary.
//!
//! One run directory holds `config.json`, `ledger.jsonl` (record 0 is the
//! initial population, records 1..=T the iterations), `cache.jsonl`,
//! `summary.json`, `curves.csv`, `diversity.csv`, and `best_prompt.txt`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::EvoError;
use crate::prompt::Population;
use crate::provider::BudgetSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: String,
    pub text: String,
    pub score: f64,
}

/// One immutable snapshot of the loop: the population after iteration
/// `iteration` (0 = initial scoring), plus budget state at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub population: Vec<MemberRecord>,
    pub best_index: usize,
    pub best_score: f64,
    pub mean_score: f64,
    /// Operator invocations made during this iteration (0 for record 0).
    pub operator_calls: u64,
    pub budget: BudgetSnapshot,
}

impl IterationRecord {
    pub fn from_population(
        iteration: usize,
        population: &Population,
        operator_calls: u64,
        budget: BudgetSnapshot,
    ) -> IterationRecord {
        let members: Vec<MemberRecord> = population
            .members()
            .iter()
            .map(|m| MemberRecord {
                id: m.prompt.id.to_string(),
                text: m.prompt.text.clone(),
                score: m.score.value(),
            })
            .collect();
        IterationRecord {
            iteration,
            best_index: population.best_index(),
            best_score: population.get(population.best_index()).score.value(),
            mean_score: population.mean_score(),
            population: members,
            operator_calls,
            budget,
        }
    }
}

/// Append-only JSONL writer; every record is flushed before the next engine
/// step begins, so a crash preserves the ledger through the last record.
pub struct LedgerWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    next_iteration: usize,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<LedgerWriter, EvoError> {
        let file = File::create(path)
            .map_err(|e| EvoError::Io(format!("cannot create {}: {e}", path.display())))?;
        Ok(LedgerWriter {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
            next_iteration: 0,
        })
    }

    pub fn append(&mut self, record: &IterationRecord) -> Result<(), EvoError> {
        if record.iteration != self.next_iteration {
            return Err(EvoError::Other(format!(
                "ledger records must be contiguous: expected iteration {}, got {}",
                self.next_iteration, record.iteration
            )));
        }
        let line = serde_json::to_string(record)
            .map_err(|e| EvoError::Other(format!("ledger record serialization: {e}")))?;
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| EvoError::Io(format!("cannot append to {}: {e}", self.path.display())))?;
        self.next_iteration += 1;
        Ok(())
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<IterationRecord>, EvoError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| EvoError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: IterationRecord = serde_json::from_str(line).map_err(|e| {
            EvoError::Other(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if record.iteration != records.len() {
            return Err(EvoError::Other(format!(
                "{}: iteration records must be contiguous 0..; found {} at line {}",
                path.display(),
                record.iteration,
                lineno + 1
            )));
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub iteration: usize,
    /// Mean whitespace-token count over the population.
    pub avg_length: f64,
    /// Population variance of token counts.
    pub length_variance: f64,
    /// Words in this iteration's vocabulary absent from every earlier one.
    pub new_words: usize,
}

pub fn diversity_stats(records: &[IterationRecord]) -> Vec<DiversityRow> {
    let mut cumulative: BTreeSet<String> = BTreeSet::new();
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let lengths: Vec<f64> = record
            .population
            .iter()
            .map(|m| m.text.split_whitespace().count() as f64)
            .collect();
        let n = lengths.len().max(1) as f64;
        let avg = lengths.iter().sum::<f64>() / n;
        let variance = lengths.iter().map(|l| (l - avg).powi(2)).sum::<f64>() / n;
        let vocab: BTreeSet<String> = record
            .population
            .iter()
            .flat_map(|m| m.text.split_whitespace().map(|w| w.to_lowercase()))
            .collect();
        let new_words = if record.iteration == 0 {
            0
        } else {
            vocab.difference(&cumulative).count()
        };
        cumulative.extend(vocab);
        rows.push(DiversityRow {
            iteration: record.iteration,
            avg_length: avg,
            length_variance: variance,
            new_words,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub best_curve: Vec<f64>,
    pub mean_curve: Vec<f64>,
    /// First iteration t whose improvement and its predecessor's are both
    /// below the threshold; None if the curve never settles within T.
    pub converged_at: Option<usize>,
}

/// Convergence rule: the mean-score improvement d(t) = mean(t) - mean(t-1)
/// stays below `threshold` for two consecutive iterations; the summary
/// reports the second of the two.
pub fn convergence_summary(records: &[IterationRecord], threshold: f64) -> ConvergenceSummary {
    let best_curve: Vec<f64> = records.iter().map(|r| r.best_score).collect();
    let mean_curve: Vec<f64> = records.iter().map(|r| r.mean_score).collect();
    let mut converged_at = None;
    for t in 2..mean_curve.len() {
        let d_prev = mean_curve[t - 1] - mean_curve[t - 2];
        let d_here = mean_curve[t] - mean_curve[t - 1];
        if d_prev < threshold && d_here < threshold {
            converged_at = Some(t);
            break;
        }
    }
    ConvergenceSummary {
        best_curve,
        mean_curve,
        converged_at,
    }
}

/// `curves.csv`: iteration, best, mean.
pub fn write_curves_csv(path: &Path, records: &[IterationRecord]) -> Result<(), EvoError> {
    let mut out = String::from("iteration,best,mean\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.best_score, r.mean_score));
    }
    std::fs::write(path, out)
        .map_err(|e| EvoError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `diversity.csv`: iteration, avg_length, length_variance, new_words.
pub fn write_diversity_csv(path: &Path, rows: &[DiversityRow]) -> Result<(), EvoError> {
    let mut out = String::from("iteration,avg_length,length_variance,new_words\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.avg_length, r.length_variance, r.new_words
        ));
    }
    std::fs::write(path, out)
        .map_err(|e| EvoError::Io(format!("cannot write {}: {e}", path.display())))
}
