use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::{emit_config, ExperimentConfig};
use crate::analysis::summarize_runs;
use crate::error::{Error, Result};
use crate::sim::{RoundRecord, RunOutcome};

pub const SUMMARY_HEADER: &str = "axis,attack,defense,acc_mean,acc_std,seed_count";

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub axis: String,
    pub attack: String,
    pub defense: String,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub seed_count: usize,
}

impl SummaryRow {
    pub fn from_runs(axis: &str, runs: &[RunOutcome]) -> Result<Self> {
        let first = runs
            .first()
            .and_then(|r| r.records.first())
            .ok_or_else(|| Error::InvalidInput("no rounds to summarize".into()))?;
        let best: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
        let (acc_mean, acc_std) = summarize_runs(&best)?;
        Ok(Self {
            axis: axis.to_string(),
            attack: first.attack.clone(),
            defense: first.defense.clone(),
            acc_mean,
            acc_std,
            seed_count: runs.len(),
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = create(path)?;
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for row in rows {
        out.serialize(row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    if rows.is_empty() {
        drop(out);
        return write_lines(path, [SUMMARY_HEADER.to_string()]);
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rounds_jsonl(path: &Path, runs: &[RunOutcome]) -> Result<()> {
    let mut lines = Vec::new();
    for record in runs.iter().flat_map(|r| &r.records) {
        lines.push(serde_json::to_string(record).map_err(|e| Error::format(path, e.to_string()))?);
    }
    write_lines(path, lines)
}

/// `seed,round,accuracy`, one line per recorded round.
pub fn write_accuracy_vs_round(path: &Path, runs: &[RunOutcome]) -> Result<()> {
    let header = std::iter::once("seed,round,accuracy".to_string());
    let body = runs
        .iter()
        .flat_map(|r| &r.records)
        .map(|rec| format!("{},{},{}", rec.seed, rec.round, rec.accuracy));
    write_lines(path, header.chain(body))
}

/// `axis,acc_mean,acc_std` from summary rows.
pub fn write_accuracy_vs_axis(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let header = std::iter::once("axis,acc_mean,acc_std".to_string());
    let body = rows
        .iter()
        .map(|r| format!("{},{},{}", r.axis, r.acc_mean, r.acc_std));
    write_lines(path, header.chain(body))
}

/// Label used in `summary.csv` for a run that is not part of a sweep.
pub const SINGLE_RUN_AXIS: &str = "single";

/// Writes every artifact of one experiment into `dir`.
pub fn emit_report(
    dir: &Path,
    config: &ExperimentConfig,
    runs: &[RunOutcome],
    axis: &str,
) -> Result<SummaryRow> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let row = SummaryRow::from_runs(axis, runs)?;
    write_rounds_jsonl(&dir.join("rounds.jsonl"), runs)?;
    write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(&row))?;
    let resolved = dir.join("config.resolved.txt");
    fs::write(&resolved, emit_config(config)).map_err(|e| Error::io(&resolved, e))?;
    write_accuracy_vs_round(&dir.join("accuracy_vs_round.csv"), runs)?;
    write_accuracy_vs_axis(&dir.join("accuracy_vs_axis.csv"), std::slice::from_ref(&row))?;
    Ok(row)
}

pub fn read_rounds_jsonl(path: &Path) -> Result<Vec<RoundRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Regroups records by seed, keeping the first-seen seed order.
pub fn runs_from_records(records: Vec<RoundRecord>) -> Vec<RunOutcome> {
    let mut order = Vec::new();
    let mut by_seed: BTreeMap<u64, Vec<RoundRecord>> = BTreeMap::new();
    for record in records {
        if !by_seed.contains_key(&record.seed) {
            order.push(record.seed);
        }
        by_seed.entry(record.seed).or_default().push(record);
    }
    order
        .into_iter()
        .map(|seed| RunOutcome::from_records(seed, by_seed.remove(&seed).unwrap_or_default()))
        .collect()
}

/// Rebuilds `summary.csv` and `accuracy_vs_round.csv` from a `rounds.jsonl`
/// in `dir`.
pub fn report_from_dir(dir: &Path, axis: &str) -> Result<SummaryRow> {
    let records = read_rounds_jsonl(&dir.join("rounds.jsonl"))?;
    let runs = runs_from_records(records);
    let row = SummaryRow::from_runs(axis, &runs)?;
    write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(&row))?;
    write_accuracy_vs_round(&dir.join("accuracy_vs_round.csv"), &runs)?;
    Ok(row)
}
