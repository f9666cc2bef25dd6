//! Result tables: one row per (variant, α, head, seed, shift, checkpoint).

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rohil_core::eval::EvalReport;
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 10] = [
    "variant",
    "alpha",
    "anchor_head",
    "seed",
    "shift_pct",
    "episodes",
    "success_rate",
    "mean_success_steps",
    "intervention_rate",
    "finetune_step",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    /// Absent for agents that were not fine-tuned.
    pub alpha: Option<f64>,
    pub anchor_head: Option<String>,
    pub seed: u64,
    pub shift_pct: u32,
    pub episodes: u32,
    pub success_rate: f64,
    pub mean_success_steps: Option<f64>,
    pub intervention_rate: Option<f64>,
    pub finetune_step: Option<u64>,
}

impl ReportRow {
    pub fn from_eval(
        variant: &str,
        alpha: Option<f64>,
        head: Option<&str>,
        seed: u64,
        step: Option<u64>,
        r: &EvalReport,
    ) -> Self {
        Self {
            variant: variant.to_string(),
            alpha,
            anchor_head: head.map(str::to_string),
            seed,
            shift_pct: r.shift_pct(),
            episodes: r.episodes,
            success_rate: r.success_rate,
            mean_success_steps: r.mean_success_steps,
            intervention_rate: r.intervention_rate,
            finetune_step: step,
        }
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.variant
            .cmp(&other.variant)
            .then_with(|| opt(self.alpha, other.alpha))
            .then_with(|| self.anchor_head.cmp(&other.anchor_head))
            .then_with(|| self.seed.cmp(&other.seed))
            .then_with(|| self.finetune_step.cmp(&other.finetune_step))
            .then_with(|| self.shift_pct.cmp(&other.shift_pct))
    }
}

/// Sort rows by their key columns; report assembly order never matters.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| a.key_cmp(b));
}

pub fn write_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for row in &sorted {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == COLUMNS, "unexpected report columns {header:?}");
    r.deserialize()
        .map(|row| row.context("malformed report row"))
        .collect()
}

pub fn write_json(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    serde_json::to_writer_pretty(out, &sorted)?;
    Ok(())
}

/// Write `path` as CSV and a sibling `.json` with the same rows.
pub fn emit_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let csv_path = path.as_ref().to_path_buf();
    let json_path = csv_path.with_extension("json");
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    std::fs::write(&csv_path, buf).with_context(|| format!("writing {}", csv_path.display()))?;
    let mut buf = Vec::new();
    write_json(rows, &mut buf)?;
    buf.push(b'\n');
    std::fs::write(&json_path, buf).with_context(|| format!("writing {}", json_path.display()))?;
    Ok((csv_path, json_path))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_csv(file)
}
