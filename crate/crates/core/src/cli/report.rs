//! Summary table over every run under an output directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::checkpoint;
use crate::cotrain::CoTrainSummary;
use crate::error::{Error, Result};

use super::stages::{read_toml, RunRecord, Stage, Timing, TIMING_FILE};

/// One table row; `None` marks a value whose stage has not finished.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub ablation: Option<String>,
    pub initial_max_von_mises: Option<f64>,
    pub final_max_von_mises: Option<f64>,
    pub initial_volume: Option<f64>,
    pub final_volume: Option<f64>,
    pub wall_seconds: f64,
    pub missing: Vec<Stage>,
}

/// Read one run directory. Checkpoints of finished stages are decoded so
/// that a corrupt file is reported by name.
pub fn read_run(dir: &Path) -> Result<ReportRow> {
    let rec: RunRecord = read_toml(&dir.join("run.toml"))?;
    let mut row = ReportRow {
        name: rec.config.name.clone(),
        ablation: None,
        initial_max_von_mises: None,
        final_max_von_mises: None,
        initial_volume: None,
        final_volume: None,
        wall_seconds: 0.0,
        missing: Vec::new(),
    };
    for s in Stage::ALL {
        let sdir = dir.join(rec.stages.get(s));
        let summary = sdir.join(s.summary_file());
        if !summary.is_file() {
            row.missing.push(s);
            continue;
        }
        for ck in s.checkpoints() {
            checkpoint::load(&sdir.join(ck))?;
        }
        if s == Stage::Cotrain {
            let c: CoTrainSummary = read_toml(&summary)?;
            row.ablation = Some(c.ablation.clone());
            row.initial_volume = Some(c.initial_volume);
            row.final_volume = Some(c.final_volume);
            if let Some(f) = c.fem {
                row.initial_max_von_mises = Some(f.initial_max_von_mises);
                row.final_max_von_mises = Some(f.final_max_von_mises);
            }
        }
        let timing = sdir.join(TIMING_FILE);
        if timing.is_file() {
            row.wall_seconds += read_toml::<Timing>(&timing)?.wall_seconds;
        }
    }
    Ok(row)
}

/// Rows for every `*/run.toml` under `out`, sorted by name.
pub fn collect(out: &Path) -> Result<Vec<ReportRow>> {
    let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        let dir = entry.path();
        if dir.join("run.toml").is_file() {
            rows.push(read_run(&dir)?);
        }
    }
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(rows)
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$e}")).unwrap_or_default()
}

pub fn render(rows: &[ReportRow]) -> String {
    let header = ["name", "ablation", "vm_initial", "vm_final", "vol_initial", "vol_final", "wall_s", "missing"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.ablation.clone().unwrap_or_default(),
                cell(r.initial_max_von_mises, 3),
                cell(r.final_max_von_mises, 3),
                r.initial_volume.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.final_volume.map(|v| format!("{v:.4}")).unwrap_or_default(),
                format!("{:.1}", r.wall_seconds),
                r.missing.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let mut s = String::new();
        for (c, w) in cells.iter().zip(width) {
            let _ = write!(s, "{c:<w$}  ");
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &header);
    for row in &body {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
