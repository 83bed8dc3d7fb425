//! Files written by runs and sweeps, and their readers.
//!
//! * `report.json`: a [`MetricsReport`], pretty-printed.
//! * `density.csv`: `grid,target_kde,pred_kde`.
//! * `epochs.jsonl`: one [`EpochRecord`] per line.
//! * `checkpoint.json`: model parameters keyed by layer name.
//! * `aggregate.csv`: one row per sweep configuration.
//!
//! Floats are written in shortest round-trip form, so every file parses back
//! to the exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Checkpoint;
use crate::trainer::{AggregateRow, Density, EpochRecord, MetricsReport, Stat};

pub const REPORT_FILE: &str = "report.json";
pub const DENSITY_FILE: &str = "density.csv";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    Ok(serde_json::from_str(&read(path)?)?)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_json(ckpt, path)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_str(&read(path)?)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct DensityRow {
    grid: f64,
    target_kde: f64,
    pred_kde: f64,
}

pub fn write_density(d: &Density, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for ((&grid, &target_kde), &pred_kde) in d.grid.iter().zip(&d.target).zip(&d.pred) {
        w.serialize(DensityRow {
            grid,
            target_kde,
            pred_kde,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_density(path: &Path) -> Result<Density> {
    let mut d = Density {
        grid: Vec::new(),
        target: Vec::new(),
        pred: Vec::new(),
    };
    for row in csv_reader(path)?.deserialize() {
        let row: DensityRow = row?;
        d.grid.push(row.grid);
        d.target.push(row.target_kde);
        d.pred.push(row.pred_kde);
    }
    Ok(d)
}

pub fn write_epoch_log(records: &[EpochRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write(path, text.as_bytes())
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochRecord>> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Metric columns of the aggregate CSV, each with `_mean` and `_median`.
const AGGREGATE_METRICS: [&str; 9] = [
    "rmse",
    "mae",
    "wasserstein",
    "js",
    "bc_target",
    "bc_pred",
    "delta_bc",
    "test_loss",
    "val_rmse",
];

fn stats_of(row: &AggregateRow) -> [Option<Stat>; 9] {
    [
        row.rmse,
        row.mae,
        row.wasserstein,
        row.js,
        row.bc_target,
        row.bc_pred,
        row.delta_bc,
        row.test_loss,
        row.val_rmse,
    ]
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: `separation,alpha,loss,runs,diverged,failed`, then mean and median
/// of every metric. Empty cells mean no run of that row produced the metric.
pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["separation", "alpha", "loss", "runs", "diverged", "failed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in AGGREGATE_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_median"));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.separation.to_string(),
            row.alpha.to_string(),
            row.loss_label.clone(),
            row.runs.to_string(),
            row.diverged.to_string(),
            row.failed.to_string(),
        ];
        for s in stats_of(row) {
            rec.push(cell(s.map(|s| s.mean)));
            rec.push(cell(s.map(|s| s.median)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |j: usize| -> Result<Option<f64>> {
            let raw = rec.get(j).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::Parse {
                row,
                column: format!("column {j}"),
                detail: format!("not a number: {raw:?}"),
            })
        };
        let count = |j: usize| -> Result<usize> { Ok(num(j)?.unwrap_or(0.0) as usize) };
        let mut stats = [None; 9];
        for (k, s) in stats.iter_mut().enumerate() {
            *s = match (num(6 + 2 * k)?, num(7 + 2 * k)?) {
                (Some(mean), Some(median)) => Some(Stat { mean, median }),
                _ => None,
            };
        }
        let [rmse, mae, wasserstein, js, bc_target, bc_pred, delta_bc, test_loss, val_rmse] = stats;
        out.push(AggregateRow {
            separation: num(0)?.unwrap_or(0.0),
            alpha: num(1)?.unwrap_or(0.0),
            loss_label: rec.get(2).unwrap_or("").to_string(),
            runs: count(3)?,
            diverged: count(4)?,
            failed: count(5)?,
            rmse,
            mae,
            wasserstein,
            js,
            bc_target,
            bc_pred,
            delta_bc,
            test_loss,
            val_rmse,
        });
    }
    Ok(out)
}

/// Every report under `dir` (recursively): files named `report.json` or
/// ending in `.report.json`.
pub fn load_reports(dir: &Path) -> Result<Vec<MetricsReport>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n == REPORT_FILE || n.ends_with(".report.json"))
            {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::contract(format!("no reports found in {}", dir.display())));
    }
    paths.iter().map(|p| read_report(p)).collect()
}

/// Aligned text table, one row per report ordered by config hash then seed.
/// The smallest value in each numeric column is marked with `*`.
pub fn report_table(reports: &[MetricsReport]) -> String {
    let mut sorted: Vec<&MetricsReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.config_hash.cmp(&b.config_hash).then(a.seed.cmp(&b.seed)));

    let headers = ["Config", "Hash", "Seed", "Test Loss", "RMSE", "MAE", "Wasserstein", "JS Div", "Delta BC"];
    let values: Vec<[Option<f64>; 6]> = sorted
        .iter()
        .map(|r| match &r.metrics {
            Some(m) => [Some(m.test_loss), Some(m.rmse), Some(m.mae), Some(m.wasserstein), Some(m.js), Some(m.delta_bc)],
            None => [None; 6],
        })
        .collect();
    let best: Vec<Option<f64>> = (0..6)
        .map(|c| values.iter().filter_map(|v| v[c]).min_by(|a, b| a.total_cmp(b)))
        .collect();

    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|h| h.to_string()).collect()];
    for (r, vals) in sorted.iter().zip(&values) {
        let mut row = vec![r.label.clone(), r.config_hash.chars().take(12).collect(), r.seed.to_string()];
        for (c, v) in vals.iter().enumerate() {
            row.push(match v {
                Some(x) if Some(*x) == best[c] => format!("{x:.4}*"),
                Some(x) => format!("{x:.4}"),
                None => "diverged".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}
