//! Summaries over finished run directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Mode};
use super::metrics::{from_csv, mean_errors_from, steps_to_threshold, MetricRow, CSV_HEADER};
use crate::{Error, Result};

/// Files every run directory must contain.
pub const REQUIRED_FILES: [&str; 2] = ["config.conf", "metrics.csv"];

pub const SUCCESS_THRESHOLD: f64 = 0.9;
pub const SUCCESS_WINDOW: usize = 5;
pub const ERROR_TAIL_FROM: usize = 20;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub rows: Vec<MetricRow>,
    pub steps_to_90: Option<usize>,
    pub mean_errors_tail: Option<f64>,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<RunSummary> {
        let config = ExperimentConfig::load(&dir.join("config.conf"))?;
        let path = dir.join("metrics.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let rows = from_csv(&text)?;
        Ok(RunSummary::from_rows(dir, config, rows))
    }

    pub fn from_rows(dir: &Path, config: ExperimentConfig, rows: Vec<MetricRow>) -> RunSummary {
        RunSummary {
            dir: dir.to_path_buf(),
            steps_to_90: steps_to_threshold(&rows, SUCCESS_THRESHOLD, SUCCESS_WINDOW),
            mean_errors_tail: mean_errors_from(&rows, ERROR_TAIL_FROM),
            config,
            rows,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    /// Per-step rows of every run, prefixed with run label, mode and seed.
    pub csv: String,
    /// Human-readable per-run table plus baseline/saar deltas by seed.
    pub summary: String,
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn report(dirs: &[PathBuf]) -> Result<Report> {
    if dirs.is_empty() {
        return Err(Error::contract("report needs at least one run directory"));
    }
    let missing: Vec<PathBuf> = dirs
        .iter()
        .flat_map(|d| REQUIRED_FILES.iter().map(move |f| d.join(f)))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let runs = dirs.iter().map(|d| RunSummary::load(d)).collect::<Result<Vec<_>>>()?;

    let mut csv = format!("run,mode,seed,{CSV_HEADER}\n");
    for r in &runs {
        let label = r.dir.file_name().map_or_else(|| r.dir.display().to_string(), |s| s.to_string_lossy().into_owned());
        for row in &r.rows {
            let _ = writeln!(csv, "{label},{},{},{}", r.config.mode, r.config.seed, row.to_csv());
        }
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{:<28} {:>8} {:>6} {:>6} {:>18} {:>12}",
        "run", "mode", "seed", "steps", "errors/traj(>=20)", "steps_to_90"
    );
    for r in &runs {
        let label = r.dir.display().to_string();
        let _ = writeln!(
            summary,
            "{:<28} {:>8} {:>6} {:>6} {:>18} {:>12}",
            label,
            r.config.mode.to_string(),
            r.config.seed,
            r.rows.len(),
            fmt_opt(r.mean_errors_tail.map(|e| format!("{e:.4}"))),
            fmt_opt(r.steps_to_90),
        );
    }

    let pairs: Vec<(&RunSummary, &RunSummary)> = runs
        .iter()
        .filter(|b| b.config.mode == Mode::Baseline)
        .filter_map(|b| {
            runs.iter()
                .find(|s| s.config.mode == Mode::Saar && s.config.seed == b.config.seed)
                .map(|s| (b, s))
        })
        .collect();
    if !pairs.is_empty() {
        let _ = writeln!(summary);
        let _ = writeln!(
            summary,
            "{:>6} {:>16} {:>16} {:>14} {:>14} {:>12}",
            "seed", "baseline_to_90", "saar_to_90", "baseline_err", "saar_err", "err_ratio"
        );
        for (b, s) in pairs {
            let ratio = match (b.mean_errors_tail, s.mean_errors_tail) {
                (Some(be), Some(se)) if be > 0.0 => Some(format!("{:.4}", se / be)),
                _ => None,
            };
            let _ = writeln!(
                summary,
                "{:>6} {:>16} {:>16} {:>14} {:>14} {:>12}",
                b.config.seed,
                fmt_opt(b.steps_to_90),
                fmt_opt(s.steps_to_90),
                fmt_opt(b.mean_errors_tail.map(|e| format!("{e:.4}"))),
                fmt_opt(s.mean_errors_tail.map(|e| format!("{e:.4}"))),
                fmt_opt(ratio),
            );
        }
    }
    Ok(Report { runs, csv, summary })
}
