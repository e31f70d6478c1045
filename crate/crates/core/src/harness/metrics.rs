//! Per-step training metrics and their CSV form.

use crate::{Error, Result};

pub const CSV_HEADER: &str = "step,mean_tool_errors_per_traj,mean_tool_calls_per_traj,train_success_rate,eval_success_rate,mean_turns,purified_fraction,filtered_group_fraction,noisy_success_rate";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    /// Failed executions in the committed trajectories.
    pub mean_tool_errors_per_traj: f64,
    /// Committed executions plus lookahead executions.
    pub mean_tool_calls_per_traj: f64,
    pub train_success_rate: f64,
    /// One raw (never purified) sample per held-out task.
    pub eval_success_rate: f64,
    pub mean_turns: f64,
    pub purified_fraction: f64,
    pub filtered_group_fraction: f64,
    /// Committed trajectories that succeed after at least one failure.
    pub noisy_success_rate: f64,
}

impl MetricRow {
    fn values(&self) -> [f64; 8] {
        [
            self.mean_tool_errors_per_traj,
            self.mean_tool_calls_per_traj,
            self.train_success_rate,
            self.eval_success_rate,
            self.mean_turns,
            self.purified_fraction,
            self.filtered_group_fraction,
            self.noisy_success_rate,
        ]
    }

    /// Six decimals keep the file byte-stable across platforms.
    pub fn to_csv(&self) -> String {
        let mut s = self.step.to_string();
        for v in self.values() {
            s.push_str(&format!(",{v:.6}"));
        }
        s
    }

    pub fn from_csv(line: &str, line_no: usize) -> Result<MetricRow> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        let names: Vec<&str> = CSV_HEADER.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Format {
                line: line_no,
                field: "<row>".into(),
                message: format!("expected {} columns, found {}", names.len(), fields.len()),
            });
        }
        let bad = |i: usize| Error::Format {
            line: line_no,
            field: names[i].to_string(),
            message: format!("cannot parse {:?}", fields[i]),
        };
        let step = fields[0].parse().map_err(|_| bad(0))?;
        let mut v = [0.0; 8];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = fields[i + 1].parse().map_err(|_| bad(i + 1))?;
        }
        Ok(MetricRow {
            step,
            mean_tool_errors_per_traj: v[0],
            mean_tool_calls_per_traj: v[1],
            train_success_rate: v[2],
            eval_success_rate: v[3],
            mean_turns: v[4],
            purified_fraction: v[5],
            filtered_group_fraction: v[6],
            noisy_success_rate: v[7],
        })
    }
}

pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                field: "<header>".into(),
                message: "missing or unexpected metrics header".into(),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| MetricRow::from_csv(l, i + 2))
        .collect()
}

/// First step at which the trailing `window`-step mean of train success
/// reaches `threshold`; `None` if it never does.
pub fn steps_to_threshold(rows: &[MetricRow], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    if rows.len() < window {
        return None;
    }
    (window - 1..rows.len()).find_map(|end| {
        let slice = &rows[end + 1 - window..=end];
        let mean = slice.iter().map(|r| r.train_success_rate).sum::<f64>() / window as f64;
        (mean >= threshold).then_some(rows[end].step)
    })
}

/// Mean of `mean_tool_errors_per_traj` over rows with `step >= from`.
pub fn mean_errors_from(rows: &[MetricRow], from: usize) -> Option<f64> {
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.step >= from)
        .map(|r| r.mean_tool_errors_per_traj)
        .collect();
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}
