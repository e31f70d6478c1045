//! The training loop: sample tasks, roll out groups (purifying when enabled),
//! re-ground log-probs on the committed context, build groups, log metrics,
//! update.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Mode};
use super::metrics::{MetricRow, CSV_HEADER};
use crate::grpo::{surrogate_objective, update, Group};
use crate::par::map_range;
use crate::policy::PolicyParams;
use crate::rollout::{run_episode, stream_id, EpisodeRng};
use crate::saar::{purify_online_with_report, recompute_logprobs, OnlineReport};
use crate::tasks::{generate_tasks, Task};
use crate::trajectory::{serialize_lines, Trajectory};
use crate::{Error, Result};

const TASK_TAG: u64 = 0x7A5C;
const ROLLOUT_TAG: u64 = 0x2011;
const EVAL_TASK_TAG: u64 = 0xE7A5;
const EVAL_ROLLOUT_TAG: u64 = 0xE7A2;

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub metrics: Vec<MetricRow>,
    pub run_dir: Option<PathBuf>,
}

/// Everything gathered in one step before the update.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub groups: Vec<Group>,
    pub reports: Vec<OnlineReport>,
    pub row: MetricRow,
}

fn task_rng(seed: u64, tag: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(&[tag, step]));
    rng
}

/// Held-out tasks for `eval_success_rate`, fixed for the whole run.
pub fn eval_task_set(config: &ExperimentConfig) -> Vec<Task> {
    generate_tasks(&config.families, config.eval_tasks, &mut task_rng(config.seed, EVAL_TASK_TAG, 0))
}

/// Tasks drawn for training step `step`.
pub fn step_tasks(config: &ExperimentConfig, step: usize) -> Vec<Task> {
    generate_tasks(
        &config.families,
        config.grpo.rollout_batch,
        &mut task_rng(config.seed, TASK_TAG, step as u64),
    )
}

/// Roll out, recompute and group one step's batch under `params`.
pub fn collect_step(
    config: &ExperimentConfig,
    params: &PolicyParams,
    step: usize,
    eval_tasks: &[Task],
) -> Result<StepBatch> {
    let tasks = step_tasks(config, step);
    let g = config.grpo.group_size;
    let episodes: Vec<Result<(Trajectory, OnlineReport)>> = map_range(tasks.len() * g, config.parallel, |idx| {
        let (b, i) = (idx / g, idx % g);
        let task = &tasks[b];
        let mut rng = EpisodeRng::new(config.seed, stream_id(&[ROLLOUT_TAG, step as u64, b as u64, i as u64]));
        let (traj, report) = match config.mode {
            Mode::Baseline => (run_episode(task, params, &config.limits, &mut rng), OnlineReport::default()),
            Mode::Saar => purify_online_with_report(task, params, &config.limits, &config.saar, &mut rng),
        };
        Ok((recompute_logprobs(&traj, task, params)?, report))
    });
    let mut trajectories = Vec::with_capacity(episodes.len());
    let mut reports = Vec::with_capacity(episodes.len());
    for e in episodes {
        let (t, r) = e?;
        trajectories.push(t);
        reports.push(r);
    }

    let delta = config.grpo.epsilon_std;
    let groups: Vec<Group> = map_range(tasks.len(), config.parallel, |b| {
        Group::new(tasks[b].clone(), trajectories[b * g..(b + 1) * g].to_vec(), delta)
    });

    let eval_success_rate = if eval_tasks.is_empty() {
        0.0
    } else {
        let wins = map_range(eval_tasks.len(), config.parallel, |t| {
            let mut rng = EpisodeRng::new(config.seed, stream_id(&[EVAL_ROLLOUT_TAG, step as u64, t as u64]));
            run_episode(&eval_tasks[t], params, &config.limits, &mut rng).reward == Some(1.0)
        });
        wins.iter().filter(|&&w| w).count() as f64 / eval_tasks.len() as f64
    };

    let n = trajectories.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| (0..trajectories.len()).map(f).sum::<f64>() / n;
    let row = MetricRow {
        step,
        mean_tool_errors_per_traj: mean(&|i| trajectories[i].stats.tool_errors as f64),
        mean_tool_calls_per_traj: mean(&|i| (trajectories[i].stats.tool_calls + reports[i].lookahead_executions) as f64),
        train_success_rate: mean(&|i| f64::from(u8::from(trajectories[i].reward == Some(1.0)))),
        eval_success_rate,
        mean_turns: mean(&|i| trajectories[i].turns.len() as f64),
        purified_fraction: mean(&|i| f64::from(u8::from(reports[i].active))),
        filtered_group_fraction: groups.iter().filter(|g| g.filtered).count() as f64 / groups.len() as f64,
        noisy_success_rate: mean(&|i| {
            let t = &trajectories[i];
            f64::from(u8::from(t.reward == Some(1.0) && t.stats.tool_errors > 0))
        }),
    };
    Ok(StepBatch { groups, reports, row })
}

struct RunWriter {
    dir: PathBuf,
    metrics: File,
}

impl RunWriter {
    fn create(dir: &Path, config: &ExperimentConfig) -> Result<RunWriter> {
        for sub in [dir.to_path_buf(), dir.join("params"), dir.join("trajectories")] {
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        let cfg_path = dir.join("config.conf");
        fs::write(&cfg_path, config.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
        let path = dir.join("metrics.csv");
        let mut metrics = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(metrics, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    fn row(&mut self, row: &MetricRow) -> Result<()> {
        writeln!(self.metrics, "{}", row.to_csv()).map_err(|e| Error::io(self.dir.join("metrics.csv"), e))
    }

    fn snapshot(&self, params: &PolicyParams, step: usize) -> Result<()> {
        params.save(&self.dir.join("params").join(format!("step-{step:06}.txt")))
    }

    fn trajectories(&self, step: usize, trajs: &[Trajectory]) -> Result<()> {
        let path = self.dir.join("trajectories").join(format!("step-{step:06}.jsonl"));
        fs::write(&path, serialize_lines(trajs)).map_err(|e| Error::io(&path, e))
    }

    fn diagnostic(&self, step: usize, reason: &str, groups: &[&Group]) -> Result<PathBuf> {
        write_diagnostic(&self.dir, step, reason, groups)
    }
}

/// Dump the offending groups as JSON next to the run's metrics.
fn write_diagnostic(dir: &Path, step: usize, reason: &str, groups: &[&Group]) -> Result<PathBuf> {
    let body = serde_json::json!({
        "step": step,
        "reason": reason,
        "groups": groups.iter().map(|g| serde_json::json!({
            "task": g.task,
            "rewards": g.rewards,
            "advantages": g.advantages.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "old_logprobs": g.old_logprobs,
            "filtered": g.filtered,
            "trajectories": g.trajectories,
        })).collect::<Vec<_>>(),
    });
    let path = dir.join(format!("diagnostic-step-{step:06}.json"));
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    f.write_all(serde_json::to_string_pretty(&body)?.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Run `config.total_steps` steps. With `run_dir`, every artifact is written
/// there as the run progresses; without it the run stays in memory.
pub fn train(config: &ExperimentConfig, run_dir: Option<&Path>) -> Result<TrainOutput> {
    train_from(config, config.initial_params(), run_dir)
}

/// [`train`] starting from explicit parameters instead of the configured init.
pub fn train_from(config: &ExperimentConfig, initial: PolicyParams, run_dir: Option<&Path>) -> Result<TrainOutput> {
    config.validate()?;
    initial.validate()?;
    let mut writer = run_dir.map(|d| RunWriter::create(d, config)).transpose()?;
    let mut params = initial;
    if let Some(w) = &writer {
        w.snapshot(&params, 0)?;
    }
    let eval_tasks = eval_task_set(config);
    let mut metrics = Vec::with_capacity(config.total_steps);

    for step in 0..config.total_steps {
        let batch = collect_step(config, &params, step, &eval_tasks)?;
        if let Some(w) = writer.as_mut() {
            w.row(&batch.row)?;
            if config.trajectory_sample > 0 {
                let sample: Vec<Trajectory> = batch
                    .groups
                    .iter()
                    .flat_map(|g| g.trajectories.iter().cloned())
                    .take(config.trajectory_sample)
                    .collect();
                w.trajectories(step, &sample)?;
            }
        }
        log::debug!(
            "step {step}: success {:.3}, errors/traj {:.3}, filtered {:.3}",
            batch.row.train_success_rate,
            batch.row.mean_tool_errors_per_traj,
            batch.row.filtered_group_fraction
        );

        if step >= config.warmup_steps
            && batch.row.filtered_group_fraction == 1.0
            && batch.row.train_success_rate == 0.0
        {
            let all: Vec<&Group> = batch.groups.iter().collect();
            let where_ = match &writer {
                Some(w) => w.diagnostic(step, "every group filtered and nothing solved", &all)?.display().to_string(),
                None => "<in memory>".into(),
            };
            return Err(Error::Aborted(format!(
                "step {step}: every group filtered and no trajectory succeeded; training is vacuous (diagnostic: {where_})"
            )));
        }

        params = match update(&params, &batch.groups, &config.grpo) {
            Ok(report) => report.params,
            Err(err @ Error::NonFinite(_)) => {
                let bad: Vec<&Group> = batch
                    .groups
                    .iter()
                    .filter(|g| !g.filtered && surrogate_objective(g, &params, &config.grpo).is_err())
                    .collect();
                if let Some(w) = &writer {
                    let path = w.diagnostic(step, &err.to_string(), &bad)?;
                    return Err(Error::NonFinite(format!("step {step}: {err} (diagnostic: {})", path.display())));
                }
                return Err(err);
            }
            Err(e) => return Err(e),
        };
        metrics.push(batch.row);

        let done = step + 1;
        if let Some(w) = &writer {
            if config.snapshot_every > 0 && done % config.snapshot_every == 0 {
                w.snapshot(&params, done)?;
            }
        }
    }

    if let Some(w) = &writer {
        w.snapshot(&params, config.total_steps)?;
        params.save(&w.dir.join("params.txt"))?;
    }
    Ok(TrainOutput {
        params,
        metrics,
        run_dir: run_dir.map(Path::to_path_buf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskFamily;

    fn small(mode: Mode) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.mode = mode;
        c.families = vec![TaskFamily::Division];
        c.total_steps = 3;
        c.grpo.rollout_batch = 4;
        c.grpo.group_size = 4;
        c.eval_tasks = 4;
        c
    }

    #[test]
    fn zero_steps_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Mode::Baseline);
        cfg.total_steps = 0;
        let out = train(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.params, cfg.initial_params());
        assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), format!("{CSV_HEADER}\n"));
        assert_eq!(PolicyParams::load(&dir.path().join("params.txt")).unwrap(), cfg.initial_params());
        let copy = ExperimentConfig::load(&dir.path().join("config.conf")).unwrap();
        assert_eq!(copy, cfg);
    }

    #[test]
    fn artifacts_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Mode::Saar);
        cfg.snapshot_every = 2;
        let out = train(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.metrics.len(), 3);
        for r in &out.metrics {
            for v in [r.train_success_rate, r.eval_success_rate, r.purified_fraction, r.filtered_group_fraction] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(r.mean_tool_calls_per_traj >= r.mean_turns);
        }
        for f in ["params/step-000000.txt", "params/step-000002.txt", "params/step-000003.txt", "trajectories/step-000002.jsonl"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn baseline_never_purifies() {
        let mut cfg = small(Mode::Baseline);
        cfg.saar.mix_probability = 1.0;
        let out = train(&cfg, None).unwrap();
        assert!(out.metrics.iter().all(|r| r.purified_fraction == 0.0));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut cfg = small(Mode::Saar);
        cfg.parallel = true;
        let a = train(&cfg, None).unwrap();
        cfg.parallel = false;
        let b = train(&cfg, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn vacuous_run_aborts() {
        // Typos forever: nothing ever succeeds, every group is filtered.
        let mut cfg = small(Mode::Baseline);
        cfg.init.fault_bias = 40.0;
        cfg.warmup_steps = 1;
        let dir = tempfile::tempdir().unwrap();
        let err = train(&cfg, Some(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Aborted(_)), "{err:?}");
        assert!(dir.path().join("diagnostic-step-000001.json").exists());
    }
}
