use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajpure::harness::{self, ExperimentConfig, Mode};
use trajpure::policy::PolicyParams;
use trajpure::rollout::RolloutLimits;
use trajpure::saar::{purify_offline, OfflineSummary};
use trajpure::similarity::{matching_blocks, ratio};
use trajpure::tasks::{generate_tasks, tasks_from_json, tasks_to_json, TaskFamily};
use trajpure::trajectory::{deserialize_lines, serialize_lines};
use trajpure::{Error, Result};

#[derive(Parser)]
#[command(name = "trajpure", version, about = "Trajectory purification and group-relative policy optimization on a toy tool-use agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; artifacts go to the run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Run directory (default: $TRAJPURE_RUN_ROOT/<mode>-seed<seed>).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// pass@1 and pass@k of saved parameters on a task set.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        k: usize,
        /// Samples per task (default: k).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        max_turns: usize,
    },
    /// Purify recorded raw trajectories (one JSON object per line).
    Purify {
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Gestalt similarity ratio of two strings.
    Simdiff {
        a: String,
        b: String,
        /// Also print the matching blocks.
        #[arg(long)]
        blocks: bool,
    },
    /// Summarize one or more run directories.
    Report {
        #[arg(long = "run", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Write the per-step CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a task set as JSON.
    Tasks {
        #[arg(long, value_delimiter = ',', default_value = "arithmetic,twostep,division")]
        families: Vec<TaskFamily>,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            mode,
            seed,
            steps,
            run_dir,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for o in &overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
                cfg.set(k.trim(), v)?;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = steps {
                cfg.total_steps = n;
            }
            if run_dir.is_some() {
                cfg.run_dir = run_dir;
            }
            cfg.validate()?;
            let dir = cfg.resolve_run_dir();
            let out = harness::train(&cfg, Some(&dir))?;
            let last = out.metrics.last();
            println!(
                "run_dir={} steps={} final_train_success={} final_errors_per_traj={}",
                dir.display(),
                out.metrics.len(),
                last.map_or("-".into(), |r| format!("{:.4}", r.train_success_rate)),
                last.map_or("-".into(), |r| format!("{:.4}", r.mean_tool_errors_per_traj)),
            );
        }
        Command::Eval {
            params,
            tasks,
            k,
            n,
            seed,
            max_turns,
        } => {
            let params = PolicyParams::load(&params)?;
            let tasks = tasks_from_json(&read(&tasks)?)?;
            let limits = RolloutLimits {
                max_turns,
                ..Default::default()
            };
            limits.validate()?;
            let n = n.unwrap_or(k);
            let r = harness::evaluate(&params, &tasks, n, k, &limits, seed, true)?;
            println!(
                "tasks={} n={} pass@1={:.6} pass@{}={:.6}",
                r.tasks, r.n_samples, r.pass_at_1, r.k, r.pass_at_k
            );
        }
        Command::Purify { gamma, input, output } => {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::Config(format!("gamma = {gamma} is outside [0, 1]")));
            }
            let raw = deserialize_lines(&read(&input)?)?;
            let mut total = OfflineSummary::default();
            let mut out = Vec::with_capacity(raw.len());
            for t in &raw {
                let (p, s) = purify_offline(t, gamma)?;
                total.add(&s);
                out.push(p);
            }
            write(&output, &serialize_lines(&out))?;
            println!(
                "trajectories={} runs_collapsed={} shallow={} deep={} errors_before={} errors_after={}",
                total.trajectories, total.runs_collapsed, total.shallow, total.deep, total.errors_before, total.errors_after
            );
        }
        Command::Simdiff { a, b, blocks } => {
            println!("{:.12}", ratio(&a, &b));
            if blocks {
                let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
                for m in matching_blocks(&ac, &bc) {
                    println!("{} {} {}", m.a_start, m.b_start, m.size);
                }
            }
        }
        Command::Report { runs, csv } => {
            let r = harness::report(&runs)?;
            match csv {
                Some(path) => {
                    write(&path, &r.csv)?;
                    print!("{}", r.summary);
                }
                None => {
                    print!("{}", r.csv);
                    println!();
                    print!("{}", r.summary);
                }
            }
        }
        Command::Tasks {
            families,
            count,
            seed,
            out,
        } => {
            if families.is_empty() {
                return Err(Error::Config("at least one family is required".into()));
            }
            let tasks = generate_tasks(&families, count, &mut ChaCha8Rng::seed_from_u64(seed));
            let json = tasks_to_json(&tasks);
            match out {
                Some(path) => write(&path, &(json + "\n"))?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={msg:?}", e.kind());
            ExitCode::from(1)
        }
    }
}
