//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys and duplicate keys
//! are errors. [`ExperimentConfig::to_text`] writes every key, so the copy
//! saved in a run directory reproduces the run on its own.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::grpo::GrpoConfig;
use crate::policy::{feature, PolicyParams, STOP_HALT};
use crate::rollout::RolloutLimits;
use crate::saar::SaarConfig;
use crate::tasks::TaskFamily;
use crate::templates::{Approach, Fault};
use crate::trajectory::Category;
use crate::{Error, Result};

/// Environment variable naming the directory under which run directories
/// are created when the config does not set `run_dir`.
pub const RUN_ROOT_ENV: &str = "TRAJPURE_RUN_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    Saar,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Mode::Baseline),
            "saar" => Ok(Mode::Saar),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected baseline or saar)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Saar => "saar",
        })
    }
}

/// Initial policy biases. All weights not listed here start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInit {
    /// Added to the bias weight of each planted-fault choice.
    pub fault_bias: f64,
    /// Added to the bias weight of the shortcut approach.
    pub shortcut_bias: f64,
    /// Added to the bias weight of halting after a successful run.
    pub halt_bias: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        PolicyInit {
            fault_bias: 0.0,
            shortcut_bias: 0.0,
            halt_bias: 0.0,
        }
    }
}

impl PolicyInit {
    pub fn params(&self) -> PolicyParams {
        let mut p = PolicyParams::zeros();
        for fault in [Fault::Typo, Fault::UndefinedName, Fault::ZeroDivisor] {
            p.set_weight(Category::Fault, fault as usize, feature::BIAS, self.fault_bias);
        }
        p.set_weight(Category::Approach, Approach::Shortcut as usize, feature::BIAS, self.shortcut_bias);
        p.set_weight(Category::Stop, STOP_HALT as usize, feature::BIAS, self.halt_bias);
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub families: Vec<TaskFamily>,
    pub init: PolicyInit,
    pub limits: RolloutLimits,
    pub saar: SaarConfig,
    pub grpo: GrpoConfig,
    pub total_steps: usize,
    /// Parameter snapshot period in steps; 0 keeps only the initial and final ones.
    pub snapshot_every: usize,
    /// Trajectories written per step (the first ones of the batch); 0 disables.
    pub trajectory_sample: usize,
    /// Held-out tasks scored (one raw sample each) for `eval_success_rate`.
    pub eval_tasks: usize,
    /// Steps after which an all-filtered batch with no success aborts the run.
    pub warmup_steps: usize,
    pub parallel: bool,
    /// Explicit run directory; otherwise derived from mode and seed.
    pub run_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Saar,
            seed: 0,
            families: TaskFamily::ALL.to_vec(),
            init: PolicyInit::default(),
            limits: RolloutLimits::default(),
            saar: SaarConfig::default(),
            grpo: GrpoConfig::default(),
            total_steps: 300,
            snapshot_every: 50,
            trajectory_sample: 4,
            eval_tasks: 32,
            warmup_steps: 10,
            parallel: true,
            run_dir: None,
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "seed",
    "families",
    "init_fault_bias",
    "init_shortcut_bias",
    "init_halt_bias",
    "max_turns",
    "max_steps",
    "max_abs_value",
    "retry_limit",
    "similarity_threshold",
    "mix_probability",
    "group_size",
    "clip_low",
    "clip_high",
    "epsilon_std",
    "learning_rate",
    "rollout_batch",
    "mini_batch",
    "ratio_mode",
    "total_steps",
    "snapshot_every",
    "trajectory_sample",
    "eval_tasks",
    "warmup_steps",
    "parallel",
    "run_dir",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentConfig {
    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "families" => {
                self.families = v
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "init_fault_bias" => self.init.fault_bias = parse_num(key, v)?,
            "init_shortcut_bias" => self.init.shortcut_bias = parse_num(key, v)?,
            "init_halt_bias" => self.init.halt_bias = parse_num(key, v)?,
            "max_turns" => self.limits.max_turns = parse_num(key, v)?,
            "max_steps" => self.limits.exec.max_steps = parse_num(key, v)?,
            "max_abs_value" => self.limits.exec.max_abs_value = parse_num(key, v)?,
            "retry_limit" => self.saar.retry_limit = parse_num(key, v)?,
            "similarity_threshold" => self.saar.similarity_threshold = parse_num(key, v)?,
            "mix_probability" => self.saar.mix_probability = parse_num(key, v)?,
            "group_size" => self.grpo.group_size = parse_num(key, v)?,
            "clip_low" => self.grpo.clip_low = parse_num(key, v)?,
            "clip_high" => self.grpo.clip_high = parse_num(key, v)?,
            "epsilon_std" => self.grpo.epsilon_std = parse_num(key, v)?,
            "learning_rate" => self.grpo.learning_rate = parse_num(key, v)?,
            "rollout_batch" => self.grpo.rollout_batch = parse_num(key, v)?,
            "mini_batch" => self.grpo.mini_batch = parse_num(key, v)?,
            "ratio_mode" => self.grpo.ratio_mode = v.parse()?,
            "total_steps" => self.total_steps = parse_num(key, v)?,
            "snapshot_every" => self.snapshot_every = parse_num(key, v)?,
            "trajectory_sample" => self.trajectory_sample = parse_num(key, v)?,
            "eval_tasks" => self.eval_tasks = parse_num(key, v)?,
            "warmup_steps" => self.warmup_steps = parse_num(key, v)?,
            "parallel" => self.parallel = parse_bool(key, v)?,
            "run_dir" => self.run_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parse config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("families must name at least one task family".into()));
        }
        for (name, v) in [
            ("init_fault_bias", self.init.fault_bias),
            ("init_shortcut_bias", self.init.shortcut_bias),
            ("init_halt_bias", self.init.halt_bias),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.limits.validate()?;
        self.saar.validate()?;
        self.grpo.validate()
    }

    /// Purification probability actually used: baseline never purifies.
    pub fn effective_mix(&self) -> f64 {
        match self.mode {
            Mode::Baseline => 0.0,
            Mode::Saar => self.saar.mix_probability,
        }
    }

    pub fn initial_params(&self) -> PolicyParams {
        let mut p = self.init.params();
        p.seed_lineage = vec![format!("mode={}", self.mode), format!("seed={}", self.seed)];
        p
    }

    /// `run_dir` if set, else `$TRAJPURE_RUN_ROOT/<mode>-seed<seed>` (root
    /// defaults to `runs`).
    pub fn resolve_run_dir(&self) -> PathBuf {
        if let Some(dir) = &self.run_dir {
            return dir.clone();
        }
        let root = std::env::var_os(RUN_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("{}-seed{}", self.mode, self.seed))
    }

    /// Canonical text form listing every key.
    pub fn to_text(&self) -> String {
        let families: Vec<&str> = self.families.iter().map(|f| f.name()).collect();
        let lines = [
            format!("mode = {}", self.mode),
            format!("seed = {}", self.seed),
            format!("families = {}", families.join(",")),
            format!("init_fault_bias = {:?}", self.init.fault_bias),
            format!("init_shortcut_bias = {:?}", self.init.shortcut_bias),
            format!("init_halt_bias = {:?}", self.init.halt_bias),
            format!("max_turns = {}", self.limits.max_turns),
            format!("max_steps = {}", self.limits.exec.max_steps),
            format!("max_abs_value = {}", self.limits.exec.max_abs_value),
            format!("retry_limit = {}", self.saar.retry_limit),
            format!("similarity_threshold = {:?}", self.saar.similarity_threshold),
            format!("mix_probability = {:?}", self.saar.mix_probability),
            format!("group_size = {}", self.grpo.group_size),
            format!("clip_low = {:?}", self.grpo.clip_low),
            format!("clip_high = {:?}", self.grpo.clip_high),
            format!("epsilon_std = {:?}", self.grpo.epsilon_std),
            format!("learning_rate = {:?}", self.grpo.learning_rate),
            format!("rollout_batch = {}", self.grpo.rollout_batch),
            format!("mini_batch = {}", self.grpo.mini_batch),
            format!("ratio_mode = {}", self.grpo.ratio_mode),
            format!("total_steps = {}", self.total_steps),
            format!("snapshot_every = {}", self.snapshot_every),
            format!("trajectory_sample = {}", self.trajectory_sample),
            format!("eval_tasks = {}", self.eval_tasks),
            format!("warmup_steps = {}", self.warmup_steps),
            format!("parallel = {}", self.parallel),
            format!(
                "run_dir = {}",
                self.run_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
            ),
        ];
        debug_assert_eq!(lines.len(), KEYS.len());
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Every accepted key, in [`ExperimentConfig::to_text`] order.
pub fn known_keys() -> &'static [&'static str] {
    KEYS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.mode = Mode::Baseline;
        cfg.families = vec![TaskFamily::Division];
        cfg.grpo.learning_rate = 0.125;
        cfg.init.fault_bias = 1.5;
        cfg.run_dir = Some(PathBuf::from("/tmp/x"));
        assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn to_text_lists_every_key_once() {
        let text = ExperimentConfig::default().to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = ExperimentConfig::from_text("# hi\n\nseed = 7  # trailing\nmode=baseline\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, Mode::Baseline);
        assert_eq!(cfg.effective_mix(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "bogus = 1",
            "seed = -1",
            "seed = 1\nseed = 2",
            "no equals sign",
            "group_size = 1",
            "mix_probability = 1.5",
            "families = algebra",
            "families = ",
            "parallel = maybe",
            "ratio_mode = token",
        ] {
            let err = ExperimentConfig::from_text(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err:?}");
        }
    }

    #[test]
    fn initial_params_apply_biases() {
        let mut cfg = ExperimentConfig::default();
        cfg.init = PolicyInit { fault_bias: 1.0, shortcut_bias: 0.5, halt_bias: -2.0 };
        let p = cfg.initial_params();
        assert_eq!(p.weight(Category::Fault, Fault::Typo as usize, feature::BIAS), 1.0);
        assert_eq!(p.weight(Category::Fault, Fault::None as usize, feature::BIAS), 0.0);
        assert_eq!(p.weight(Category::Approach, Approach::Shortcut as usize, feature::BIAS), 0.5);
        assert_eq!(p.weight(Category::Stop, STOP_HALT as usize, feature::BIAS), -2.0);
    }

    #[test]
    fn run_dir_defaults_to_mode_and_seed() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 3;
        cfg.run_dir = Some(PathBuf::from("somewhere"));
        assert_eq!(cfg.resolve_run_dir(), PathBuf::from("somewhere"));
        cfg.run_dir = None;
        assert!(cfg.resolve_run_dir().ends_with("saar-seed3"));
    }
}
