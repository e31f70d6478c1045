//! Baseline trajectory generation: sample, execute, append, repeat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grpo::compute_reward;
use crate::minilang::{run, ExecLimits};
use crate::policy::{sample_action, sample_decision, Featurizer, PolicyParams, STOP_HALT};
use crate::tasks::Task;
use crate::trajectory::{Category, History, Provenance, Trajectory, Turn};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutLimits {
    pub max_turns: usize,
    pub exec: ExecLimits,
}

impl Default for RolloutLimits {
    fn default() -> Self {
        RolloutLimits {
            max_turns: 8,
            exec: ExecLimits::default(),
        }
    }
}

impl RolloutLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be at least 1".into()));
        }
        self.exec.validate()
    }
}

/// Per-trajectory random streams.
///
/// `policy` drives every sampled decision; `mixing` only decides whether an
/// episode is purified, so a baseline episode and an unpurified one consume
/// identical policy draws.
#[derive(Debug, Clone)]
pub struct EpisodeRng {
    pub policy: ChaCha8Rng,
    pub mixing: ChaCha8Rng,
}

impl EpisodeRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut policy = ChaCha8Rng::seed_from_u64(seed);
        policy.set_stream(stream.wrapping_mul(2));
        let mut mixing = ChaCha8Rng::seed_from_u64(seed);
        mixing.set_stream(stream.wrapping_mul(2).wrapping_add(1));
        EpisodeRng { policy, mixing }
    }
}

/// Mixes coordinates into one stream id (splitmix64 finalizer).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    // stream ids are doubled in EpisodeRng
    h >> 1
}

pub fn generate_turn_with<R: Rng + ?Sized>(
    history: &History,
    featurizer: &Featurizer,
    params: &PolicyParams,
    exec: ExecLimits,
    rng: &mut R,
) -> Turn {
    let features = featurizer.features(history);
    let plan = sample_action(&features, params, featurizer.library(), rng);
    let observation = run(&plan.code, exec);
    let mut decisions = plan.decisions;
    if observation.value().is_some() {
        decisions.push(sample_decision(Category::Stop, &features, params, rng));
    }
    Turn {
        reasoning: plan.reasoning,
        code: plan.code,
        observation,
        decisions,
        provenance: Provenance::Natural,
    }
}

pub fn generate_turn<R: Rng + ?Sized>(
    history: &History,
    task: &Task,
    params: &PolicyParams,
    exec: ExecLimits,
    rng: &mut R,
) -> Turn {
    generate_turn_with(history, &Featurizer::new(task), params, exec, rng)
}

/// True when a committed turn ends the episode.
pub(crate) fn halts(turn: &Turn) -> bool {
    turn.observation.value().is_some() && turn.stop_choice() == Some(STOP_HALT)
}

/// One raw episode: failures are committed and generation continues.
pub fn run_episode(task: &Task, params: &PolicyParams, limits: &RolloutLimits, rng: &mut EpisodeRng) -> Trajectory {
    let featurizer = Featurizer::new(task);
    let mut history = History::new();
    for _ in 0..limits.max_turns {
        let turn = generate_turn_with(&history, &featurizer, params, limits.exec, &mut rng.policy);
        let stop = halts(&turn);
        history = history.concat(turn);
        if stop {
            break;
        }
    }
    let mut traj = Trajectory::from_turns(task.task_id.clone(), history.turns(), false);
    traj.reward = Some(compute_reward(&traj, task));
    traj
}
