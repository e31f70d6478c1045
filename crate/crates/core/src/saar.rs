//! Similarity-aware adaptive rollback.
//!
//! On a failed execution the failure is held back: the policy gets up to K
//! lookahead attempts conditioned on the history extended with the error. A
//! successful correction replaces the failed turn; how much is replaced
//! depends on how similar the corrected code is to the failed code:
//!
//! * `ratio(c_fail, c_fix) >= γ` is shallow: keep the original reasoning, swap
//!   in the corrected code and its observation;
//! * `ratio(c_fail, c_fix) < γ` is deep: replace the whole turn with the
//!   correction's own reasoning and code.
//!
//! If every attempt fails the original failure is committed unchanged.
//! Lookahead attempts are never committed.

use rand::Rng;

use crate::minilang::run;
use crate::policy::{action_logprob, sample_action, sample_decision, ContextFeatures, Featurizer, PolicyParams};
use crate::rollout::{generate_turn_with, halts, run_episode, EpisodeRng, RolloutLimits};
use crate::similarity::ratio;
use crate::tasks::Task;
use crate::trajectory::{noisy_success_runs, Category, DecisionRecord, History, Observation, Provenance, Trajectory, Turn};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaarConfig {
    /// K: lookahead attempts per failure.
    pub retry_limit: usize,
    /// γ: similarity at or above which a repair is shallow.
    pub similarity_threshold: f64,
    /// Fraction of episodes purified; the rest stay raw.
    pub mix_probability: f64,
}

impl Default for SaarConfig {
    fn default() -> Self {
        SaarConfig {
            retry_limit: 3,
            similarity_threshold: 0.5,
            mix_probability: 0.7,
        }
    }
}

impl SaarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retry_limit == 0 {
            return Err(Error::Config("retry_limit must be at least 1".into()));
        }
        for (name, v) in [
            ("similarity_threshold", self.similarity_threshold),
            ("mix_probability", self.mix_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The frozen prefix `h_t` and the uncommitted extension `h_t ⊕ (r_t, c_t, o⁻)`.
#[derive(Debug, Clone)]
pub struct Lookahead {
    pub frozen: History,
    pub extended: History,
}

pub fn extend_context(history: &History, failed_turn: &Turn) -> Result<Lookahead> {
    if failed_turn.observation.is_success() {
        return Err(Error::contract("extend_context called with a successful turn"));
    }
    Ok(Lookahead {
        frozen: history.clone(),
        extended: history.concat(failed_turn.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionStatus {
    Recovered,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub reasoning: String,
    pub code: String,
    pub observation: Observation,
    pub decisions: Vec<DecisionRecord>,
    /// log π of the decisions under the lookahead context they were drawn in.
    pub lookahead_logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    pub status: CorrectionStatus,
    pub attempts_used: usize,
    pub correction: Option<Correction>,
}

pub fn lookahead_correct_with<R: Rng + ?Sized>(
    history: &History,
    failed_turn: &Turn,
    featurizer: &Featurizer,
    params: &PolicyParams,
    limits: &RolloutLimits,
    config: &SaarConfig,
    rng: &mut R,
) -> Result<CorrectionOutcome> {
    if config.retry_limit == 0 {
        return Err(Error::contract("retry_limit must be at least 1"));
    }
    let mut context = extend_context(history, failed_turn)?.extended;
    for attempt in 1..=config.retry_limit {
        let features = featurizer.features(&context);
        let plan = sample_action(&features, params, featurizer.library(), rng);
        let observation = run(&plan.code, limits.exec);
        if observation.value().is_some() {
            let mut decisions = plan.decisions;
            decisions.push(sample_decision(Category::Stop, &features, params, rng));
            let lookahead_logprob = decisions.iter().map(|d| d.behavior_logprob).sum();
            return Ok(CorrectionOutcome {
                status: CorrectionStatus::Recovered,
                attempts_used: attempt,
                correction: Some(Correction {
                    reasoning: plan.reasoning,
                    code: plan.code,
                    observation,
                    decisions,
                    lookahead_logprob,
                }),
            });
        }
        // The failed attempt stays visible to the next one, never committed.
        context = context.concat(Turn {
            reasoning: plan.reasoning,
            code: plan.code,
            observation,
            decisions: plan.decisions,
            provenance: Provenance::Natural,
        });
    }
    Ok(CorrectionOutcome {
        status: CorrectionStatus::Exhausted,
        attempts_used: config.retry_limit,
        correction: None,
    })
}

pub fn lookahead_correct<R: Rng + ?Sized>(
    history: &History,
    failed_turn: &Turn,
    task: &Task,
    params: &PolicyParams,
    limits: &RolloutLimits,
    config: &SaarConfig,
    rng: &mut R,
) -> Result<CorrectionOutcome> {
    lookahead_correct_with(history, failed_turn, &Featurizer::new(task), params, limits, config, rng)
}

/// Shallow if `ratio(failed.code, correction.code) >= gamma`, deep otherwise.
pub fn replacement_provenance(failed_code: &str, corrected_code: &str, gamma: f64) -> Provenance {
    if ratio(failed_code, corrected_code) >= gamma {
        Provenance::PurifiedShallow
    } else {
        Provenance::PurifiedDeep
    }
}

pub fn adaptive_replace(failed_turn: &Turn, outcome: &CorrectionOutcome, gamma: f64) -> Result<Turn> {
    let correction = match (outcome.status, &outcome.correction) {
        (CorrectionStatus::Recovered, Some(c)) => c,
        _ => return Err(Error::contract("adaptive_replace needs a recovered correction")),
    };
    let provenance = replacement_provenance(&failed_turn.code, &correction.code, gamma);
    let reasoning = match provenance {
        Provenance::PurifiedShallow => failed_turn.reasoning.clone(),
        _ => correction.reasoning.clone(),
    };
    Ok(Turn {
        reasoning,
        code: correction.code.clone(),
        observation: correction.observation.clone(),
        // provisional log-probs; see `recompute_logprobs`
        decisions: correction.decisions.clone(),
        provenance,
    })
}

/// Bookkeeping from one online episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OnlineReport {
    pub active: bool,
    pub lookahead_executions: usize,
    pub recovered: usize,
    pub exhausted: usize,
    pub shallow: usize,
    pub deep: usize,
}

pub fn purify_online_with_report(
    task: &Task,
    params: &PolicyParams,
    limits: &RolloutLimits,
    config: &SaarConfig,
    rng: &mut EpisodeRng,
) -> (Trajectory, OnlineReport) {
    let active = rng.mixing.gen_bool(config.mix_probability);
    let mut report = OnlineReport {
        active,
        ..Default::default()
    };
    if !active {
        return (run_episode(task, params, limits, rng), report);
    }
    let featurizer = Featurizer::new(task);
    let mut history = History::new();
    for _ in 0..limits.max_turns {
        let turn = generate_turn_with(&history, &featurizer, params, limits.exec, &mut rng.policy);
        let committed = if turn.observation.is_failure() {
            let outcome = lookahead_correct_with(&history, &turn, &featurizer, params, limits, config, &mut rng.policy)
                .expect("validated config and failure turn");
            report.lookahead_executions += outcome.attempts_used;
            match outcome.status {
                CorrectionStatus::Recovered => {
                    report.recovered += 1;
                    let t = adaptive_replace(&turn, &outcome, config.similarity_threshold).expect("recovered outcome");
                    match t.provenance {
                        Provenance::PurifiedShallow => report.shallow += 1,
                        _ => report.deep += 1,
                    }
                    t
                }
                CorrectionStatus::Exhausted => {
                    report.exhausted += 1;
                    turn
                }
            }
        } else {
            turn
        };
        let stop = halts(&committed);
        history = history.concat(committed);
        if stop {
            break;
        }
    }
    let mut traj = Trajectory::from_turns(task.task_id.clone(), history.turns(), true);
    traj.reward = Some(crate::grpo::compute_reward(&traj, task));
    (traj, report)
}

/// Roll out one episode, purifying it with probability `mix_probability`.
pub fn purify_online(
    task: &Task,
    params: &PolicyParams,
    limits: &RolloutLimits,
    config: &SaarConfig,
    rng: &mut EpisodeRng,
) -> Trajectory {
    purify_online_with_report(task, params, limits, config, rng).0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OfflineSummary {
    pub trajectories: usize,
    pub runs_collapsed: usize,
    pub shallow: usize,
    pub deep: usize,
    pub errors_before: usize,
    pub errors_after: usize,
}

impl OfflineSummary {
    pub fn add(&mut self, other: &OfflineSummary) {
        self.trajectories += other.trajectories;
        self.runs_collapsed += other.runs_collapsed;
        self.shallow += other.shallow;
        self.deep += other.deep;
        self.errors_before += other.errors_before;
        self.errors_after += other.errors_after;
    }
}

/// Rewrite a recorded raw trajectory: each failure run followed by a success
/// collapses into one purified turn. Trailing failures stay as recorded.
pub fn purify_offline(raw: &Trajectory, gamma: f64) -> Result<(Trajectory, OfflineSummary)> {
    if raw.purification_applied || raw.has_purified_turns() {
        return Err(Error::contract(format!(
            "trajectory {} is already purified",
            raw.task_id
        )));
    }
    let mut summary = OfflineSummary {
        trajectories: 1,
        errors_before: raw.stats.tool_errors,
        ..Default::default()
    };
    let runs = noisy_success_runs(&raw.turns);
    let mut turns = Vec::with_capacity(raw.turns.len());
    let mut next = 0;
    for (start, end) in runs {
        turns.extend_from_slice(&raw.turns[next..start]);
        let (first_failed, success) = (&raw.turns[start], &raw.turns[end]);
        let provenance = replacement_provenance(&first_failed.code, &success.code, gamma);
        let reasoning = match provenance {
            Provenance::PurifiedShallow => {
                summary.shallow += 1;
                first_failed.reasoning.clone()
            }
            _ => {
                summary.deep += 1;
                success.reasoning.clone()
            }
        };
        turns.push(Turn {
            reasoning,
            provenance,
            ..success.clone()
        });
        summary.runs_collapsed += 1;
        next = end + 1;
    }
    turns.extend_from_slice(&raw.turns[next..]);

    let mut out = Trajectory::from_turns(raw.task_id.clone(), turns, summary.runs_collapsed > 0);
    debug_assert_eq!(out.final_answer, raw.final_answer);
    out.final_answer = raw.final_answer;
    out.reward = raw.reward;
    summary.errors_after = out.stats.tool_errors;
    Ok((out, summary))
}

/// Per-turn features of the committed prefixes, computed in one pass.
pub fn committed_contexts(traj: &Trajectory, featurizer: &Featurizer) -> Vec<ContextFeatures> {
    let mut history = History::new();
    let mut out = Vec::with_capacity(traj.turns.len());
    for turn in &traj.turns {
        out.push(featurizer.features(&history));
        history = history.concat(turn.clone());
    }
    out
}

/// Re-ground every behavior log-prob on the committed (purified) prefix
/// instead of the context the decision was sampled in.
pub fn recompute_logprobs(traj: &Trajectory, task: &Task, params: &PolicyParams) -> Result<Trajectory> {
    let contexts = committed_contexts(traj, &Featurizer::new(task));
    recompute_with_contexts(traj, &contexts, params)
}

pub fn recompute_with_contexts(traj: &Trajectory, contexts: &[ContextFeatures], params: &PolicyParams) -> Result<Trajectory> {
    if contexts.len() != traj.turns.len() {
        return Err(Error::contract("one context per turn required"));
    }
    let mut out = traj.clone();
    for (turn, features) in out.turns.iter_mut().zip(contexts) {
        for d in &mut turn.decisions {
            d.behavior_logprob = action_logprob(features, std::slice::from_ref(d), params)?;
        }
    }
    Ok(out)
}
