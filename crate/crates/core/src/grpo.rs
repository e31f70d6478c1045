//! Outcome reward, group-normalized advantages, the asymmetrically clipped
//! surrogate objective, and the parameter update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::policy::{accumulate_grad, action_logprob, param_dim, ContextFeatures, Featurizer, PolicyParams};
use crate::saar::committed_contexts;
use crate::tasks::Task;
use crate::trajectory::Trajectory;
use crate::{Error, Result};

/// Which probability ratio enters the clipped objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RatioMode {
    /// One ratio per trajectory: `exp(Σ_decisions Δlogπ)`.
    #[default]
    Trajectory,
    /// One ratio per decision, averaged within the trajectory.
    Decision,
}

impl FromStr for RatioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trajectory" => Ok(RatioMode::Trajectory),
            "decision" => Ok(RatioMode::Decision),
            other => Err(Error::Config(format!("unknown ratio_mode {other:?}"))),
        }
    }
}

impl fmt::Display for RatioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatioMode::Trajectory => "trajectory",
            RatioMode::Decision => "decision",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_low: f64,
    pub clip_high: f64,
    /// δ added to the group standard deviation.
    pub epsilon_std: f64,
    pub learning_rate: f64,
    /// Tasks (groups) per training step.
    pub rollout_batch: usize,
    /// Groups per gradient step.
    pub mini_batch: usize,
    pub ratio_mode: RatioMode,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_low: 0.20,
            clip_high: 0.28,
            epsilon_std: 1e-8,
            learning_rate: 0.05,
            rollout_batch: 16,
            mini_batch: 4,
            ratio_mode: RatioMode::Trajectory,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.group_size < 2 {
            return bad(format!("group_size {} < 2", self.group_size));
        }
        for (name, v) in [("clip_low", self.clip_low), ("clip_high", self.clip_high)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if !(self.epsilon_std > 0.0) {
            return bad(format!("epsilon_std = {} must be > 0", self.epsilon_std));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning_rate = {} must be finite and >= 0", self.learning_rate));
        }
        if self.rollout_batch == 0 || self.mini_batch == 0 {
            return bad("rollout_batch and mini_batch must be >= 1".into());
        }
        Ok(())
    }
}

/// +1 iff the trajectory produced an answer equal to the target, else −1.
pub fn compute_reward(traj: &Trajectory, task: &Task) -> f64 {
    match traj.final_answer {
        Some(a) if a == task.target => 1.0,
        _ => -1.0,
    }
}

/// `A_i = (R_i − μ) / (σ + δ)` with population σ; `None` when σ = 0
/// (every sample solved it, or none did).
pub fn compute_advantages(rewards: &[f64], delta: f64) -> Option<Vec<f64>> {
    if rewards.is_empty() {
        return None;
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return None;
    }
    Some(rewards.iter().map(|r| (r - mean) / (std + delta)).collect())
}

/// G trajectories for one task with everything the objective needs.
///
/// `contexts[i][t]` are the committed-prefix features of turn `t` of
/// trajectory `i`; `old_logprobs[i]` lists the behavior log-probs of its
/// decisions in turn order.
#[derive(Debug, Clone)]
pub struct Group {
    pub task: Task,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<ContextFeatures>>,
    pub filtered: bool,
}

impl Group {
    /// Expects trajectories whose log-probs were already re-grounded on the
    /// committed context.
    pub fn new(task: Task, trajectories: Vec<Trajectory>, delta: f64) -> Group {
        let featurizer = Featurizer::new(&task);
        let rewards: Vec<f64> = trajectories
            .iter()
            .map(|t| t.reward.unwrap_or_else(|| compute_reward(t, &task)))
            .collect();
        let (advantages, filtered) = match compute_advantages(&rewards, delta) {
            Some(a) => (a, false),
            None => (vec![0.0; rewards.len()], true),
        };
        let old_logprobs = trajectories
            .iter()
            .map(|t| {
                t.turns
                    .iter()
                    .flat_map(|turn| turn.decisions.iter().map(|d| d.behavior_logprob))
                    .collect()
            })
            .collect();
        let contexts = trajectories
            .iter()
            .map(|t| committed_contexts(t, &featurizer))
            .collect();
        Group {
            task,
            trajectories,
            rewards,
            advantages,
            old_logprobs,
            contexts,
            filtered,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// New-policy log-prob of each decision of trajectory `i`, in turn order.
    fn new_logprobs(&self, i: usize, params: &PolicyParams) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.old_logprobs[i].len());
        for (turn, ctx) in self.trajectories[i].turns.iter().zip(&self.contexts[i]) {
            for d in &turn.decisions {
                out.push(action_logprob(ctx, std::slice::from_ref(d), params)?);
            }
        }
        Ok(out)
    }

    /// ρ_i = π_new(τ_i) / π_old(τ_i) over the committed contexts.
    pub fn importance_ratio(&self, i: usize, params: &PolicyParams) -> Result<f64> {
        let new = self.new_logprobs(i, params)?;
        importance_ratio(&self.old_logprobs[i], &new)
    }
}

/// `exp(Σ (new − old))`; errors if the result is not finite.
pub fn importance_ratio(old_logprobs: &[f64], new_logprobs: &[f64]) -> Result<f64> {
    if old_logprobs.len() != new_logprobs.len() {
        return Err(Error::contract("old/new log-prob lists differ in length"));
    }
    let shift: f64 = new_logprobs.iter().zip(old_logprobs).map(|(n, o)| n - o).sum();
    let rho = shift.exp();
    if !rho.is_finite() {
        return Err(Error::NonFinite(format!("importance ratio exp({shift})")));
    }
    Ok(rho)
}

/// `min(ρA, clip(ρ, 1−ε⁻, 1+ε⁺)A)` and whether the unclipped branch is the
/// one selected (the only branch with a gradient).
pub fn clipped_term(rho: f64, advantage: f64, clip_low: f64, clip_high: f64) -> (f64, bool) {
    let unclipped = rho * advantage;
    let clipped = rho.clamp(1.0 - clip_low, 1.0 + clip_high) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// `J = (1/G) Σ_i min(ρ_i A_i, clip(ρ_i) A_i)` and `∇J` at `params`.
pub fn surrogate_objective(group: &Group, params: &PolicyParams, config: &GrpoConfig) -> Result<(f64, Vec<f64>)> {
    if group.filtered {
        return Err(Error::contract("surrogate objective on a filtered group"));
    }
    if group.is_empty() {
        return Err(Error::contract("surrogate objective on an empty group"));
    }
    let g = group.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; param_dim()];
    for i in 0..group.len() {
        let adv = group.advantages[i];
        let traj = &group.trajectories[i];
        match config.ratio_mode {
            RatioMode::Trajectory => {
                let rho = group.importance_ratio(i, params)?;
                let (term, live) = clipped_term(rho, adv, config.clip_low, config.clip_high);
                value += term / g;
                if live && adv != 0.0 {
                    // ∇(ρA) = Aρ Σ ∇logπ
                    let scale = adv * rho / g;
                    for (turn, ctx) in traj.turns.iter().zip(&group.contexts[i]) {
                        accumulate_grad(ctx, &turn.decisions, params, scale, &mut grad)?;
                    }
                }
            }
            RatioMode::Decision => {
                let n = group.old_logprobs[i].len();
                if n == 0 {
                    continue;
                }
                let mut k = 0;
                for (turn, ctx) in traj.turns.iter().zip(&group.contexts[i]) {
                    for d in &turn.decisions {
                        let d = std::slice::from_ref(d);
                        let new = action_logprob(ctx, d, params)?;
                        let rho = importance_ratio(&group.old_logprobs[i][k..k + 1], &[new])?;
                        k += 1;
                        let (term, live) = clipped_term(rho, adv, config.clip_low, config.clip_high);
                        value += term / (g * n as f64);
                        if live && adv != 0.0 {
                            accumulate_grad(ctx, d, params, adv * rho / (g * n as f64), &mut grad)?;
                        }
                    }
                }
            }
        }
    }
    if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "surrogate objective for task {} is {value}",
            group.task.task_id
        )));
    }
    Ok((value, grad))
}

/// Outcome of one [`update`] call.
#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub params: PolicyParams,
    pub minibatches: usize,
    pub used_groups: usize,
    /// Mean surrogate value over the groups, evaluated as each minibatch was applied.
    pub mean_objective: f64,
}

/// Gradient ascent on J: for each minibatch of unfiltered groups (in input
/// order), `θ += lr · mean_g ∇J_g` evaluated at the current θ.
pub fn update(params: &PolicyParams, groups: &[Group], config: &GrpoConfig) -> Result<UpdateReport> {
    let live: Vec<&Group> = groups.iter().filter(|g| !g.filtered).collect();
    let mut theta = params.clone();
    if live.is_empty() {
        log::warn!("all {} groups filtered (zero reward variance); update skipped", groups.len());
        return Ok(UpdateReport {
            params: theta,
            minibatches: 0,
            used_groups: 0,
            mean_objective: 0.0,
        });
    }
    let mut objective_sum = 0.0;
    let mut minibatches = 0;
    for chunk in live.chunks(config.mini_batch) {
        let mut step = vec![0.0; param_dim()];
        for group in chunk {
            let (value, grad) = surrogate_objective(group, &theta, config)?;
            objective_sum += value;
            for (s, g) in step.iter_mut().zip(&grad) {
                *s += g;
            }
        }
        let scale = config.learning_rate / chunk.len() as f64;
        for (w, s) in theta.theta.iter_mut().zip(&step) {
            *w += scale * s;
        }
        minibatches += 1;
    }
    theta.validate()?;
    Ok(UpdateReport {
        params: theta,
        minibatches,
        used_groups: live.len(),
        mean_objective: objective_sum / live.len() as f64,
    })
}
