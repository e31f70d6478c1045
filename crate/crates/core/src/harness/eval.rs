//! pass@1 and pass@k over a fixed task set.
//!
//! For a task with `c` correct answers among `n` samples the unbiased
//! estimator is
//!
//! ```text
//! pass@k = 1 − C(n − c, k) / C(n, k) = 1 − Π_{i = n−c+1}^{n} (1 − k / i)
//! ```
//!
//! evaluated in product form to avoid huge binomials. The reported value
//! is the mean over tasks.

use crate::par::map_range;
use crate::policy::PolicyParams;
use crate::rollout::{run_episode, stream_id, EpisodeRng, RolloutLimits};
use crate::tasks::Task;
use crate::{Error, Result};

/// Unbiased pass@k for one task with `c` of `n` samples correct.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> f64 {
    assert!(k <= n && c <= n, "pass_at_k needs k <= n and c <= n");
    if n - c < k {
        return 1.0;
    }
    1.0 - ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tasks: usize,
    pub n_samples: usize,
    pub k: usize,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    /// Correct samples per task, in task order.
    pub correct: Vec<usize>,
}

/// pass@1 and pass@k from a task × sample success matrix. pass@1 scores the
/// first sample of each task only.
pub fn summarize(outcomes: &[Vec<bool>], k: usize) -> Result<EvalReport> {
    let n = outcomes.first().map_or(0, Vec::len);
    if outcomes.is_empty() || n == 0 {
        return Err(Error::contract("evaluation needs at least one task and one sample"));
    }
    if outcomes.iter().any(|row| row.len() != n) {
        return Err(Error::contract("every task needs the same number of samples"));
    }
    if k == 0 || k > n {
        return Err(Error::contract(format!("k = {k} must lie in 1..={n}")));
    }
    let correct: Vec<usize> = outcomes.iter().map(|row| row.iter().filter(|&&s| s).count()).collect();
    let t = outcomes.len() as f64;
    Ok(EvalReport {
        tasks: outcomes.len(),
        n_samples: n,
        k,
        pass_at_1: outcomes.iter().filter(|row| row[0]).count() as f64 / t,
        pass_at_k: correct.iter().map(|&c| pass_at_k(n, c, k)).sum::<f64>() / t,
        correct,
    })
}

/// Roll out `n_samples` raw episodes per task and score them.
pub fn evaluate(
    params: &PolicyParams,
    tasks: &[Task],
    n_samples: usize,
    k: usize,
    limits: &RolloutLimits,
    seed: u64,
    parallel: bool,
) -> Result<EvalReport> {
    if tasks.is_empty() || n_samples == 0 {
        return Err(Error::contract("evaluation needs at least one task and one sample"));
    }
    let flat = map_range(tasks.len() * n_samples, parallel, |idx| {
        let (t, s) = (idx / n_samples, idx % n_samples);
        let mut rng = EpisodeRng::new(seed, stream_id(&[EVAL_TAG, t as u64, s as u64]));
        run_episode(&tasks[t], params, limits, &mut rng).reward == Some(1.0)
    });
    let outcomes: Vec<Vec<bool>> = flat.chunks(n_samples).map(<[bool]>::to_vec).collect();
    summarize(&outcomes, k)
}

const EVAL_TAG: u64 = 0xE7A1;
