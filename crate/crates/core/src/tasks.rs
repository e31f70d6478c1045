//! Task distribution: three parameterized families of integer problems whose
//! targets come from plain Rust arithmetic, independent of the templates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::minilang::{run, ExecLimits};
use crate::templates::{render, Approach, Fault};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskFamily {
    /// `x * y + z`
    Arithmetic = 0,
    /// `(x + y) * (x - z)`
    TwoStep = 1,
    /// `x / (y - z)`, truncating; the shortcut template divides by `y`, which may be 0.
    Division = 2,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 3] = [TaskFamily::Arithmetic, TaskFamily::TwoStep, TaskFamily::Division];
    pub const COUNT: usize = 3;

    pub fn from_index(i: i64) -> Option<TaskFamily> {
        usize::try_from(i).ok().and_then(|i| TaskFamily::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::Arithmetic => "arithmetic",
            TaskFamily::TwoStep => "twostep",
            TaskFamily::Division => "division",
        }
    }

    fn sample_operands<R: Rng + ?Sized>(self, rng: &mut R) -> [i64; 3] {
        match self {
            TaskFamily::Arithmetic => [rng.gen_range(2..=19), rng.gen_range(2..=19), rng.gen_range(1..=50)],
            TaskFamily::TwoStep => [rng.gen_range(2..=30), rng.gen_range(1..=20), rng.gen_range(1..=30)],
            TaskFamily::Division => loop {
                let (x, y, z) = (rng.gen_range(10..=99), rng.gen_range(0..=6), rng.gen_range(1..=6));
                if y != z {
                    break [x, y, z];
                }
            },
        }
    }

    /// Ground truth by direct evaluation; `None` if undefined or out of range.
    pub fn evaluate(self, [x, y, z]: [i64; 3]) -> Option<i64> {
        let v = match self {
            TaskFamily::Arithmetic => x.checked_mul(y)?.checked_add(z)?,
            TaskFamily::TwoStep => x.checked_add(y)?.checked_mul(x.checked_sub(z)?)?,
            TaskFamily::Division => x.checked_div(y.checked_sub(z)?)?,
        };
        (v.unsigned_abs() <= ExecLimits::default().max_abs_value as u64).then_some(v)
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown task family {s:?}")))
    }
}

/// One query. `prompt_features` is `[family, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub task_id: String,
    pub prompt_features: Vec<i64>,
    pub target: i64,
}

impl Task {
    /// Panics if the operands have no defined target; use [`generate_task`]
    /// for sampled tasks.
    pub fn new(family: TaskFamily, x: i64, y: i64, z: i64) -> Task {
        let target = family
            .evaluate([x, y, z])
            .unwrap_or_else(|| panic!("{family} task ({x}, {y}, {z}) has no defined target"));
        Task {
            task_id: format!("{}-{x}-{y}-{z}", family.name()),
            prompt_features: vec![family as i64, x, y, z],
            target,
        }
    }

    pub fn family(&self) -> TaskFamily {
        TaskFamily::from_index(self.prompt_features[0]).expect("validated task family")
    }

    pub fn operands(&self) -> [i64; 3] {
        [self.prompt_features[1], self.prompt_features[2], self.prompt_features[3]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt_features.len() != 4 || TaskFamily::from_index(self.prompt_features[0]).is_none() {
            return Err(Error::Config(format!(
                "task {}: prompt_features must be [family, x, y, z]",
                self.task_id
            )));
        }
        if self.family().evaluate(self.operands()) != Some(self.target) {
            return Err(Error::Config(format!(
                "task {}: target {} disagrees with direct evaluation",
                self.task_id, self.target
            )));
        }
        Ok(())
    }

    /// True when some clean template evaluates to the target.
    pub fn is_solvable(&self) -> bool {
        Approach::ALL.into_iter().any(|a| {
            run(&render(self, a, Fault::None), ExecLimits::default()).value() == Some(self.target)
        })
    }
}

pub fn generate_task<R: Rng + ?Sized>(family: TaskFamily, rng: &mut R) -> Task {
    loop {
        let ops = family.sample_operands(rng);
        if family.evaluate(ops).is_some() {
            let task = Task::new(family, ops[0], ops[1], ops[2]);
            if task.is_solvable() {
                return task;
            }
        }
    }
}

pub fn generate_tasks<R: Rng + ?Sized>(families: &[TaskFamily], count: usize, rng: &mut R) -> Vec<Task> {
    (0..count)
        .map(|_| {
            let family = families[rng.gen_range(0..families.len())];
            generate_task(family, rng)
        })
        .collect()
}

pub fn tasks_to_json(tasks: &[Task]) -> String {
    serde_json::to_string_pretty(tasks).expect("task serialization is infallible")
}

pub fn tasks_from_json(text: &str) -> Result<Vec<Task>> {
    let tasks: Vec<Task> = serde_json::from_str(text)?;
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_targets_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in TaskFamily::ALL {
            for _ in 0..200 {
                let t = generate_task(family, &mut rng);
                let [x, y, z] = t.operands();
                let expected = match family {
                    TaskFamily::Arithmetic => x * y + z,
                    TaskFamily::TwoStep => (x + y) * (x - z),
                    TaskFamily::Division => x / (y - z),
                };
                assert_eq!(t.target, expected);
                assert!(t.target.unsigned_abs() <= 1 << 62);
                assert!(t.is_solvable());
                t.validate().unwrap();
            }
        }
    }

    #[test]
    fn same_seed_same_task() {
        let a = generate_task(TaskFamily::Division, &mut ChaCha8Rng::seed_from_u64(5));
        let b = generate_task(TaskFamily::Division, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn division_truncates_toward_zero() {
        assert_eq!(Task::new(TaskFamily::Division, 73, 1, 5).target, -18);
        assert_eq!(TaskFamily::Division.evaluate([10, 3, 3]), None);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tasks = generate_tasks(&TaskFamily::ALL, 10, &mut rng);
        assert_eq!(tasks_from_json(&tasks_to_json(&tasks)).unwrap(), tasks);
        let mut bad = tasks.clone();
        bad[0].target += 1;
        assert!(tasks_from_json(&tasks_to_json(&bad)).is_err());
    }

    #[test]
    fn family_names_parse() {
        for f in TaskFamily::ALL {
            assert_eq!(f.name().parse::<TaskFamily>().unwrap(), f);
        }
        assert!("nope".parse::<TaskFamily>().is_err());
    }
}
