//! Code templates the toy agent can emit: three approaches per task family,
//! each renderable clean or with one planted fault.

use crate::tasks::{Task, TaskFamily};

pub const APPROACHES: usize = 3;
pub const FAULTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Approach {
    /// One expression computing the target.
    Direct = 0,
    /// Same value through intermediate variables.
    Stepwise = 1,
    /// A plausible but wrong formula (and, for division, a zero-divisor risk).
    Shortcut = 2,
}

impl Approach {
    pub const ALL: [Approach; APPROACHES] = [Approach::Direct, Approach::Stepwise, Approach::Shortcut];

    pub fn from_index(i: usize) -> Approach {
        Approach::ALL[i]
    }

    pub fn describe(self) -> &'static str {
        match self {
            Approach::Direct => "the direct formula",
            Approach::Stepwise => "a stepwise computation with named intermediates",
            Approach::Shortcut => "a quick shortcut formula",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    None = 0,
    /// Unbalanced parenthesis: a Parse failure one character away from the clean code.
    Typo = 1,
    /// First operand written as an unassigned variable.
    UndefinedName = 2,
    /// A stray `/ 0` on the final expression.
    ZeroDivisor = 3,
}

impl Fault {
    pub const ALL: [Fault; FAULTS] = [Fault::None, Fault::Typo, Fault::UndefinedName, Fault::ZeroDivisor];

    pub fn from_index(i: usize) -> Fault {
        Fault::ALL[i]
    }
}

fn render_clean(family: TaskFamily, approach: Approach, x: &str, y: &str, z: &str) -> String {
    use Approach::*;
    use TaskFamily::*;
    match (family, approach) {
        (Arithmetic, Direct) => format!("{x} * {y} + {z}"),
        (Arithmetic, Stepwise) => format!("p = {x} * {y}; p + {z}"),
        (Arithmetic, Shortcut) => format!("{x} * ({y} + {z})"),
        (TwoStep, Direct) => format!("({x} + {y}) * ({x} - {z})"),
        (TwoStep, Stepwise) => format!("s = {x} + {y}; d = {x} - {z}; s * d"),
        (TwoStep, Shortcut) => format!("{x} + {y} * {x} - {z}"),
        (Division, Direct) => format!("{x} / ({y} - {z})"),
        (Division, Stepwise) => format!("d = {y} - {z}; {x} / d"),
        (Division, Shortcut) => format!("{x} / {y} - {z}"),
    }
}

pub fn render(task: &Task, approach: Approach, fault: Fault) -> String {
    let [x, y, z] = task.operands();
    let (xs, ys, zs) = (x.to_string(), y.to_string(), z.to_string());
    let family = task.family();
    match fault {
        Fault::None => render_clean(family, approach, &xs, &ys, &zs),
        Fault::Typo => format!("({}", render_clean(family, approach, &xs, &ys, &zs)),
        Fault::UndefinedName => render_clean(family, approach, "q", &ys, &zs),
        Fault::ZeroDivisor => format!("{} / 0", render_clean(family, approach, &xs, &ys, &zs)),
    }
}

/// Every (approach, fault) rendering for one task, for recognizing which
/// template produced a piece of code.
#[derive(Debug, Clone)]
pub struct TemplateLibrary {
    codes: Vec<(Approach, Fault, String)>,
}

impl TemplateLibrary {
    pub fn new(task: &Task) -> Self {
        let mut codes = Vec::with_capacity(APPROACHES * FAULTS);
        for a in Approach::ALL {
            for f in Fault::ALL {
                codes.push((a, f, render(task, a, f)));
            }
        }
        TemplateLibrary { codes }
    }

    pub fn recognize(&self, code: &str) -> Option<(Approach, Fault)> {
        self.codes
            .iter()
            .find(|(_, _, c)| c == code)
            .map(|(a, f, _)| (*a, *f))
    }

    pub fn render(&self, approach: Approach, fault: Fault) -> &str {
        &self.codes[approach as usize * FAULTS + fault as usize].2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{run, ExecLimits};
    use crate::trajectory::{ErrorKind, Observation};

    fn task(family: TaskFamily, x: i64, y: i64, z: i64) -> Task {
        Task::new(family, x, y, z)
    }

    #[test]
    fn clean_direct_and_stepwise_hit_the_target() {
        for t in [
            task(TaskFamily::Arithmetic, 7, 3, 5),
            task(TaskFamily::TwoStep, 9, 4, 12),
            task(TaskFamily::Division, 73, 1, 4),
        ] {
            for a in [Approach::Direct, Approach::Stepwise] {
                let obs = run(&render(&t, a, Fault::None), ExecLimits::default());
                assert_eq!(obs.value(), Some(t.target), "{t:?} {a:?}");
            }
        }
    }

    #[test]
    fn faults_fail_with_their_kind() {
        let t = task(TaskFamily::Arithmetic, 7, 3, 5);
        let kind = |f| run(&render(&t, Approach::Direct, f), ExecLimits::default()).error_kind();
        assert_eq!(kind(Fault::Typo), Some(ErrorKind::Parse));
        assert_eq!(kind(Fault::UndefinedName), Some(ErrorKind::UndefinedVariable));
        assert_eq!(kind(Fault::ZeroDivisor), Some(ErrorKind::DivisionByZero));
    }

    #[test]
    fn shortcut_division_hits_zero_when_y_is_zero() {
        let t = task(TaskFamily::Division, 50, 0, 3);
        let obs = run(&render(&t, Approach::Shortcut, Fault::None), ExecLimits::default());
        assert!(matches!(
            obs,
            Observation::Failure {
                error_kind: ErrorKind::DivisionByZero,
                ..
            }
        ));
    }

    #[test]
    fn recognition_inverts_rendering() {
        let t = task(TaskFamily::TwoStep, 11, 2, 3);
        let lib = TemplateLibrary::new(&t);
        for a in Approach::ALL {
            for f in Fault::ALL {
                assert_eq!(lib.recognize(&render(&t, a, f)), Some((a, f)));
                assert_eq!(lib.render(a, f), render(&t, a, f));
            }
        }
        assert_eq!(lib.recognize("1 + 1"), None);
    }
}
