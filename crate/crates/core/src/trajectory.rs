//! Turns, observations, trajectories, persistent history prefixes, and the
//! one-JSON-object-per-line interchange format ("trajectory lines").

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    Parse,
    DivisionByZero,
    UndefinedVariable,
    StepLimit,
    Overflow,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 5] = [
        ErrorKind::Parse,
        ErrorKind::DivisionByZero,
        ErrorKind::UndefinedVariable,
        ErrorKind::StepLimit,
        ErrorKind::Overflow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What the interpreter said about one code action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ObservationWire", into = "ObservationWire")]
pub enum Observation {
    Success { stdout: String, value: Option<i64> },
    Failure { error_kind: ErrorKind, message: String },
}

impl Observation {
    pub fn success(value: i64) -> Self {
        Observation::Success {
            stdout: value.to_string(),
            value: Some(value),
        }
    }

    pub fn failure(error_kind: ErrorKind, message: impl Into<String>) -> Self {
        Observation::Failure {
            error_kind,
            message: message.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Observation::Success { .. })
    }

    pub fn is_failure(&self) -> bool {
        !self.is_success()
    }

    pub fn value(&self) -> Option<i64> {
        match self {
            Observation::Success { value, .. } => *value,
            Observation::Failure { .. } => None,
        }
    }

    pub fn error_kind(&self) -> Option<ErrorKind> {
        match self {
            Observation::Failure { error_kind, .. } => Some(*error_kind),
            Observation::Success { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Outcome {
    Success,
    Failure,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationWire {
    outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stdout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_kind: Option<ErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

impl From<Observation> for ObservationWire {
    fn from(o: Observation) -> Self {
        match o {
            Observation::Success { stdout, value } => ObservationWire {
                outcome: Outcome::Success,
                stdout: Some(stdout),
                value,
                error_kind: None,
                message: None,
            },
            Observation::Failure {
                error_kind,
                message,
            } => ObservationWire {
                outcome: Outcome::Failure,
                stdout: None,
                value: None,
                error_kind: Some(error_kind),
                message: Some(message),
            },
        }
    }
}

impl TryFrom<ObservationWire> for Observation {
    type Error = String;

    fn try_from(w: ObservationWire) -> std::result::Result<Self, String> {
        match w.outcome {
            Outcome::Success => {
                if w.error_kind.is_some() || w.message.is_some() {
                    return Err("Success observation carries error_kind/message".into());
                }
                Ok(Observation::Success {
                    stdout: w.stdout.unwrap_or_default(),
                    value: w.value,
                })
            }
            Outcome::Failure => {
                if w.value.is_some() {
                    return Err("Failure observation carries a value".into());
                }
                let error_kind = w.error_kind.ok_or("Failure observation lacks error_kind")?;
                let message = w.message.unwrap_or_default();
                if message.is_empty() {
                    return Err("Failure observation has an empty message".into());
                }
                Ok(Observation::Failure {
                    error_kind,
                    message,
                })
            }
        }
    }
}

/// Decision categories of the factored policy. The numeric id is what gets
/// serialized as `category_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    /// Fresh attempt vs. local edit of the failed code; only posed after a failure.
    Mode = 0,
    Approach = 1,
    Fault = 2,
    /// Continue vs. stop; posed after a successful execution.
    Stop = 3,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Mode,
        Category::Approach,
        Category::Fault,
        Category::Stop,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Category> {
        Category::ALL.get(id as usize).copied()
    }

    pub fn arity(self) -> usize {
        match self {
            Category::Mode => 2,
            Category::Approach => 3,
            Category::Fault => 4,
            Category::Stop => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Mode => "mode",
            Category::Approach => "approach",
            Category::Fault => "fault",
            Category::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRecord {
    pub category_id: u8,
    pub choice: u8,
    pub behavior_logprob: f64,
}

impl DecisionRecord {
    pub fn category(&self) -> Option<Category> {
        Category::from_id(self.category_id)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let cat = self
            .category()
            .ok_or_else(|| format!("unknown category_id {}", self.category_id))?;
        if self.choice as usize >= cat.arity() {
            return Err(format!(
                "choice {} out of arity {} for category {}",
                self.choice,
                cat.arity(),
                cat.name()
            ));
        }
        if !(self.behavior_logprob <= 0.0) {
            return Err(format!(
                "behavior_logprob {} is not <= 0",
                self.behavior_logprob
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Natural,
    PurifiedShallow,
    PurifiedDeep,
}

impl Provenance {
    pub fn is_purified(self) -> bool {
        !matches!(self, Provenance::Natural)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub reasoning: String,
    pub code: String,
    pub observation: Observation,
    pub decisions: Vec<DecisionRecord>,
    pub provenance: Provenance,
}

impl Turn {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.decisions.is_empty() {
            return Err("turn has no decisions".into());
        }
        for d in &self.decisions {
            d.validate()?;
        }
        if self.provenance.is_purified() && self.observation.is_failure() {
            return Err("purified turn has a Failure observation".into());
        }
        Ok(())
    }

    /// The STOP decision's choice, if one was recorded.
    pub fn stop_choice(&self) -> Option<u8> {
        self.decisions
            .iter()
            .find(|d| d.category_id == Category::Stop.id())
            .map(|d| d.choice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub tool_calls: usize,
    pub tool_errors: usize,
    pub noisy_success_runs: usize,
}

impl Stats {
    pub fn of(turns: &[Turn]) -> Stats {
        Stats {
            tool_calls: turns.len(),
            tool_errors: turns.iter().filter(|t| t.observation.is_failure()).count(),
            noisy_success_runs: count_noisy_success_runs(turns),
        }
    }
}

/// Number of maximal runs of one or more Failure turns that are immediately
/// followed by a Success turn.
pub fn count_noisy_success_runs(turns: &[Turn]) -> usize {
    noisy_success_runs(turns).len()
}

/// `(start, end)` index pairs of failure runs `turns[start..end]` where
/// `turns[end]` is a Success.
pub fn noisy_success_runs(turns: &[Turn]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < turns.len() {
        if turns[i].observation.is_failure() {
            let start = i;
            while i < turns.len() && turns[i].observation.is_failure() {
                i += 1;
            }
            if i < turns.len() {
                runs.push((start, i));
            }
        } else {
            i += 1;
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub task_id: String,
    pub turns: Vec<Turn>,
    pub final_answer: Option<i64>,
    pub reward: Option<f64>,
    pub purification_applied: bool,
    pub stats: Stats,
}

impl Trajectory {
    /// Assemble from committed turns; the answer is the value of the last
    /// Success turn and stats are derived from the turns.
    pub fn from_turns(task_id: impl Into<String>, turns: Vec<Turn>, purification_applied: bool) -> Self {
        let final_answer = turns.iter().rev().find_map(|t| t.observation.value());
        let stats = Stats::of(&turns);
        Trajectory {
            task_id: task_id.into(),
            turns,
            final_answer,
            reward: None,
            purification_applied,
            stats,
        }
    }

    pub fn has_purified_turns(&self) -> bool {
        self.turns.iter().any(|t| t.provenance.is_purified())
    }

    /// Checks every structural invariant; returns the offending field name on error.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        for (i, t) in self.turns.iter().enumerate() {
            t.validate().map_err(|m| (format!("turns[{i}]"), m))?;
        }
        if !self.purification_applied && self.has_purified_turns() {
            return Err((
                "purification_applied".into(),
                "false but purified turns present".into(),
            ));
        }
        if let Some(r) = self.reward {
            if r != 1.0 && r != -1.0 {
                return Err(("reward".into(), format!("{r} is not in {{-1, 1}}")));
            }
        }
        let expected = Stats::of(&self.turns);
        if expected != self.stats {
            return Err((
                "stats".into(),
                format!("stored {:?} but turns imply {:?}", self.stats, expected),
            ));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serialize(self)
    }
}

pub fn serialize(traj: &Trajectory) -> String {
    serde_json::to_string(traj).expect("trajectory serialization is infallible")
}

fn field_from_serde_message(msg: &str) -> String {
    // serde reports "missing field `x`" / "unknown field `x`, expected ..."
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "<json>".to_string()
}

/// Parse one trajectory line. `line_no` is only used for error reporting.
pub fn deserialize_line(text: &str, line_no: usize) -> Result<Trajectory> {
    let traj: Trajectory = serde_json::from_str(text.trim_end_matches(['\n', '\r'])).map_err(|e| {
        let msg = e.to_string();
        Error::Format {
            line: line_no,
            field: field_from_serde_message(&msg),
            message: msg,
        }
    })?;
    traj.validate().map_err(|(field, message)| Error::Format {
        line: line_no,
        field,
        message,
    })?;
    Ok(traj)
}

pub fn deserialize(text: &str) -> Result<Trajectory> {
    deserialize_line(text, 1)
}

/// Parse a whole trajectory-lines document; blank lines are skipped.
pub fn deserialize_lines(text: &str) -> Result<Vec<Trajectory>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| deserialize_line(l, i + 1))
        .collect()
}

pub fn serialize_lines(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajs {
        out.push_str(&serialize(t));
        out.push('\n');
    }
    out
}

struct Node {
    turn: Turn,
    prev: Option<Arc<Node>>,
    len: usize,
    failures: usize,
}

/// Persistent, structurally shared history prefix `[(r_0,c_0,o_0), ...]`.
///
/// `concat` never mutates: the old prefix stays valid and unchanged, which is
/// what lets a lookahead extend a frozen history without committing to it.
#[derive(Clone, Default)]
pub struct History {
    tip: Option<Arc<Node>>,
}

impl History {
    pub fn new() -> Self {
        History { tip: None }
    }

    pub fn from_turns(turns: impl IntoIterator<Item = Turn>) -> Self {
        turns.into_iter().fold(History::new(), |h, t| h.concat(t))
    }

    pub fn concat(&self, turn: Turn) -> History {
        let (len, failures) = match &self.tip {
            Some(n) => (n.len, n.failures),
            None => (0, 0),
        };
        let failures = failures + usize::from(turn.observation.is_failure());
        History {
            tip: Some(Arc::new(Node {
                turn,
                prev: self.tip.clone(),
                len: len + 1,
                failures,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.tip.as_ref().map_or(0, |n| n.len)
    }

    pub fn is_empty(&self) -> bool {
        self.tip.is_none()
    }

    /// Count of Failure observations anywhere in the prefix.
    pub fn failures(&self) -> usize {
        self.tip.as_ref().map_or(0, |n| n.failures)
    }

    pub fn last(&self) -> Option<&Turn> {
        self.tip.as_ref().map(|n| &n.turn)
    }

    pub fn turns(&self) -> Vec<Turn> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.tip.as_deref();
        while let Some(n) = cur {
            out.push(n.turn.clone());
            cur = n.prev.as_deref();
        }
        out.reverse();
        out
    }
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.turns()).finish()
    }
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.turns() == other.turns()
    }
}

pub fn concat(history: &History, turn: Turn) -> History {
    history.concat(turn)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn decision(cat: Category, choice: u8) -> DecisionRecord {
        DecisionRecord {
            category_id: cat.id(),
            choice,
            behavior_logprob: -(cat.arity() as f64).ln(),
        }
    }

    pub fn turn(code: &str, obs: Observation) -> Turn {
        Turn {
            reasoning: format!("try {code}"),
            code: code.to_string(),
            observation: obs,
            decisions: vec![decision(Category::Approach, 0), decision(Category::Fault, 0)],
            provenance: Provenance::Natural,
        }
    }

    pub fn ok(code: &str, v: i64) -> Turn {
        turn(code, Observation::success(v))
    }

    pub fn err(code: &str) -> Turn {
        turn(code, Observation::failure(ErrorKind::Parse, "parse error at 0"))
    }

    /// Pattern string of 'S'/'F' characters to turns.
    pub fn pattern(p: &str) -> Vec<Turn> {
        p.chars()
            .enumerate()
            .map(|(i, c)| match c {
                'S' => ok(&format!("{i}"), i as i64),
                'F' => err(&format!("({i}")),
                _ => unreachable!(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn concat_is_persistent() {
        let empty = History::new();
        let h1 = concat(&empty, ok("1", 1));
        assert_eq!(h1.len(), 1);
        assert!(empty.is_empty());
        let h2 = concat(&h1, err("(2"));
        assert_eq!(h2.len(), 2);
        assert_eq!(h1.turns(), vec![ok("1", 1)]);
        assert_eq!(h2.turns(), vec![ok("1", 1), err("(2")]);
        assert_eq!(h2.failures(), 1);
        assert_eq!(h1.failures(), 0);
    }

    #[test]
    fn concat_preserves_order() {
        let turns = pattern("SFFSFS");
        let mut h = History::new();
        let mut list = Vec::new();
        for t in &turns {
            h = h.concat(t.clone());
            list.push(t.clone());
            assert_eq!(h.turns(), list);
        }
        assert_eq!(h.failures(), 3);
    }

    #[test]
    fn noisy_success_examples() {
        assert_eq!(count_noisy_success_runs(&pattern("SS")), 0);
        assert_eq!(count_noisy_success_runs(&pattern("FS")), 1);
        assert_eq!(count_noisy_success_runs(&pattern("FFSF")), 1);
        assert_eq!(count_noisy_success_runs(&pattern("FSFFSF")), 2);
        assert_eq!(count_noisy_success_runs(&pattern("")), 0);
        assert_eq!(noisy_success_runs(&pattern("SFFSF")), vec![(1, 3)]);
    }

    #[test]
    fn round_trip_examples() {
        let empty = Trajectory::from_turns("t0", vec![], false);
        assert_eq!(deserialize(&serialize(&empty)).unwrap(), empty);

        let mut mixed = Trajectory::from_turns("t1", pattern("FSF"), false);
        mixed.reward = Some(-1.0);
        let line = serialize(&mixed);
        assert!(!line.contains('\n'));
        assert_eq!(deserialize(&line).unwrap(), mixed);
    }

    #[test]
    fn wire_field_names() {
        let mut t = Trajectory::from_turns("t1", pattern("FS"), false);
        t.reward = Some(1.0);
        let v: serde_json::Value = serde_json::from_str(&serialize(&t)).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys.iter().map(String::as_str).collect::<std::collections::BTreeSet<_>>(),
            ["final_answer", "purification_applied", "reward", "stats", "task_id", "turns"]
                .into_iter()
                .collect()
        );
        let fail = &v["turns"][0]["observation"];
        assert_eq!(fail["outcome"], "Failure");
        assert_eq!(fail["error_kind"], "Parse");
        assert!(fail.get("value").is_none());
        let succ = &v["turns"][1]["observation"];
        assert_eq!(succ["outcome"], "Success");
        assert_eq!(succ["stdout"], "1");
        assert_eq!(succ["value"], 1);
        assert_eq!(v["turns"][0]["provenance"], "Natural");
        assert_eq!(v["stats"]["noisy_success_runs"], 1);
    }

    #[test]
    fn truncated_line_names_missing_field() {
        let err = deserialize(r#"{"task_id":"t","turns":[],"final_answer":null}"#).unwrap_err();
        match err {
            Error::Format { field, line, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "purification_applied");
            }
            other => panic!("{other:?}"),
        }
        let full = serialize(&Trajectory::from_turns("t", pattern("S"), false));
        let cut = &full[..full.len() / 2];
        assert!(matches!(deserialize(cut), Err(Error::Format { .. })));
    }

    #[test]
    fn unknown_fields_rejected() {
        let full = serialize(&Trajectory::from_turns("t", vec![], false));
        let extra = full.replacen('{', r#"{"bogus":1,"#, 1);
        match deserialize(&extra).unwrap_err() {
            Error::Format { field, .. } => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invariant_violations_rejected() {
        let mut t = Trajectory::from_turns("t", pattern("FS"), false);
        t.stats.tool_errors = 0;
        match deserialize(&serialize(&t)).unwrap_err() {
            Error::Format { field, .. } => assert_eq!(field, "stats"),
            other => panic!("{other:?}"),
        }

        let mut t = Trajectory::from_turns("t", pattern("S"), false);
        t.turns[0].provenance = Provenance::PurifiedShallow;
        match deserialize(&serialize(&t)).unwrap_err() {
            Error::Format { field, .. } => assert_eq!(field, "purification_applied"),
            other => panic!("{other:?}"),
        }

        let mut t = Trajectory::from_turns("t", pattern("S"), false);
        t.turns[0].decisions[0].choice = 9;
        assert!(deserialize(&serialize(&t)).is_err());

        let mut t = Trajectory::from_turns("t", pattern("S"), false);
        t.turns[0].decisions.clear();
        assert!(deserialize(&serialize(&t)).is_err());

        let bad_obs = serialize(&Trajectory::from_turns("t", pattern("F"), true))
            .replace(r#""error_kind":"Parse""#, r#""error_kind":"Parse","value":3"#);
        assert!(deserialize(&bad_obs).is_err());
    }

    #[test]
    fn deserialize_lines_reports_line_number() {
        let good = serialize(&Trajectory::from_turns("t", vec![], false));
        let doc = format!("{good}\n\n{{\"task_id\":\"x\"}}\n");
        match deserialize_lines(&doc).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    fn arb_observation() -> impl Strategy<Value = Observation> {
        prop_oneof![
            any::<i64>().prop_map(Observation::success),
            (0usize..5, "[a-z ]{1,20}")
                .prop_map(|(k, m)| Observation::failure(ErrorKind::ALL[k], m)),
        ]
    }

    fn arb_turn() -> impl Strategy<Value = Turn> {
        (
            "[ -~]{0,30}",
            "[ -~]{0,30}",
            arb_observation(),
            proptest::collection::vec((0u8..4, 0u8..2, -20.0f64..=0.0), 1..4),
        )
            .prop_map(|(reasoning, code, observation, ds)| Turn {
                reasoning,
                code,
                observation,
                decisions: ds
                    .into_iter()
                    .map(|(c, ch, lp)| DecisionRecord {
                        category_id: c,
                        choice: ch,
                        behavior_logprob: lp,
                    })
                    .collect(),
                provenance: Provenance::Natural,
            })
    }

    proptest! {
        #[test]
        fn round_trip(turns in proptest::collection::vec(arb_turn(), 0..6),
                      reward in proptest::option::of(prop_oneof![Just(1.0), Just(-1.0)]),
                      id in "[a-z0-9-]{1,12}") {
            let mut t = Trajectory::from_turns(id, turns, false);
            t.reward = reward;
            let back = deserialize(&serialize(&t)).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn no_failures_means_no_noisy_runs(n in 0usize..10) {
            let turns: Vec<Turn> = (0..n).map(|i| ok("1", i as i64)).collect();
            prop_assert_eq!(count_noisy_success_runs(&turns), 0);
        }
    }
}
