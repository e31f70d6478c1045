//! Factored-categorical toy policy with exact log-probabilities and analytic
//! gradients.
//!
//! Each decision category has its own weight block `W_cat` (arity × feature
//! length); a decision is drawn from `softmax(W_cat · features)`. A turn is a
//! short decision tree:
//!
//! 1. after a failed execution, MODE picks a fresh attempt or a local edit of
//!    the failed code;
//! 2. a fresh attempt picks an APPROACH (a local edit keeps the failed one);
//! 3. FAULT picks clean code or one of the planted mistakes;
//! 4. after a successful execution, STOP picks whether to end the episode.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tasks::{Task, TaskFamily};
use crate::templates::{Approach, Fault, TemplateLibrary, APPROACHES};
use crate::trajectory::{Category, DecisionRecord, ErrorKind, History};
use crate::{Error, Result};

pub mod feature {
    //! Feature vector layout.
    pub const BIAS: usize = 0;
    pub const FAMILY: usize = 1;
    pub const TURN: usize = 4;
    pub const TURN_BUCKETS: usize = 4;
    pub const PRIOR_FAILURES: usize = 8;
    pub const LAST_ERROR: usize = 9;
    pub const LAST_APPROACH: usize = 14;
    pub const LAST_SUCCESS: usize = 17;
    pub const LEN: usize = 18;
    /// Prior-failure count is clipped to this value.
    pub const MAX_FAILURE_COUNT: usize = 4;
}

pub const MODE_FRESH: u8 = 0;
pub const MODE_LOCAL_EDIT: u8 = 1;
pub const STOP_CONTINUE: u8 = 0;
pub const STOP_HALT: u8 = 1;

/// Conditioning features of one history prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures(pub Vec<f64>);

impl ContextFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn prior_failures(&self) -> f64 {
        self.0[feature::PRIOR_FAILURES]
    }

    pub fn last_error(&self) -> Option<ErrorKind> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| self.0[feature::LAST_ERROR + k.index()] != 0.0)
    }

    pub fn last_approach(&self) -> Option<Approach> {
        (0..APPROACHES)
            .find(|&i| self.0[feature::LAST_APPROACH + i] != 0.0)
            .map(Approach::from_index)
    }
}

/// Computes features for prefixes of one task's history.
///
/// The per-prefix work is O(1): failure counts are cached on the persistent
/// history nodes and the template library is rendered once per task.
#[derive(Debug, Clone)]
pub struct Featurizer {
    family: TaskFamily,
    library: TemplateLibrary,
}

impl Featurizer {
    pub fn new(task: &Task) -> Self {
        Featurizer {
            family: task.family(),
            library: TemplateLibrary::new(task),
        }
    }

    pub fn library(&self) -> &TemplateLibrary {
        &self.library
    }

    pub fn features(&self, history: &History) -> ContextFeatures {
        let mut f = vec![0.0; feature::LEN];
        f[feature::BIAS] = 1.0;
        f[feature::FAMILY + self.family as usize] = 1.0;
        f[feature::TURN + history.len().min(feature::TURN_BUCKETS - 1)] = 1.0;
        f[feature::PRIOR_FAILURES] = history.failures().min(feature::MAX_FAILURE_COUNT) as f64;
        if let Some(last) = history.last() {
            match last.observation.error_kind() {
                Some(kind) => f[feature::LAST_ERROR + kind.index()] = 1.0,
                None => f[feature::LAST_SUCCESS] = 1.0,
            }
            if let Some((approach, _)) = self.library.recognize(&last.code) {
                f[feature::LAST_APPROACH + approach as usize] = 1.0;
            }
        }
        ContextFeatures(f)
    }
}

pub fn featurize(history: &History, task: &Task) -> ContextFeatures {
    Featurizer::new(task).features(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Fresh,
    LocalEdit,
}

/// A sampled `(reasoning, code)` pair with the decisions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPlan {
    pub decisions: Vec<DecisionRecord>,
    pub reasoning: String,
    pub code: String,
    pub kind: PlanKind,
    pub approach: Approach,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub categories: Vec<String>,
    pub arities: Vec<usize>,
    pub feature_len: usize,
    pub seed_lineage: Vec<String>,
}

/// Flat weight vector, one `arity × feature_len` block per category.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
    pub seed_lineage: Vec<String>,
}

fn block_offset(cat: Category) -> usize {
    Category::ALL
        .iter()
        .take_while(|c| **c != cat)
        .map(|c| c.arity())
        .sum::<usize>()
        * feature::LEN
}

pub fn param_dim() -> usize {
    Category::ALL.iter().map(|c| c.arity()).sum::<usize>() * feature::LEN
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams::zeros()
    }
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams {
            theta: vec![0.0; param_dim()],
            seed_lineage: Vec::new(),
        }
    }

    pub fn index(cat: Category, choice: usize, feature: usize) -> usize {
        debug_assert!(choice < cat.arity() && feature < feature::LEN);
        block_offset(cat) + choice * feature::LEN + feature
    }

    pub fn weight(&self, cat: Category, choice: usize, feature: usize) -> f64 {
        self.theta[Self::index(cat, choice, feature)]
    }

    pub fn set_weight(&mut self, cat: Category, choice: usize, feature: usize, value: f64) {
        self.theta[Self::index(cat, choice, feature)] = value;
    }

    /// Builder form of `set_weight` for fixtures.
    pub fn with_weight(mut self, cat: Category, choice: usize, feature: usize, value: f64) -> Self {
        self.set_weight(cat, choice, feature, value);
        self
    }

    pub fn logits(&self, cat: Category, features: &ContextFeatures) -> Vec<f64> {
        let base = block_offset(cat);
        let f = features.as_slice();
        (0..cat.arity())
            .map(|c| {
                let row = &self.theta[base + c * feature::LEN..base + (c + 1) * feature::LEN];
                row.iter().zip(f).map(|(w, x)| w * x).sum()
            })
            .collect()
    }

    pub fn probabilities(&self, cat: Category, features: &ContextFeatures) -> Vec<f64> {
        softmax(&self.logits(cat, features))
    }

    pub fn log_prob(&self, cat: Category, choice: usize, features: &ContextFeatures) -> f64 {
        log_softmax(&self.logits(cat, features))[choice]
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != param_dim() {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, expected {}",
                self.theta.len(),
                param_dim()
            )));
        }
        if let Some(i) = self.theta.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("theta[{i}] = {}", self.theta[i])));
        }
        Ok(())
    }

    pub fn header(&self) -> ParamsHeader {
        ParamsHeader {
            categories: Category::ALL.iter().map(|c| c.name().to_string()).collect(),
            arities: Category::ALL.iter().map(|c| c.arity()).collect(),
            feature_len: feature::LEN,
            seed_lineage: self.seed_lineage.clone(),
        }
    }

    /// Two lines: a JSON header, then the flat weight array.
    pub fn to_text(&self) -> String {
        format!(
            "{}\n{}\n",
            serde_json::to_string(&self.header()).expect("header serializes"),
            serde_json::to_string(&self.theta).expect("theta serializes")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ParamsHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Config("params file is empty".into()))?,
        )?;
        let expected = PolicyParams::zeros().header();
        if header.categories != expected.categories
            || header.arities != expected.arities
            || header.feature_len != expected.feature_len
        {
            return Err(Error::Config(format!(
                "params shape {:?}/{:?}/{} does not match this policy ({:?}/{:?}/{})",
                header.categories,
                header.arities,
                header.feature_len,
                expected.categories,
                expected.arities,
                expected.feature_len
            )));
        }
        let theta: Vec<f64> = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Config("params file lacks the weight line".into()))?,
        )?;
        let params = PolicyParams {
            theta,
            seed_lineage: header.seed_lineage,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    // Clamp tiny positive rounding so log-probs stay <= 0.
    logits.iter().map(|l| (l - lse).min(0.0)).collect()
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draw one decision of `cat` under `features`.
pub fn sample_decision<R: Rng + ?Sized>(
    cat: Category,
    features: &ContextFeatures,
    params: &PolicyParams,
    rng: &mut R,
) -> DecisionRecord {
    let logits = params.logits(cat, features);
    let choice = sample_index(&softmax(&logits), rng);
    DecisionRecord {
        category_id: cat.id(),
        choice: choice as u8,
        behavior_logprob: log_softmax(&logits)[choice],
    }
}

fn render_reasoning(kind: PlanKind, approach: Approach, last_error: Option<ErrorKind>) -> String {
    match (kind, last_error) {
        (PlanKind::LocalEdit, Some(err)) => format!(
            "The previous run failed with {err}; keep {} and fix the offending token.",
            approach.describe()
        ),
        (_, Some(err)) => format!(
            "The previous run failed with {err}; start over using {}.",
            approach.describe()
        ),
        _ => format!("Compute the answer using {}.", approach.describe()),
    }
}

/// Sample `(reasoning, code)` for the next turn.
///
/// LOCAL EDIT is offered only when the last observation failed and its code
/// is a recognizable template; it keeps that template's approach and redraws
/// the fault.
pub fn sample_action<R: Rng + ?Sized>(
    features: &ContextFeatures,
    params: &PolicyParams,
    library: &TemplateLibrary,
    rng: &mut R,
) -> ActionPlan {
    let mut decisions = Vec::with_capacity(3);
    let last_error = features.last_error();
    let mut kind = PlanKind::Fresh;
    let mut approach = None;
    if let (Some(_), Some(prev)) = (last_error, features.last_approach()) {
        let mode = sample_decision(Category::Mode, features, params, rng);
        decisions.push(mode);
        if mode.choice == MODE_LOCAL_EDIT {
            kind = PlanKind::LocalEdit;
            approach = Some(prev);
        }
    }
    let approach = approach.unwrap_or_else(|| {
        let d = sample_decision(Category::Approach, features, params, rng);
        decisions.push(d);
        Approach::from_index(d.choice as usize)
    });
    let fault_decision = sample_decision(Category::Fault, features, params, rng);
    decisions.push(fault_decision);
    let fault = Fault::from_index(fault_decision.choice as usize);
    ActionPlan {
        reasoning: render_reasoning(kind, approach, last_error),
        code: library.render(approach, fault).to_string(),
        decisions,
        kind,
        approach,
        fault,
    }
}

fn check_decision(d: &DecisionRecord) -> Result<Category> {
    let cat = d
        .category()
        .ok_or_else(|| Error::contract(format!("unknown category id {}", d.category_id)))?;
    if d.choice as usize >= cat.arity() {
        return Err(Error::contract(format!(
            "choice {} out of arity {} for category {}",
            d.choice,
            cat.arity(),
            cat.name()
        )));
    }
    Ok(cat)
}

/// `Σ log softmax(W_cat · features)[choice]` over the decisions.
pub fn action_logprob(
    features: &ContextFeatures,
    decisions: &[DecisionRecord],
    params: &PolicyParams,
) -> Result<f64> {
    decisions.iter().try_fold(0.0, |acc, d| {
        let cat = check_decision(d)?;
        Ok(acc + params.log_prob(cat, d.choice as usize, features))
    })
}

/// Adds `scale · ∇θ action_logprob` into `out`.
pub fn accumulate_grad(
    features: &ContextFeatures,
    decisions: &[DecisionRecord],
    params: &PolicyParams,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    let f = features.as_slice();
    for d in decisions {
        let cat = check_decision(d)?;
        let probs = params.probabilities(cat, features);
        let base = block_offset(cat);
        for (c, p) in probs.iter().enumerate() {
            let coeff = scale * (f64::from(u8::from(c == d.choice as usize)) - p);
            if coeff == 0.0 {
                continue;
            }
            let row = &mut out[base + c * feature::LEN..base + (c + 1) * feature::LEN];
            for (w, x) in row.iter_mut().zip(f) {
                *w += coeff * x;
            }
        }
    }
    Ok(())
}

pub fn grad_action_logprob(
    features: &ContextFeatures,
    decisions: &[DecisionRecord],
    params: &PolicyParams,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; param_dim()];
    accumulate_grad(features, decisions, params, 1.0, &mut g)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskFamily;
    use crate::trajectory::{fixtures, Provenance, Turn};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task() -> Task {
        Task::new(TaskFamily::Division, 73, 1, 4)
    }

    fn decision(cat: Category, choice: u8) -> DecisionRecord {
        DecisionRecord {
            category_id: cat.id(),
            choice,
            behavior_logprob: 0.0,
        }
    }

    fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> PolicyParams {
        let mut p = PolicyParams::zeros();
        for w in &mut p.theta {
            *w = rng.gen_range(-scale..scale);
        }
        p
    }

    fn random_features(rng: &mut ChaCha8Rng) -> ContextFeatures {
        ContextFeatures(
            (0..feature::LEN)
                .map(|i| if i == feature::PRIOR_FAILURES { rng.gen_range(0..5) as f64 } else { f64::from(rng.gen_range(0..2)) })
                .collect(),
        )
    }

    #[test]
    fn empty_history_features() {
        let f = featurize(&History::new(), &task());
        assert_eq!(f.prior_failures(), 0.0);
        assert_eq!(f.last_error(), None);
        assert_eq!(f.last_approach(), None);
        assert_eq!(f.0[feature::BIAS], 1.0);
        assert_eq!(f.0[feature::FAMILY + 2], 1.0);
        assert_eq!(f.0[feature::TURN], 1.0);
        assert_eq!(f.0.len(), feature::LEN);
    }

    #[test]
    fn failure_history_features() {
        let t = task();
        let lib = TemplateLibrary::new(&t);
        let code = lib.render(Approach::Stepwise, Fault::Typo).to_string();
        let failed = Turn {
            reasoning: "r".into(),
            code: code.clone(),
            observation: crate::minilang::run(&code, Default::default()),
            decisions: vec![decision(Category::Fault, 1)],
            provenance: Provenance::Natural,
        };
        let h = History::new().concat(failed);
        let f = featurize(&h, &t);
        assert_eq!(f.prior_failures(), 1.0);
        assert_eq!(f.last_error(), Some(ErrorKind::Parse));
        assert_eq!(f.last_approach(), Some(Approach::Stepwise));
        assert_eq!(f.0[feature::TURN + 1], 1.0);
        assert_eq!(f.0[feature::LAST_SUCCESS], 0.0);
    }

    #[test]
    fn purified_history_has_no_failure_count() {
        // The purified prefix holds only the replacement success, so the
        // lookahead's failure never reaches the features.
        let t = task();
        let ok = fixtures::ok(&TemplateLibrary::new(&t).render(Approach::Direct, Fault::None).to_string(), t.target);
        let mut purified = ok.clone();
        purified.provenance = Provenance::PurifiedShallow;
        let f = featurize(&History::new().concat(purified), &t);
        assert_eq!(f.prior_failures(), 0.0);
        assert_eq!(f.last_error(), None);
        assert_eq!(f.0[feature::LAST_SUCCESS], 1.0);
        assert_eq!(f.last_approach(), Some(Approach::Direct));
    }

    #[test]
    fn uniform_sampling_at_zero_theta() {
        let params = PolicyParams::zeros();
        let f = featurize(&History::new(), &task());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_decision(Category::Fault, &f, &params, &mut rng).choice as usize] += 1;
        }
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn dominant_logit_is_almost_always_sampled() {
        let params = PolicyParams::zeros().with_weight(Category::Approach, 1, feature::BIAS, 20.0);
        let f = featurize(&History::new(), &task());
        assert!(params.probabilities(Category::Approach, &f)[1] > 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..10_000)
            .filter(|_| sample_decision(Category::Approach, &f, &params, &mut rng).choice == 1)
            .count();
        assert!(hits >= 9_990);
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let params = random_params(&mut rng, 1.0);
        let t = task();
        let lib = TemplateLibrary::new(&t);
        let f = featurize(&History::new(), &t);
        let a = sample_action(&f, &params, &lib, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_action(&f, &params, &lib, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn local_edit_only_after_failure() {
        let t = task();
        let lib = TemplateLibrary::new(&t);
        let params = PolicyParams::zeros().with_weight(Category::Mode, MODE_LOCAL_EDIT as usize, feature::BIAS, 30.0);
        let clean = featurize(&History::new(), &t);
        let plan = sample_action(&clean, &params, &lib, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(plan.kind, PlanKind::Fresh);
        assert!(plan.decisions.iter().all(|d| d.category_id != Category::Mode.id()));

        let code = lib.render(Approach::Stepwise, Fault::UndefinedName).to_string();
        let failed = Turn {
            reasoning: "r".into(),
            observation: crate::minilang::run(&code, Default::default()),
            code,
            decisions: vec![decision(Category::Fault, 2)],
            provenance: Provenance::Natural,
        };
        let f = featurize(&History::new().concat(failed), &t);
        let plan = sample_action(&f, &params, &lib, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(plan.kind, PlanKind::LocalEdit);
        assert_eq!(plan.approach, Approach::Stepwise);
        assert_eq!(plan.decisions[0].category_id, Category::Mode.id());
        assert!(plan.decisions.iter().all(|d| d.category_id != Category::Approach.id()));
    }

    #[test]
    fn plan_logprob_matches_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = random_params(&mut rng, 2.0);
        let t = task();
        let lib = TemplateLibrary::new(&t);
        let f = featurize(&History::new(), &t);
        let plan = sample_action(&f, &params, &lib, &mut rng);
        let recorded: f64 = plan.decisions.iter().map(|d| d.behavior_logprob).sum();
        assert_eq!(action_logprob(&f, &plan.decisions, &params).unwrap(), recorded);
    }

    #[test]
    fn logprob_examples() {
        let f = featurize(&History::new(), &task());
        let p = PolicyParams::zeros();
        let one = action_logprob(&f, &[decision(Category::Stop, 1)], &p).unwrap();
        assert!((one - 0.5f64.ln()).abs() < 1e-15);
        let two = action_logprob(&f, &[decision(Category::Stop, 1), decision(Category::Mode, 0)], &p).unwrap();
        assert!((two - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!(action_logprob(&f, &[decision(Category::Stop, 2)], &p).is_err());
        assert!(action_logprob(&f, &[decision(Category::Fault, 4)], &p).is_err());
    }

    #[test]
    fn logprob_is_product_of_softmax_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let params = random_params(&mut rng, 3.0);
            let f = random_features(&mut rng);
            let ds = [decision(Category::Approach, rng.gen_range(0..3)), decision(Category::Fault, rng.gen_range(0..4))];
            let mut product = 1.0;
            for d in &ds {
                let cat = d.category().unwrap();
                // explicit softmax from the raw weights
                let logits: Vec<f64> = (0..cat.arity())
                    .map(|c| (0..feature::LEN).map(|k| params.weight(cat, c, k) * f.0[k]).sum())
                    .collect();
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                product *= logits[d.choice as usize].exp() / z;
            }
            let lp = action_logprob(&f, &ds, &params).unwrap();
            assert!((lp.exp() - product).abs() < 1e-12 * product.max(1e-300).max(1.0));
        }
    }

    #[test]
    fn hand_computed_gradient() {
        // features = [1, 0, ...]; binary STOP at theta = 0: d/dw_chosen = +0.5, other -0.5
        let mut f = vec![0.0; feature::LEN];
        f[feature::BIAS] = 1.0;
        let f = ContextFeatures(f);
        let g = grad_action_logprob(&f, &[decision(Category::Stop, 1)], &PolicyParams::zeros()).unwrap();
        assert_eq!(g[PolicyParams::index(Category::Stop, 1, feature::BIAS)], 0.5);
        assert_eq!(g[PolicyParams::index(Category::Stop, 0, feature::BIAS)], -0.5);
        let nonzero = g.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn zero_features_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&mut rng, 1.0);
        let f = ContextFeatures(vec![0.0; feature::LEN]);
        let g = grad_action_logprob(&f, &[decision(Category::Fault, 3), decision(Category::Mode, 1)], &params).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn params_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut p = random_params(&mut rng, 5.0);
        p.seed_lineage = vec!["seed=3".into(), "step=10".into()];
        let back = PolicyParams::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        let header_only = p.to_text().lines().next().unwrap().to_string();
        assert!(PolicyParams::from_text(&header_only).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_normalize(seed in any::<u64>(), scale in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, scale.max(1e-9));
            let f = random_features(&mut rng);
            for cat in Category::ALL {
                let s: f64 = params.probabilities(cat, &f).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn same_features_same_distribution(seed in any::<u64>()) {
            // conditioning goes only through the feature vector
            let t = task();
            let lib = TemplateLibrary::new(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, 2.0);
            let h1 = History::new().concat(fixtures::ok("1", 1));
            let h2 = History::new().concat(fixtures::ok("2", 2));
            let (f1, f2) = (featurize(&h1, &t), featurize(&h2, &t));
            prop_assert_eq!(&f1, &f2);
            let a = sample_action(&f1, &params, &lib, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = sample_action(&f2, &params, &lib, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }
    }
}
