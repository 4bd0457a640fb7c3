//! Pseudo-label extrapolation strategies.
//!
//! Every strategy starts from the candidate set `{source} ∪ descendants(source)`
//! and an unconditional score map that has already been clamped to the
//! source, excludes some candidates and picks one. The chosen target is
//! always subsumed by the source, and when nothing survives the filters the
//! source itself is returned.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::jitter::{jittered_argmax, jittered_sort, Jitter, DEFAULT_JITTER_SIGMA};
use crate::propagation::{ScoreMap, ScoreRole};
use crate::seed::{derive_seed, Stream};

/// Lower bound and initial value of the adaptive threshold.
pub const ADAPTIVE_THETA_MIN: f64 = 0.55;
/// Upper bound of the adaptive threshold.
pub const ADAPTIVE_THETA_MAX: f64 = 1.0;
/// Number of recent IC gains averaged by the adaptive threshold.
pub const GAIN_WINDOW: usize = 64;
/// Probability threshold applied after IC-range preselection.
pub const IC_RANGE_THRESHOLD: f64 = 0.55;

/// Which extrapolation rule to apply, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Most probable leaf below the source.
    LeafNode,
    /// Nodes exactly `k` levels below the source, or shallower leaves.
    KStepsDown {
        k: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confidence_floor: Option<f64>,
    },
    /// Deepest-IC node whose probability reaches `threshold`.
    FixedThreshold { threshold: f64 },
    /// Fixed-threshold selection with a threshold steered towards `target_gain`.
    AdaptiveThreshold { target_gain: f64 },
    /// Fixed-threshold selection at 0.55 among candidates whose IC gain lies in `[lo, hi]`.
    IcRange { lo: f64, hi: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::LeafNode => "leaf",
            Strategy::KStepsDown { .. } => "ksteps",
            Strategy::FixedThreshold { .. } => "threshold",
            Strategy::AdaptiveThreshold { .. } => "adaptive",
            Strategy::IcRange { .. } => "icrange",
        }
    }

    /// Parameters as a short `key=value` string.
    pub fn params(&self) -> String {
        match self {
            Strategy::LeafNode => String::new(),
            Strategy::KStepsDown {
                k,
                confidence_floor: None,
            } => format!("k={k}"),
            Strategy::KStepsDown {
                k,
                confidence_floor: Some(f),
            } => format!("k={k};floor={f}"),
            Strategy::FixedThreshold { threshold } => format!("threshold={threshold}"),
            Strategy::AdaptiveThreshold { target_gain } => format!("target_gain={target_gain}"),
            Strategy::IcRange { lo, hi } => format!("ic=[{lo},{hi}]"),
        }
    }

    /// Every problem with the parameters, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let unit = |name: &str, v: f64| {
            (!(0.0..=1.0).contains(&v)).then(|| format!("{name} = {v} is outside [0, 1]"))
        };
        let mut out = Vec::new();
        match *self {
            Strategy::LeafNode => {}
            Strategy::KStepsDown {
                k,
                confidence_floor,
            } => {
                if k == 0 {
                    out.push("k must be at least 1".to_owned());
                }
                out.extend(confidence_floor.and_then(|f| unit("confidence_floor", f)));
            }
            Strategy::FixedThreshold { threshold } => out.extend(unit("threshold", threshold)),
            Strategy::AdaptiveThreshold { target_gain } => {
                if !target_gain.is_finite() {
                    out.push("target_gain must be finite".to_owned());
                }
            }
            Strategy::IcRange { lo, hi } => {
                if !(lo <= hi) {
                    out.push(format!("ic interval [{lo}, {hi}] is empty"));
                }
            }
        }
        out
    }

    /// True when the strategy always returns a leaf.
    pub fn yields_leaves(&self) -> bool {
        matches!(self, Strategy::LeafNode)
    }
}

fn default_sigma() -> f64 {
    DEFAULT_JITTER_SIGMA
}

/// A strategy together with its sorting-noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default = "default_sigma")]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            jitter_sigma: DEFAULT_JITTER_SIGMA,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.strategy.problems();
        if !(self.jitter_sigma >= 0.0) {
            out.push(format!(
                "jitter_sigma = {} must be non-negative",
                self.jitter_sigma
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Sorting noise for one example; depends only on the global seed and the example key.
    pub fn jitter_for(&self, example_key: u64) -> Jitter {
        Jitter::new(
            self.jitter_sigma,
            derive_seed(self.seed, Stream::Jitter, example_key),
        )
    }
}

/// `{source} ∪ descendants(source)` in id order.
pub fn candidate_set(h: &ClassHierarchy, source: NodeId) -> Vec<NodeId> {
    h.subtree(source)
}

fn scored(nodes: impl IntoIterator<Item = NodeId>, uncond: &ScoreMap) -> Vec<(NodeId, f64)> {
    nodes.into_iter().map(|n| (n, uncond.get(n))).collect()
}

/// Most probable leaf below `source`.
pub fn extrapolate_leaf(
    h: &ClassHierarchy,
    source: NodeId,
    uncond: &ScoreMap,
    jitter: Jitter,
) -> NodeId {
    jittered_argmax(&scored(h.leaves_under(source), uncond), jitter).unwrap_or(source)
}

/// Most probable node exactly `k` levels below `source`, where
/// leaves less than `k` levels below also qualify. Candidates under the
/// optional confidence floor are dropped.
pub fn extrapolate_k_steps(
    h: &ClassHierarchy,
    source: NodeId,
    uncond: &ScoreMap,
    k: u32,
    confidence_floor: Option<f64>,
    jitter: Jitter,
) -> NodeId {
    let target_depth = h.depth(source) + k as usize;
    let candidates = candidate_set(h, source).into_iter().filter(|&n| {
        let d = h.depth(n);
        (d == target_depth || (d < target_depth && h.is_leaf(n)))
            && confidence_floor.is_none_or(|floor| uncond.get(n) >= floor)
    });
    jittered_argmax(&scored(candidates, uncond), jitter).unwrap_or(source)
}

/// Threshold filter, jittered probability sort, then stable IC sort.
fn select_by_threshold(
    h: &ClassHierarchy,
    source: NodeId,
    candidates: impl IntoIterator<Item = NodeId>,
    uncond: &ScoreMap,
    threshold: f64,
    jitter: Jitter,
) -> NodeId {
    let survivors = scored(
        candidates
            .into_iter()
            .filter(|&n| uncond.get(n) >= threshold),
        uncond,
    );
    let mut ordered = jittered_sort(&survivors, jitter);
    // sort_by is stable: equal IC keeps the probability order
    ordered.sort_by(|a, b| h.ic(*b).total_cmp(&h.ic(*a)));
    ordered.first().copied().unwrap_or(source)
}

/// Highest-IC candidate with probability at least `threshold`;
/// ties in IC go to the more probable candidate.
pub fn extrapolate_fixed_threshold(
    h: &ClassHierarchy,
    source: NodeId,
    uncond: &ScoreMap,
    threshold: f64,
    jitter: Jitter,
) -> NodeId {
    select_by_threshold(
        h,
        source,
        candidate_set(h, source),
        uncond,
        threshold,
        jitter,
    )
}

/// IC gained by moving a label from `source` to `target`.
pub fn ic_gain(h: &ClassHierarchy, source: NodeId, target: NodeId) -> Result<f64> {
    if !h.subsumes(source, target) {
        return Err(Error::NotSubsumed {
            source_node: h.name(source).to_owned(),
            target: h.name(target).to_owned(),
        });
    }
    Ok(h.ic(target) - h.ic(source))
}

/// Mutable threshold of the adaptive strategy and its window of recent IC gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    theta: f64,
    window: VecDeque<f64>,
}

impl Default for AdaptiveState {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptiveState {
    pub fn new() -> Self {
        Self {
            theta: ADAPTIVE_THETA_MIN,
            window: VecDeque::with_capacity(GAIN_WINDOW),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn window(&self) -> &VecDeque<f64> {
        &self.window
    }

    /// Moving average of the window; zero while it is empty.
    pub fn mean_gain(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    /// Records a realized gain, then moves the threshold by
    /// `mean_gain - target_gain` and clamps it to `[0.55, 1.0]`.
    pub fn observe(&mut self, gain: f64, target_gain: f64) {
        self.record(gain);
        self.update(target_gain);
    }

    /// Pushes a gain into the window without touching the threshold.
    pub fn record(&mut self, gain: f64) {
        if self.window.len() == GAIN_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(gain);
    }

    /// One threshold step from the current window.
    pub fn update(&mut self, target_gain: f64) {
        self.theta = (self.theta + self.mean_gain() - target_gain)
            .clamp(ADAPTIVE_THETA_MIN, ADAPTIVE_THETA_MAX);
    }
}

/// Fixed-threshold selection at the current adaptive
/// threshold, followed by a threshold update from the realized gain.
pub fn extrapolate_adaptive(
    h: &ClassHierarchy,
    source: NodeId,
    uncond: &ScoreMap,
    target_gain: f64,
    state: &mut AdaptiveState,
    jitter: Jitter,
) -> NodeId {
    let target = extrapolate_fixed_threshold(h, source, uncond, state.theta, jitter);
    let gain = h.ic(target) - h.ic(source);
    state.observe(gain, target_gain);
    target
}

/// Preselect candidates whose IC gain lies in `[lo, hi]`, then
/// apply fixed-threshold selection at 0.55.
pub fn extrapolate_ic_range(
    h: &ClassHierarchy,
    source: NodeId,
    uncond: &ScoreMap,
    lo: f64,
    hi: f64,
    jitter: Jitter,
) -> NodeId {
    let base = h.ic(source);
    let preselected = candidate_set(h, source).into_iter().filter(|&n| {
        let gain = h.ic(n) - base;
        lo <= gain && gain <= hi
    });
    select_by_threshold(h, source, preselected, uncond, IC_RANGE_THRESHOLD, jitter)
}

/// Applies one configured strategy, owning the adaptive state when needed.
#[derive(Debug, Clone)]
pub struct Extrapolator {
    config: StrategyConfig,
    state: Option<AdaptiveState>,
    batched: bool,
}

impl Extrapolator {
    pub fn new(config: StrategyConfig) -> Result<Self> {
        config.validate()?;
        let state =
            matches!(config.strategy, Strategy::AdaptiveThreshold { .. }).then(AdaptiveState::new);
        Ok(Self {
            config,
            state,
            batched: false,
        })
    }

    /// Makes one adaptive time step span a whole minibatch: gains are only
    /// recorded by [`extrapolate`](Self::extrapolate) and the threshold moves
    /// once per [`finish_batch`](Self::finish_batch).
    pub fn batched(mut self) -> Self {
        self.batched = true;
        self
    }

    /// Ends a minibatch; a no-op unless batched and adaptive.
    pub fn finish_batch(&mut self) {
        if let (true, Some(state), Strategy::AdaptiveThreshold { target_gain }) =
            (self.batched, self.state.as_mut(), &self.config.strategy)
        {
            state.update(*target_gain);
        }
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&AdaptiveState> {
        self.state.as_ref()
    }

    /// Extrapolates `source` for the example identified by `example_key`.
    /// `uncond` must already be clamped to `source`.
    pub fn extrapolate(
        &mut self,
        h: &ClassHierarchy,
        source: NodeId,
        uncond: &ScoreMap,
        example_key: u64,
    ) -> Result<NodeId> {
        uncond.check_bound(h)?;
        if uncond.role() != ScoreRole::Unconditional {
            return Err(Error::WrongRole {
                expected: "unconditional",
            });
        }
        let jitter = self.config.jitter_for(example_key);
        let target = match self.config.strategy {
            Strategy::LeafNode => extrapolate_leaf(h, source, uncond, jitter),
            Strategy::KStepsDown {
                k,
                confidence_floor,
            } => extrapolate_k_steps(h, source, uncond, k, confidence_floor, jitter),
            Strategy::FixedThreshold { threshold } => {
                extrapolate_fixed_threshold(h, source, uncond, threshold, jitter)
            }
            Strategy::AdaptiveThreshold { target_gain } => {
                let state = self.state.as_mut().expect("adaptive strategy owns a state");
                if self.batched {
                    let target =
                        extrapolate_fixed_threshold(h, source, uncond, state.theta, jitter);
                    state.record(h.ic(target) - h.ic(source));
                    target
                } else {
                    extrapolate_adaptive(h, source, uncond, target_gain, state, jitter)
                }
            }
            Strategy::IcRange { lo, hi } => extrapolate_ic_range(h, source, uncond, lo, hi, jitter),
        };
        Ok(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::load_hierarchy;
    use crate::propagation::{clamp_to_source, propagate};

    fn uncond(h: &ClassHierarchy, pairs: &[(&str, f64)]) -> ScoreMap {
        let mut values = vec![0.0; h.len()];
        values[h.root().index()] = 1.0;
        for &(name, v) in pairs {
            values[h.lookup(name).unwrap().index()] = v;
        }
        ScoreMap::new(h, ScoreRole::Unconditional, values).unwrap()
    }

    fn id(h: &ClassHierarchy, name: &str) -> NodeId {
        h.lookup(name).unwrap()
    }

    fn binary7() -> ClassHierarchy {
        load_hierarchy("a r\nb r\na1 a\na2 a\nb1 b\nb2 b\n").unwrap()
    }

    const J: Jitter = Jitter {
        sigma: DEFAULT_JITTER_SIGMA,
        seed: 11,
    };

    #[test]
    fn candidate_sets() {
        let h = binary7();
        assert_eq!(candidate_set(&h, id(&h, "a1")), vec![id(&h, "a1")]);
        assert_eq!(candidate_set(&h, h.root()).len(), 7);
        let names: Vec<&str> = candidate_set(&h, id(&h, "a"))
            .iter()
            .map(|&n| h.name(n))
            .collect();
        assert_eq!(names, ["a", "a1", "a2"]);
    }

    #[test]
    fn leaf_node() {
        let h = load_hierarchy("a r\nb r\n").unwrap();
        let u = uncond(&h, &[("a", 0.6), ("b", 0.4)]);
        assert_eq!(extrapolate_leaf(&h, h.root(), &u, J), id(&h, "a"));
        assert_eq!(extrapolate_leaf(&h, id(&h, "b"), &u, J), id(&h, "b"));

        // candidates restricted to the source subtree
        let h = binary7();
        let u = uncond(&h, &[("a", 1.0), ("a1", 0.2), ("a2", 0.35), ("b1", 0.9)]);
        assert_eq!(extrapolate_leaf(&h, id(&h, "a"), &u, J), id(&h, "a2"));
    }

    #[test]
    fn k_steps_down() {
        let h = load_hierarchy("a r\na1 a\n").unwrap();
        let u = uncond(&h, &[("a", 0.3), ("a1", 0.2)]);
        assert_eq!(
            extrapolate_k_steps(&h, h.root(), &u, 1, None, J),
            id(&h, "a")
        );

        // a1 is two steps down, b is a leaf one step down
        let h = load_hierarchy("a r\nb r\na1 a\n").unwrap();
        let u = uncond(&h, &[("a", 0.9), ("a1", 0.7), ("b", 0.6)]);
        assert_eq!(
            extrapolate_k_steps(&h, h.root(), &u, 2, None, J),
            id(&h, "a1")
        );
        let u = uncond(&h, &[("a", 0.9), ("a1", 0.5), ("b", 0.6)]);
        assert_eq!(
            extrapolate_k_steps(&h, h.root(), &u, 2, None, J),
            id(&h, "b")
        );
        assert_eq!(
            extrapolate_k_steps(&h, h.root(), &u, 2, Some(0.9), J),
            h.root()
        );
    }

    #[test]
    fn fixed_threshold_prefers_ic() {
        let h = load_hierarchy("a r\nb r\na1 a\na2 a\n").unwrap();
        let u = uncond(&h, &[("a", 0.9), ("a1", 0.85), ("a2", 0.05), ("b", 0.2)]);
        assert!(h.ic(id(&h, "a1")) > h.ic(id(&h, "a")));
        assert_eq!(
            extrapolate_fixed_threshold(&h, h.root(), &u, 0.8, J),
            id(&h, "a1")
        );
        // nothing but the source reaches 0.95
        assert_eq!(
            extrapolate_fixed_threshold(&h, h.root(), &u, 0.95, J),
            h.root()
        );
    }

    #[test]
    fn fixed_threshold_equal_ic_uses_probability() {
        let h = load_hierarchy("a r\nb r\nc r\n").unwrap();
        let u = uncond(&h, &[("a", 0.2), ("b", 0.5), ("c", 0.3)]);
        assert_eq!(
            extrapolate_fixed_threshold(&h, h.root(), &u, 0.0, J),
            id(&h, "b")
        );
        assert_eq!(
            extrapolate_fixed_threshold(&h, h.root(), &u, 0.0, Jitter::stable()),
            id(&h, "b")
        );
    }

    #[test]
    fn ic_gains() {
        let h = binary7();
        let a = id(&h, "a");
        assert_eq!(ic_gain(&h, a, a).unwrap(), 0.0);
        assert_eq!(ic_gain(&h, h.root(), id(&h, "b2")).unwrap(), 1.0);
        assert!((ic_gain(&h, h.root(), a).unwrap() - 0.4354).abs() < 1e-4);
        assert!(matches!(
            ic_gain(&h, a, id(&h, "b1")),
            Err(Error::NotSubsumed { .. })
        ));
    }

    #[test]
    fn adaptive_update_rule() {
        let mut s = AdaptiveState::new();
        assert_eq!(s.theta(), 0.55);
        s.observe(0.10, 0.05);
        assert!((s.theta() - 0.60).abs() < 1e-12);

        let mut s = AdaptiveState {
            theta: 0.99,
            window: VecDeque::new(),
        };
        s.observe(0.5, 0.0);
        assert_eq!(s.theta(), 1.0);

        let mut s = AdaptiveState {
            theta: 0.7,
            window: VecDeque::new(),
        };
        for _ in 0..200 {
            s.observe(0.05, 0.05);
            assert!((s.theta() - 0.7).abs() < 1e-12);
        }
        assert_eq!(s.window().len(), GAIN_WINDOW);
    }

    #[test]
    fn adaptive_uses_current_theta_then_updates() {
        let h = load_hierarchy("a r\nb r\na1 a\na2 a\n").unwrap();
        let u = uncond(&h, &[("a", 0.9), ("a1", 0.6), ("a2", 0.05), ("b", 0.1)]);
        let mut s = AdaptiveState::new();
        // theta 0.55 lets a1 through
        let t = extrapolate_adaptive(&h, h.root(), &u, 0.0, &mut s, J);
        assert_eq!(t, id(&h, "a1"));
        assert_eq!(s.theta(), 1.0);
        // theta 1.0 only admits the source
        let t = extrapolate_adaptive(&h, h.root(), &u, 0.0, &mut s, J);
        assert_eq!(t, h.root());
    }

    #[test]
    fn ic_range() {
        let h = binary7();
        let a = id(&h, "a");
        let u = uncond(&h, &[("a", 0.9), ("a1", 0.8), ("a2", 0.1), ("b", 0.1)]);
        for seed in 0..20 {
            let j = Jitter::new(DEFAULT_JITTER_SIGMA, seed);
            assert_eq!(
                extrapolate_ic_range(&h, h.root(), &u, 0.0, 1.0, j),
                extrapolate_fixed_threshold(&h, h.root(), &u, 0.55, j)
            );
        }
        // within a's subtree the largest available gain is 1 - ic(a) ≈ 0.56
        let sub = u.clone();
        assert_eq!(extrapolate_ic_range(&h, a, &sub, 0.9, 1.0, J), a);
        let a1 = id(&h, "a1");
        assert_eq!(extrapolate_ic_range(&h, a1, &u, 0.0, 0.5, J), a1);
        assert_eq!(extrapolate_ic_range(&h, a1, &u, 0.1, 0.5, J), a1);
    }

    #[test]
    fn shallow_subtree_has_no_gain_in_high_range() {
        // 7-node binary tree, gains from a top-level inner node reach at most 1 - 0.4354
        let h = binary7();
        let a = id(&h, "a");
        let c = ScoreMap::constant(&h, ScoreRole::Conditional, 0.9).unwrap();
        let u = propagate(&h, &clamp_to_source(&h, &c, h.root()).unwrap()).unwrap();
        let max_gain = h
            .leaves_under(a)
            .iter()
            .map(|&l| ic_gain(&h, a, l).unwrap())
            .fold(0.0, f64::max);
        assert!(max_gain < 0.9);
        assert_eq!(extrapolate_ic_range(&h, a, &u, 0.9, 1.0, J), a);
    }

    #[test]
    fn config_validation_lists_every_problem() {
        let bad = StrategyConfig {
            strategy: Strategy::KStepsDown {
                k: 0,
                confidence_floor: Some(1.5),
            },
            jitter_sigma: -1.0,
            seed: 0,
        };
        assert_eq!(bad.problems().len(), 3);
        assert!(Extrapolator::new(bad).is_err());
        assert!(StrategyConfig::new(Strategy::IcRange { lo: 0.5, hi: 0.1 })
            .validate()
            .is_err());
    }

    #[test]
    fn config_json_shape() {
        let c = StrategyConfig::new(Strategy::FixedThreshold { threshold: 0.8 }).with_seed(3);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["kind"], "fixed_threshold");
        assert_eq!(json["threshold"], 0.8);
        let back: StrategyConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
        let minimal: StrategyConfig = serde_json::from_str(r#"{"kind":"leaf_node"}"#).unwrap();
        assert_eq!(minimal.jitter_sigma, DEFAULT_JITTER_SIGMA);
    }
}
