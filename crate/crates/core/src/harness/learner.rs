use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::propagation::{ScoreMap, ScoreRole};

/// Trainable conditional-score source built from Beta-smoothed Bernoulli counts.
///
/// Counts are kept per `(feature, node)`. An example's conditional for a node
/// pools the counts of all its features:
/// `(pos + alpha) / (pos + neg + 2 alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLearner {
    alpha: f64,
    n_features: usize,
    n_nodes: usize,
    hierarchy: u64,
    positive: Vec<u32>,
    negative: Vec<u32>,
}

/// Serializable learner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl ReferenceLearner {
    pub fn new(h: &ClassHierarchy, n_features: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "smoothing alpha = {alpha} must be positive"
            )));
        }
        Ok(Self {
            alpha,
            n_features,
            n_nodes: h.len(),
            hierarchy: h.fingerprint(),
            positive: vec![0; n_features * h.len()],
            negative: vec![0; n_features * h.len()],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn slot(&self, feature: u32, node: NodeId) -> usize {
        let f = feature as usize;
        assert!(f < self.n_features, "feature {f} out of range");
        f * self.n_nodes + node.index()
    }

    fn check(&self, h: &ClassHierarchy) -> Result<()> {
        if self.hierarchy != h.fingerprint() {
            return Err(Error::HierarchyMismatch);
        }
        Ok(())
    }

    /// Conditional scores for an example with the given features; the root scores one.
    pub fn conditional_scores(&self, h: &ClassHierarchy, features: &[u32]) -> Result<ScoreMap> {
        self.check(h)?;
        let values = h
            .nodes()
            .map(|n| {
                if n == h.root() {
                    return 1.0;
                }
                let (mut pos, mut neg) = (0u64, 0u64);
                for &f in features {
                    let s = self.slot(f, n);
                    pos += u64::from(self.positive[s]);
                    neg += u64::from(self.negative[s]);
                }
                (pos as f64 + self.alpha) / ((pos + neg) as f64 + 2.0 * self.alpha)
            })
            .collect();
        ScoreMap::new(h, ScoreRole::Conditional, values)
    }

    /// Trains on one label: every non-root node on its root path is a
    /// positive, every sibling of a path node is a negative. Nothing below the
    /// label is touched, so a root label changes nothing.
    pub fn update(&mut self, h: &ClassHierarchy, features: &[u32], label: NodeId) -> Result<()> {
        self.check(h)?;
        self.apply(h, features, label, |c| *c += 1);
        Ok(())
    }

    /// Undoes an earlier [`update`](Self::update) with the same arguments.
    pub fn retract(&mut self, h: &ClassHierarchy, features: &[u32], label: NodeId) -> Result<()> {
        self.check(h)?;
        let before = self.clone();
        let mut underflow = false;
        self.apply(h, features, label, |c| match c.checked_sub(1) {
            Some(v) => *c = v,
            None => underflow = true,
        });
        if underflow {
            *self = before;
            return Err(Error::InvalidConfig(format!(
                "retracting label {} that was never trained",
                h.name(label)
            )));
        }
        Ok(())
    }

    fn apply(
        &mut self,
        h: &ClassHierarchy,
        features: &[u32],
        label: NodeId,
        mut step: impl FnMut(&mut u32),
    ) {
        let path = h.ancestors(label);
        for window in path.windows(2) {
            let (parent, on_path) = (window[0], window[1]);
            for &f in features {
                let s = self.slot(f, on_path);
                step(&mut self.positive[s]);
                for &sibling in h.children(parent) {
                    if sibling != on_path {
                        let s = self.slot(f, sibling);
                        step(&mut self.negative[s]);
                    }
                }
            }
        }
    }
}
