use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::propagation::{ScoreMap, ScoreRole};
use crate::seed::{stream_rng, Stream};

/// Conditional-score generator standing in for a trained classifier.
///
/// Nodes on the true root-to-leaf path score `fidelity + (1 - fidelity) u`,
/// all other nodes `(1 - fidelity) u`, where `u = U^(1 / temperature)` for a
/// uniform draw `U`. Higher temperatures push `u` towards one and smear more
/// mass onto wrong branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub fidelity: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl SyntheticOracle {
    pub fn new(fidelity: f64, temperature: f64, seed: u64) -> Result<Self> {
        let oracle = Self {
            fidelity,
            temperature,
            seed,
        };
        let problems = oracle.problems();
        if problems.is_empty() {
            Ok(oracle)
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.fidelity) {
            out.push(format!("fidelity = {} is outside [0, 1]", self.fidelity));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            out.push(format!(
                "temperature = {} must be positive",
                self.temperature
            ));
        }
        out
    }

    /// Conditional scores for one example whose true class is `truth`.
    pub fn scores(&self, h: &ClassHierarchy, truth: NodeId, example_key: u64) -> Result<ScoreMap> {
        if !h.is_leaf(truth) {
            return Err(Error::NotALeaf(h.name(truth).to_owned()));
        }
        let mut on_path = vec![false; h.len()];
        for a in h.ancestors(truth) {
            on_path[a.index()] = true;
        }
        let mut rng = stream_rng(self.seed, Stream::Oracle, example_key);
        let spread = 1.0 - self.fidelity;
        let values = h
            .nodes()
            .map(|n| {
                let u = rng.random::<f64>().powf(1.0 / self.temperature);
                if n == h.root() {
                    1.0
                } else if on_path[n.index()] {
                    self.fidelity + spread * u
                } else {
                    spread * u
                }
            })
            .collect();
        ScoreMap::new(h, ScoreRole::Conditional, values)
    }
}
