//! Label-imprecision noise models.
//!
//! Each model degrades a precise leaf label into one of its ancestors. The
//! depth-based models sample an absolute target depth measured from the root
//! and clamp it to the leaf's own depth. Labels never move to another branch.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::seed::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Labels stay precise.
    NoNoise,
    /// Relabel to the parent with probability `p`.
    ParentRelabel { p: f64 },
    /// Target depth `d` with probability `q (1 - q)^d`.
    GeometricDepth { q: f64 },
    /// Target depth drawn from Poisson(`lambda`).
    PoissonDepth { lambda: f64 },
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::NoNoise => "none",
            NoiseModel::ParentRelabel { .. } => "parent",
            NoiseModel::GeometricDepth { .. } => "geometric",
            NoiseModel::PoissonDepth { .. } => "poisson",
        }
    }

    pub fn params(&self) -> String {
        match self {
            NoiseModel::NoNoise => String::new(),
            NoiseModel::ParentRelabel { p } => format!("p={p}"),
            NoiseModel::GeometricDepth { q } => format!("q={q}"),
            NoiseModel::PoissonDepth { lambda } => format!("lambda={lambda}"),
        }
    }

    /// Short label combining kind and parameter, e.g. `geometric(q=0.5)`.
    pub fn label(&self) -> String {
        match self {
            NoiseModel::NoNoise => "none".to_owned(),
            other => format!("{}({})", other.name(), other.params()),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        match *self {
            NoiseModel::NoNoise => vec![],
            NoiseModel::ParentRelabel { p } if !(0.0..=1.0).contains(&p) => {
                vec![format!("p = {p} is outside [0, 1]")]
            }
            NoiseModel::GeometricDepth { q } if !(0.0..=1.0).contains(&q) => {
                vec![format!("q = {q} is outside [0, 1]")]
            }
            NoiseModel::PoissonDepth { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                vec![format!("lambda = {lambda} must be positive")]
            }
            _ => vec![],
        }
    }
}

/// A noise model and the seed of its per-example streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelConfig {
    #[serde(flatten)]
    pub model: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModelConfig {
    pub fn new(model: NoiseModel, seed: u64) -> Self {
        Self { model, seed }
    }

    /// The four degrading models used in the extrapolation study:
    /// parent relabeling (p = 0.99), geometric (q = 0.5), Poisson (λ = 1) and Poisson (λ = 2).
    pub fn study_models(seed: u64) -> Vec<Self> {
        [
            NoiseModel::ParentRelabel { p: 0.99 },
            NoiseModel::GeometricDepth { q: 0.5 },
            NoiseModel::PoissonDepth { lambda: 1.0 },
            NoiseModel::PoissonDepth { lambda: 2.0 },
        ]
        .into_iter()
        .map(|m| Self::new(m, seed))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.model.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Samples the absolute target depth for one example.
fn sample_depth<R: Rng>(model: &NoiseModel, rng: &mut R) -> Option<u64> {
    match *model {
        NoiseModel::GeometricDepth { q } if q == 0.0 => None,
        NoiseModel::GeometricDepth { q } => {
            Some(Geometric::new(q).expect("q validated").sample(rng))
        }
        NoiseModel::PoissonDepth { lambda } => {
            let d: f64 = Poisson::new(lambda).expect("lambda validated").sample(rng);
            Some(d as u64)
        }
        _ => unreachable!("only depth models sample depths"),
    }
}

/// Degrades one precise label; deterministic per `(cfg.seed, example_key)`.
pub fn corrupt_label(
    h: &ClassHierarchy,
    precise: NodeId,
    cfg: &NoiseModelConfig,
    example_key: u64,
) -> Result<NodeId> {
    if !h.is_leaf(precise) {
        return Err(Error::NotALeaf(h.name(precise).to_owned()));
    }
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Noise, example_key);
    Ok(match cfg.model {
        NoiseModel::NoNoise => precise,
        NoiseModel::ParentRelabel { p } => {
            if rng.random_bool(p) {
                h.parent(precise).unwrap_or(precise)
            } else {
                precise
            }
        }
        ref depth_model => match sample_depth(depth_model, &mut rng) {
            None => precise,
            Some(d) => h.ancestor_at_depth(precise, usize::try_from(d).unwrap_or(usize::MAX)),
        },
    })
}

/// Element-wise [`corrupt_label`], preserving order.
pub fn corrupt_dataset(
    h: &ClassHierarchy,
    labels: &[(u64, NodeId)],
    cfg: &NoiseModelConfig,
) -> Result<Vec<(u64, NodeId)>> {
    labels
        .iter()
        .map(|&(key, leaf)| corrupt_label(h, leaf, cfg, key).map(|noisy| (key, noisy)))
        .collect()
}

/// Fraction of labels that are leaves; zero for an empty list.
pub fn precise_fraction<'a, I>(h: &ClassHierarchy, labels: I) -> f64
where
    I: IntoIterator<Item = &'a NodeId>,
{
    let (mut leaves, mut total) = (0usize, 0usize);
    for &n in labels {
        total += 1;
        leaves += usize::from(h.is_leaf(n));
    }
    if total == 0 {
        0.0
    } else {
        leaves as f64 / total as f64
    }
}
