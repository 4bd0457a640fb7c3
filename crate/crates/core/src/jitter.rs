//! Intentionally unstable ordering of scored candidates.
//!
//! Untrained hierarchical classifiers emit many probabilities of exactly 0.5.
//! A plain stable sort would then resolve ties by memory layout, so a small
//! gaussian perturbation is added before sorting. Each candidate's noise is
//! drawn in input order from a stream seeded by the caller.

use rand_distr::{Distribution, StandardNormal};

use crate::hierarchy::NodeId;
use crate::seed::{stream_rng, Stream};

/// Standard deviation of the sorting noise.
pub const DEFAULT_JITTER_SIGMA: f64 = 1e-4;

/// Noise parameters for one ordering decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub sigma: f64,
    pub seed: u64,
}

impl Jitter {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { sigma, seed }
    }

    /// No noise: ties fall back to ascending node id.
    pub fn stable() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }

    fn perturbed(&self, values: &[(NodeId, f64)]) -> Vec<(NodeId, f64)> {
        if self.sigma == 0.0 {
            return values.to_vec();
        }
        let mut rng = stream_rng(self.seed, Stream::Jitter, 0);
        values
            .iter()
            .map(|&(n, v)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (n, v + self.sigma * z)
            })
            .collect()
    }
}

fn descending(a: &(NodeId, f64), b: &(NodeId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Sorts candidates by descending perturbed value.
pub fn jittered_sort(values: &[(NodeId, f64)], jitter: Jitter) -> Vec<NodeId> {
    let mut noisy = jitter.perturbed(values);
    noisy.sort_by(descending);
    noisy.into_iter().map(|(n, _)| n).collect()
}

/// First element of [`jittered_sort`] without sorting everything.
pub fn jittered_argmax(values: &[(NodeId, f64)], jitter: Jitter) -> Option<NodeId> {
    jitter
        .perturbed(values)
        .into_iter()
        .min_by(descending)
        .map(|(n, _)| n)
}
