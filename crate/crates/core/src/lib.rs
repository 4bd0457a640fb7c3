//! Learning from semantically imprecise labels.
//!
//! Training labels may name any node of a class hierarchy ("bird") while
//! predictions must be leaves ("snow bunting"). This crate provides the
//! pieces needed to turn imprecise labels into more precise pseudo-labels:
//!
//! * [`hierarchy`]: taxonomy loading, structural queries, information content.
//! * [`propagation`]: conditional to unconditional scores, label clamping.
//! * [`extrapolation`]: the five pseudo-label selection strategies.
//! * [`noise`]: models that degrade precise labels into ancestors.
//! * [`metrics`]: hierarchical precision/recall/F1 and accuracy.
//! * [`harness`]: a synthetic score oracle, a counting learner, the
//!   one-shot extrapolation study and the self-training loop.

pub mod error;
pub mod extrapolation;
pub mod harness;
pub mod hierarchy;
pub mod jitter;
pub mod labels;
pub mod metrics;
pub mod noise;
pub mod propagation;
pub mod seed;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use extrapolation::{AdaptiveState, Extrapolator, Strategy, StrategyConfig};
pub use hierarchy::{ClassHierarchy, NodeId};
pub use metrics::EvaluationReport;
pub use noise::{NoiseModel, NoiseModelConfig};
pub use propagation::{ScoreMap, ScoreRole};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    mod hierarchy {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/extrapolation.md")]
    mod extrapolation {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
