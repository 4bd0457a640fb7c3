//! Desk-scale experiments.
//!
//! A [`SyntheticOracle`](oracle::SyntheticOracle) stands in for a trained
//! hierarchical classifier in the one-shot extrapolation study, and a
//! [`ReferenceLearner`](learner::ReferenceLearner) gives the self-training
//! loop something trainable whose pseudo-label feedback can be observed.

pub mod learner;
pub mod oracle;
pub mod self_training;
pub mod study;
pub mod taxonomy;

pub use learner::ReferenceLearner;
pub use oracle::SyntheticOracle;
pub use self_training::{
    run_self_training_loop, LoopConfig, LoopOutcome, Refresh, SyntheticTask, TaskSpec,
};
pub use study::{run_extrapolation_study, Method, StudyExample, StudyPlan};

/// Mean and sample standard deviation; the deviation is zero for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
