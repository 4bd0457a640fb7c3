//! Self-training loop: the learner's own extrapolated predictions replace the
//! noisy labels as training targets, so pseudo-label errors can feed back
//! into later predictions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolation::{AdaptiveState, Extrapolator};
use crate::harness::learner::ReferenceLearner;
use crate::harness::study::Method;
use crate::harness::taxonomy::complete_binary;
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::metrics::{EvaluationReport, HierarchicalCounts};
use crate::noise::{corrupt_label, NoiseModelConfig};
use crate::propagation::{clamp_to_source, predict_leaf, propagate};
use crate::seed::{derive_seed, stream_rng, Stream};

/// An example with discrete features and its precise label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    pub key: u64,
    pub features: Vec<u32>,
    pub truth: NodeId,
}

/// Shape of a generated feature-counting task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Depth of the complete binary class tree.
    pub depth: usize,
    /// Size of each non-root node's private feature pool.
    pub features_per_node: usize,
    /// Probability that a path node contributes a feature from its own pool
    /// instead of from a sibling's.
    pub signal: f64,
    /// Features drawn for each non-root node on the true path.
    pub draws_per_node: usize,
    pub train: usize,
    pub validation: usize,
}

impl Default for TaskSpec {
    /// The built-in 15-node task.
    fn default() -> Self {
        Self {
            depth: 3,
            features_per_node: 16,
            signal: 0.9,
            draws_per_node: 3,
            train: 1600,
            validation: 400,
        }
    }
}

/// Generated hierarchy, feature space and train/validation examples.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub hierarchy: ClassHierarchy,
    pub n_features: usize,
    pub train: Vec<TaskExample>,
    pub validation: Vec<TaskExample>,
}

const VALIDATION_KEY_OFFSET: u64 = 1 << 40;

impl SyntheticTask {
    /// Each example carries one feature per non-root node on its true path.
    pub fn generate(spec: &TaskSpec, seed: u64) -> Result<Self> {
        if spec.depth == 0
            || spec.features_per_node == 0
            || spec.draws_per_node == 0
            || !(0.0..=1.0).contains(&spec.signal)
        {
            return Err(Error::InvalidConfig(
                "task needs depth >= 1, features_per_node >= 1, draws_per_node >= 1 and signal in [0, 1]".into(),
            ));
        }
        let h = complete_binary(spec.depth);
        let per = spec.features_per_node;
        // non-root node i (1-based in id order) owns features [(i-1)*per, i*per)
        let pool_start = |n: NodeId| (n.index() - 1) * per;
        let n_features = (h.len() - 1) * per;
        let mut rng = stream_rng(seed, Stream::Dataset, 0);
        let mut draw = |key: u64| {
            let truth = h.leaves()[rng.random_range(0..h.leaves().len())];
            let features = h
                .ancestors(truth)
                .into_iter()
                .skip(1)
                .flat_map(|n| std::iter::repeat_n(n, spec.draws_per_node))
                .map(|n| {
                    let siblings: Vec<NodeId> = h
                        .children(h.parent(n).expect("non-root"))
                        .iter()
                        .copied()
                        .filter(|&s| s != n)
                        .collect();
                    let owner = if siblings.is_empty() || rng.random_bool(spec.signal) {
                        n
                    } else {
                        siblings[rng.random_range(0..siblings.len())]
                    };
                    (pool_start(owner) + rng.random_range(0..per)) as u32
                })
                .collect();
            TaskExample {
                key,
                features,
                truth,
            }
        };
        let train = (0..spec.train as u64).map(&mut draw).collect();
        let validation = (0..spec.validation as u64)
            .map(|k| draw(VALIDATION_KEY_OFFSET + k))
            .collect();
        Ok(Self {
            hierarchy: h,
            n_features,
            train,
            validation,
        })
    }

    pub fn learner(&self, alpha: f64) -> Result<ReferenceLearner> {
        ReferenceLearner::new(&self.hierarchy, self.n_features, alpha)
    }

    pub fn run(&self, cfg: &LoopConfig) -> Result<LoopOutcome> {
        run_self_training_loop(
            &self.hierarchy,
            &self.train,
            &self.validation,
            cfg,
            self.learner(cfg.alpha)?,
        )
    }
}

/// When pseudo-labels are recomputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refresh {
    /// Before every minibatch, using the current learner.
    #[default]
    EveryBatch,
    /// Once per epoch for the whole training set.
    EveryEpoch,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub method: Method,
    pub noise: NoiseModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub refresh: Refresh,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl LoopConfig {
    pub fn new(method: Method, noise: NoiseModelConfig, seed: u64) -> Self {
        Self {
            method,
            noise,
            epochs: 6,
            batch_size: 32,
            seed,
            refresh: Refresh::EveryBatch,
            alpha: default_alpha(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.method.problems();
        out.extend(self.noise.model.problems());
        if self.batch_size == 0 {
            out.push("batch size must be at least 1".to_owned());
        }
        if !(self.alpha > 0.0) {
            out.push(format!("alpha = {} must be positive", self.alpha));
        }
        out
    }
}

/// Per-minibatch telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTelemetry {
    pub epoch: usize,
    pub batch: usize,
    pub theta: Option<f64>,
    pub mean_ic_gain: f64,
    pub histogram: BTreeMap<String, usize>,
}

/// Summary of one training epoch, evaluated after its last batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub report: EvaluationReport,
    pub mean_ic_gain: f64,
    pub extrapolated_fraction: f64,
    pub pseudo_label_entropy: f64,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    /// Validation report of the untrained learner.
    pub initial: EvaluationReport,
    pub epochs: Vec<EpochRecord>,
    pub telemetry: Vec<BatchTelemetry>,
    pub final_state: Option<AdaptiveState>,
}

impl LoopOutcome {
    /// Report after the last epoch, or the untrained report when no epoch ran.
    pub fn final_report(&self) -> &EvaluationReport {
        self.epochs.last().map_or(&self.initial, |e| &e.report)
    }
}

fn entropy(histogram: &BTreeMap<NodeId, usize>) -> f64 {
    let total: usize = histogram.values().sum();
    if total == 0 {
        return 0.0;
    }
    histogram
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn evaluate(
    h: &ClassHierarchy,
    learner: &ReferenceLearner,
    validation: &[TaskExample],
    cfg: &LoopConfig,
) -> Result<EvaluationReport> {
    let mut counts = HierarchicalCounts::default();
    for ex in validation {
        let uncond = propagate(h, &learner.conditional_scores(h, &ex.features)?)?;
        let pred = predict_leaf(h, &uncond, derive_seed(cfg.seed, Stream::Jitter, ex.key))?;
        counts = counts.merge(HierarchicalCounts::of_pair(h, pred, ex.truth));
    }
    if counts.examples == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(EvaluationReport::from_counts(&counts, true).labeled(
        cfg.noise.model.label(),
        cfg.method.name(),
        cfg.method.params(),
        cfg.seed,
    ))
}

struct PseudoLabeler<'a> {
    h: &'a ClassHierarchy,
    method: &'a Method,
    extrapolator: Option<Extrapolator>,
}

impl PseudoLabeler<'_> {
    fn label(
        &mut self,
        learner: &ReferenceLearner,
        ex: &TaskExample,
        noisy: NodeId,
        epoch: usize,
    ) -> Result<(NodeId, NodeId)> {
        let h = self.h;
        // fresh sorting noise for every epoch
        let key = derive_seed(ex.key, Stream::Jitter, epoch as u64);
        let source = match self.method {
            Method::NoExtrapolation => return Ok((noisy, noisy)),
            Method::Extrapolate(_) => noisy,
            Method::FromRoot(_) => h.root(),
        };
        let cond = learner.conditional_scores(h, &ex.features)?;
        let uncond = propagate(h, &clamp_to_source(h, &cond, source)?)?;
        let x = self
            .extrapolator
            .as_mut()
            .expect("extrapolating methods own an extrapolator");
        Ok((source, x.extrapolate(h, source, &uncond, key)?))
    }
}

/// Trains `learner` for `cfg.epochs` epochs on pseudo-labels derived from the
/// noisy training labels and evaluates leaf accuracy on `validation` after
/// each epoch. Noisy labels are drawn once; minibatches are processed in
/// order so the adaptive threshold sees a single sequential stream.
pub fn run_self_training_loop(
    h: &ClassHierarchy,
    train: &[TaskExample],
    validation: &[TaskExample],
    cfg: &LoopConfig,
    mut learner: ReferenceLearner,
) -> Result<LoopOutcome> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems.join("; ")));
    }
    let noise = NoiseModelConfig::new(cfg.noise.model, cfg.noise.seed);
    let noisy: Vec<NodeId> = train
        .iter()
        .map(|ex| corrupt_label(h, ex.truth, &noise, ex.key))
        .collect::<Result<_>>()?;
    let mut labeler = PseudoLabeler {
        h,
        method: &cfg.method,
        extrapolator: cfg
            .method
            .strategy()
            .map(|c| Extrapolator::new(c.clone().with_seed(cfg.seed)).map(Extrapolator::batched))
            .transpose()?,
    };

    let initial = evaluate(h, &learner, validation, cfg)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut telemetry = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    // each example contributes its current pseudo-label only
    let mut assigned: Vec<Option<NodeId>> = vec![None; train.len()];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut epoch_hist: BTreeMap<NodeId, usize> = BTreeMap::new();
        let (mut gain_sum, mut moved, mut seen) = (0.0, 0usize, 0usize);

        let precomputed: Option<Vec<(NodeId, NodeId)>> = match cfg.refresh {
            Refresh::EveryEpoch => Some(
                order
                    .iter()
                    .map(|&i| labeler.label(&learner, &train[i], noisy[i], epoch))
                    .collect::<Result<_>>()?,
            ),
            Refresh::EveryBatch => None,
        };

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let labels: Vec<(NodeId, NodeId)> = match &precomputed {
                Some(all) => all[b * cfg.batch_size..b * cfg.batch_size + batch.len()].to_vec(),
                None => {
                    // leave-one-out: an example is never scored on its own stale label
                    for &i in batch {
                        if let Some(old) = assigned[i].take() {
                            learner.retract(h, &train[i].features, old)?;
                        }
                    }
                    batch
                        .iter()
                        .map(|&i| labeler.label(&learner, &train[i], noisy[i], epoch))
                        .collect::<Result<_>>()?
                }
            };
            let mut batch_hist: BTreeMap<String, usize> = BTreeMap::new();
            let mut batch_gain = 0.0;
            for (&i, &(source, target)) in batch.iter().zip(&labels) {
                debug_assert!(h.subsumes(source, target));
                if let Some(old) = assigned[i].replace(target) {
                    learner.retract(h, &train[i].features, old)?;
                }
                learner.update(h, &train[i].features, target)?;
                let gain = h.ic(target) - h.ic(noisy[i]);
                batch_gain += gain;
                gain_sum += gain;
                moved += usize::from(target != noisy[i]);
                seen += 1;
                *epoch_hist.entry(target).or_default() += 1;
                *batch_hist.entry(h.name(target).to_owned()).or_default() += 1;
            }
            if let Some(x) = labeler.extrapolator.as_mut() {
                x.finish_batch();
            }
            telemetry.push(BatchTelemetry {
                epoch,
                batch: b,
                theta: labeler
                    .extrapolator
                    .as_ref()
                    .and_then(|x| x.state())
                    .map(AdaptiveState::theta),
                mean_ic_gain: batch_gain / batch.len() as f64,
                histogram: batch_hist,
            });
        }

        let seen_f = seen.max(1) as f64;
        epochs.push(EpochRecord {
            epoch,
            report: evaluate(h, &learner, validation, cfg)?,
            mean_ic_gain: gain_sum / seen_f,
            extrapolated_fraction: moved as f64 / seen_f,
            pseudo_label_entropy: entropy(&epoch_hist),
            theta: labeler
                .extrapolator
                .as_ref()
                .and_then(|x| x.state())
                .map(AdaptiveState::theta),
        });
    }

    Ok(LoopOutcome {
        initial,
        epochs,
        telemetry,
        final_state: labeler.extrapolator.and_then(|x| x.state().cloned()),
    })
}
