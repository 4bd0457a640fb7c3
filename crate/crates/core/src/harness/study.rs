//! One-shot extrapolation study: degrade ground-truth labels, extrapolate
//! them with oracle scores, and score the result against the clean truth.
//! There is no training here, so no feedback loop can bias the outcome.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolation::{Extrapolator, Strategy, StrategyConfig};
use crate::harness::oracle::SyntheticOracle;
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::metrics::{EvaluationReport, HierarchicalCounts};
use crate::noise::{corrupt_label, NoiseModel, NoiseModelConfig};
use crate::propagation::{clamp_to_source, propagate};
use crate::seed::{stream_rng, Stream};

/// How a label is turned into a pseudo-label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Keep the (noisy) label.
    NoExtrapolation,
    /// Extrapolate from the noisy label.
    Extrapolate(StrategyConfig),
    /// Ignore the label and extrapolate from the root.
    FromRoot(StrategyConfig),
}

impl Method {
    pub fn extrapolate(strategy: Strategy) -> Self {
        Method::Extrapolate(StrategyConfig::new(strategy))
    }

    pub fn name(&self) -> String {
        match self {
            Method::NoExtrapolation => "baseline".to_owned(),
            Method::Extrapolate(c) => c.strategy.name().to_owned(),
            Method::FromRoot(c) => format!("{}-from-root", c.strategy.name()),
        }
    }

    pub fn params(&self) -> String {
        match self {
            Method::NoExtrapolation => String::new(),
            Method::Extrapolate(c) | Method::FromRoot(c) => c.strategy.params(),
        }
    }

    pub fn strategy(&self) -> Option<&StrategyConfig> {
        match self {
            Method::NoExtrapolation => None,
            Method::Extrapolate(c) | Method::FromRoot(c) => Some(c),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        self.strategy()
            .map(StrategyConfig::problems)
            .unwrap_or_default()
    }

    fn yields_leaves(&self) -> bool {
        self.strategy().is_some_and(|c| c.strategy.yields_leaves())
    }

    fn reseeded(&self, seed: u64) -> Self {
        match self {
            Method::NoExtrapolation => Method::NoExtrapolation,
            Method::Extrapolate(c) => Method::Extrapolate(c.clone().with_seed(seed)),
            Method::FromRoot(c) => Method::FromRoot(c.clone().with_seed(seed)),
        }
    }
}

/// Baseline, leaf node, 1/2/3 steps down and fixed thresholds 0.55 and 0.8.
pub fn standard_methods() -> Vec<Method> {
    let mut out = vec![Method::NoExtrapolation];
    for k in 1..=3 {
        out.push(Method::extrapolate(Strategy::KStepsDown {
            k,
            confidence_floor: None,
        }));
    }
    out.push(Method::extrapolate(Strategy::FixedThreshold {
        threshold: 0.55,
    }));
    out.push(Method::extrapolate(Strategy::FixedThreshold {
        threshold: 0.8,
    }));
    out.push(Method::extrapolate(Strategy::LeafNode));
    out
}

/// Leaf-node extrapolation with and without the noisy label.
pub fn label_vs_root_methods() -> Vec<Method> {
    vec![
        Method::extrapolate(Strategy::LeafNode),
        Method::FromRoot(StrategyConfig::new(Strategy::LeafNode)),
    ]
}

/// An evaluation example: stream key and precise ground-truth leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyExample {
    pub key: u64,
    pub truth: NodeId,
}

/// `n` examples with keys `0..n` and uniformly drawn leaf labels.
pub fn uniform_dataset(h: &ClassHierarchy, n: usize, seed: u64) -> Vec<StudyExample> {
    let mut rng = stream_rng(seed, Stream::Dataset, 0);
    let leaves = h.leaves();
    (0..n as u64)
        .map(|key| StudyExample {
            key,
            truth: leaves[rng.random_range(0..leaves.len())],
        })
        .collect()
}

fn run_cell(
    h: &ClassHierarchy,
    dataset: &[StudyExample],
    noise: &NoiseModelConfig,
    method: &Method,
    oracle: &SyntheticOracle,
) -> Result<EvaluationReport> {
    let mut extrapolator = method
        .strategy()
        .cloned()
        .map(Extrapolator::new)
        .transpose()?;
    let mut counts = HierarchicalCounts::default();
    for ex in dataset {
        let noisy = corrupt_label(h, ex.truth, noise, ex.key)?;
        let target = match (method, extrapolator.as_mut()) {
            (Method::NoExtrapolation, _) => noisy,
            (Method::Extrapolate(_), Some(x)) => {
                let cond = oracle.scores(h, ex.truth, ex.key)?;
                let uncond = propagate(h, &clamp_to_source(h, &cond, noisy)?)?;
                x.extrapolate(h, noisy, &uncond, ex.key)?
            }
            (Method::FromRoot(_), Some(x)) => {
                let uncond = propagate(h, &oracle.scores(h, ex.truth, ex.key)?)?;
                x.extrapolate(h, h.root(), &uncond, ex.key)?
            }
            _ => unreachable!("extrapolating methods own an extrapolator"),
        };
        counts = counts.merge(HierarchicalCounts::of_pair(h, target, ex.truth));
    }
    if counts.examples == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(
        EvaluationReport::from_counts(&counts, method.yields_leaves()).labeled(
            noise.model.label(),
            method.name(),
            method.params(),
            oracle.seed,
        ),
    )
}

/// Evaluates every `(method, noise)` cell; rows come out method-major.
/// Cells are independent and run in parallel on the current rayon pool.
pub fn run_extrapolation_study(
    h: &ClassHierarchy,
    dataset: &[StudyExample],
    noises: &[NoiseModelConfig],
    methods: &[Method],
    oracle: &SyntheticOracle,
) -> Result<Vec<EvaluationReport>> {
    let cells: Vec<(&Method, &NoiseModelConfig)> = methods
        .iter()
        .flat_map(|m| noises.iter().map(move |n| (m, n)))
        .collect();
    cells
        .par_iter()
        .map(|(m, n)| run_cell(h, dataset, n, m, oracle))
        .collect()
}

/// Everything needed to run the study for one seed on a given hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyPlan {
    pub examples: usize,
    pub noises: Vec<NoiseModel>,
    pub methods: Vec<Method>,
    pub fidelity: f64,
    pub temperature: f64,
}

impl Default for StudyPlan {
    fn default() -> Self {
        Self {
            examples: 2000,
            noises: NoiseModelConfig::study_models(0)
                .into_iter()
                .map(|c| c.model)
                .collect(),
            methods: standard_methods(),
            fidelity: 0.9,
            temperature: 1.0,
        }
    }
}

impl StudyPlan {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.examples == 0 {
            out.push("examples must be at least 1".to_owned());
        }
        if self.noises.is_empty() {
            out.push("at least one noise model is required".to_owned());
        }
        if self.methods.is_empty() {
            out.push("at least one method is required".to_owned());
        }
        out.extend(self.noises.iter().flat_map(NoiseModel::problems));
        out.extend(self.methods.iter().flat_map(Method::problems));
        out.extend(
            SyntheticOracle {
                fidelity: self.fidelity,
                temperature: self.temperature,
                seed: 0,
            }
            .problems(),
        );
        out
    }

    /// Runs the plan with every random stream (dataset, noise, oracle,
    /// jitter) derived from `seed`.
    pub fn run(&self, h: &ClassHierarchy, seed: u64) -> Result<Vec<EvaluationReport>> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems.join("; ")));
        }
        let dataset = uniform_dataset(h, self.examples, seed);
        let noises: Vec<NoiseModelConfig> = self
            .noises
            .iter()
            .map(|&m| NoiseModelConfig::new(m, seed))
            .collect();
        let methods: Vec<Method> = self.methods.iter().map(|m| m.reseeded(seed)).collect();
        let oracle = SyntheticOracle::new(self.fidelity, self.temperature, seed)?;
        run_extrapolation_study(h, &dataset, &noises, &methods, &oracle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::taxonomy::{complete_binary, random_taxonomy};

    #[test]
    fn no_noise_scores_perfectly() {
        let h = complete_binary(3);
        let plan = StudyPlan {
            examples: 200,
            noises: vec![NoiseModel::NoNoise],
            ..StudyPlan::default()
        };
        for r in plan.run(&h, 0).unwrap() {
            assert_eq!(r.h_f1, 1.0, "{r:?}");
        }
    }

    #[test]
    fn perfect_oracle_baseline_is_worst_and_leaf_is_exact() {
        let h = random_taxonomy(60, 5, 4, 2).unwrap();
        let plan = StudyPlan {
            examples: 300,
            fidelity: 1.0,
            ..StudyPlan::default()
        };
        let reports = plan.run(&h, 1).unwrap();
        for noise in plan.noises.iter().map(NoiseModel::label) {
            let row = |name: &str| {
                reports
                    .iter()
                    .filter(|r| r.noise == noise && r.strategy == name)
                    .collect::<Vec<_>>()
            };
            let base = row("baseline")[0].h_f1;
            for r in reports.iter().filter(|r| r.noise == noise) {
                assert!(r.h_f1 >= base, "{r:?} vs {base}");
            }
            assert_eq!(row("leaf")[0].accuracy, Some(1.0));
        }
    }

    #[test]
    fn method_json_shape() {
        let m = Method::extrapolate(Strategy::KStepsDown {
            k: 2,
            confidence_floor: Some(0.9),
        });
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["method"], "extrapolate");
        assert_eq!(json["kind"], "k_steps_down");
        let back: Method = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
        let base: Method = serde_json::from_str(r#"{"method":"no_extrapolation"}"#).unwrap();
        assert_eq!(base, Method::NoExtrapolation);
    }

    #[test]
    fn cells_are_reproducible() {
        let h = random_taxonomy(30, 4, 4, 0).unwrap();
        let plan = StudyPlan {
            examples: 100,
            fidelity: 0.5,
            ..StudyPlan::default()
        };
        assert_eq!(plan.run(&h, 3).unwrap(), plan.run(&h, 3).unwrap());
        assert_eq!(
            plan.run(&h, 3).unwrap().len(),
            plan.methods.len() * plan.noises.len()
        );
    }
}
