//! Hierarchical precision, recall and F1, plus flat accuracy.
//!
//! The ancestor set `A(n)` of a node contains `n` and every ancestor except
//! the root, which is present for every example and carries no information.
//! Scores are micro-averaged: numerators and denominators are summed over all
//! examples before dividing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};

/// Summed ancestor-set overlap counts; merge is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HierarchicalCounts {
    pub overlap: usize,
    pub predicted: usize,
    pub truth: usize,
    pub exact: usize,
    pub examples: usize,
}

impl HierarchicalCounts {
    pub fn of_pair(h: &ClassHierarchy, pred: NodeId, truth: NodeId) -> Self {
        // |A(pred) ∩ A(truth)| is the depth of the deepest common ancestor
        Self {
            overlap: h.common_depth(pred, truth),
            predicted: h.depth(pred),
            truth: h.depth(truth),
            exact: usize::from(pred == truth),
            examples: 1,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            overlap: self.overlap + other.overlap,
            predicted: self.predicted + other.predicted,
            truth: self.truth + other.truth,
            exact: self.exact + other.exact,
            examples: self.examples + other.examples,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.overlap, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.overlap, self.truth)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.exact, self.examples)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accumulates counts over `(prediction, truth)` pairs.
pub fn hierarchical_counts(h: &ClassHierarchy, pairs: &[(NodeId, NodeId)]) -> HierarchicalCounts {
    pairs
        .iter()
        .map(|&(p, t)| HierarchicalCounts::of_pair(h, p, t))
        .fold(HierarchicalCounts::default(), HierarchicalCounts::merge)
}

/// Micro-averaged `(hP, hR, hF1)`. Root-only predictions contribute nothing
/// to either numerator, and an all-root side yields zero for its ratio.
pub fn hierarchical_prf(h: &ClassHierarchy, pairs: &[(NodeId, NodeId)]) -> Result<(f64, f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let c = hierarchical_counts(h, pairs);
    Ok((c.precision(), c.recall(), c.f1()))
}

/// Share of exact matches.
pub fn accuracy(pairs: &[(NodeId, NodeId)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = pairs.iter().filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// One evaluated cell: a method under a noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub noise: String,
    pub strategy: String,
    #[serde(default)]
    pub params: String,
    /// Only set for methods whose outputs are always leaves.
    pub accuracy: Option<f64>,
    pub h_precision: f64,
    pub h_recall: f64,
    pub h_f1: f64,
    pub n_examples: usize,
    #[serde(default)]
    pub seed: u64,
}

pub const CSV_HEADER: &str = "noise,strategy,params,accuracy,hP,hR,hF1,n,seed";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl EvaluationReport {
    pub fn from_counts(counts: &HierarchicalCounts, with_accuracy: bool) -> Self {
        Self {
            noise: String::new(),
            strategy: String::new(),
            params: String::new(),
            accuracy: with_accuracy.then(|| counts.accuracy()),
            h_precision: counts.precision(),
            h_recall: counts.recall(),
            h_f1: counts.f1(),
            n_examples: counts.examples,
            seed: 0,
        }
    }

    pub fn evaluate(
        h: &ClassHierarchy,
        pairs: &[(NodeId, NodeId)],
        with_accuracy: bool,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        Ok(Self::from_counts(
            &hierarchical_counts(h, pairs),
            with_accuracy,
        ))
    }

    pub fn labeled(
        mut self,
        noise: impl Into<String>,
        strategy: impl Into<String>,
        params: impl Into<String>,
        seed: u64,
    ) -> Self {
        self.noise = noise.into();
        self.strategy = strategy.into();
        self.params = params.into();
        self.seed = seed;
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{},{}",
            csv_field(&self.noise),
            csv_field(&self.strategy),
            csv_field(&self.params),
            self.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
            self.h_precision,
            self.h_recall,
            self.h_f1,
            self.n_examples,
            self.seed
        )
    }
}

pub fn reports_to_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Which number a results table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMetric {
    HierarchicalF1,
    Accuracy,
}

/// Method-by-noise grid in percent, rows and columns in first-seen order.
pub fn format_table(reports: &[EvaluationReport], metric: TableMetric) -> String {
    let mut noises: Vec<&str> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let method_of = |r: &EvaluationReport| {
        if r.params.is_empty() {
            r.strategy.clone()
        } else {
            format!("{} {}", r.strategy, r.params)
        }
    };
    for r in reports {
        if !noises.contains(&r.noise.as_str()) {
            noises.push(&r.noise);
        }
        let m = method_of(r);
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let width = methods
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(6)
        .max("Method / Noise".len());
    let col = noises.iter().map(|n| n.len()).max().unwrap_or(6).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Method / Noise");
    for n in &noises {
        let _ = write!(out, "  {n:>col$}");
    }
    out.push('\n');
    for m in &methods {
        let _ = write!(out, "{m:<width$}");
        for n in &noises {
            let cell = reports
                .iter()
                .find(|r| r.noise == *n && method_of(r) == *m)
                .and_then(|r| match metric {
                    TableMetric::HierarchicalF1 => Some(r.h_f1),
                    TableMetric::Accuracy => r.accuracy,
                });
            match cell {
                Some(v) => {
                    let _ = write!(out, "  {:>col$.2}", v * 100.0);
                }
                None => {
                    let _ = write!(out, "  {:>col$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
