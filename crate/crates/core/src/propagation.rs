//! Conditional-to-unconditional probability propagation and label clamping.
//!
//! A hierarchical classifier emits, for every node, the probability that the
//! class is present given that its parent is present. The unconditional
//! probability of a node is the product of these conditionals along its root
//! path; the root itself is always present.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::jitter::{jittered_argmax, Jitter, DEFAULT_JITTER_SIGMA};

/// Tolerance on the parent-dominates-child invariant of unconditional maps.
pub const MONOTONICITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreRole {
    Conditional,
    Unconditional,
}

impl ScoreRole {
    fn as_str(self) -> &'static str {
        match self {
            ScoreRole::Conditional => "conditional",
            ScoreRole::Unconditional => "unconditional",
        }
    }
}

/// One probability per node of a specific hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    values: Vec<f64>,
    role: ScoreRole,
    hierarchy: u64,
}

impl ScoreMap {
    pub fn new(h: &ClassHierarchy, role: ScoreRole, values: Vec<f64>) -> Result<Self> {
        if values.len() != h.len() {
            return Err(Error::ScoreLength {
                expected: h.len(),
                got: values.len(),
            });
        }
        for (n, &v) in h.nodes().zip(&values) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ScoreOutOfRange {
                    node: h.name(n).to_owned(),
                    value: v,
                });
            }
        }
        Ok(Self {
            values,
            role,
            hierarchy: h.fingerprint(),
        })
    }

    pub fn constant(h: &ClassHierarchy, role: ScoreRole, value: f64) -> Result<Self> {
        Self::new(h, role, vec![value; h.len()])
    }

    /// Builds a map from `(external id, value)` pairs; unnamed nodes get `default`.
    pub fn from_named<'a, I>(
        h: &ClassHierarchy,
        role: ScoreRole,
        pairs: I,
        default: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut values = vec![default; h.len()];
        for (name, v) in pairs {
            values[h.lookup(name)?.index()] = v;
        }
        Self::new(h, role, values)
    }

    pub fn role(&self) -> ScoreRole {
        self.role
    }

    pub fn get(&self, n: NodeId) -> f64 {
        self.values[n.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fails unless this map was built against `h`.
    pub fn check_bound(&self, h: &ClassHierarchy) -> Result<()> {
        if self.hierarchy != h.fingerprint() || self.values.len() != h.len() {
            return Err(Error::HierarchyMismatch);
        }
        Ok(())
    }

    fn expect_role(&self, role: ScoreRole) -> Result<()> {
        if self.role != role {
            return Err(Error::WrongRole {
                expected: role.as_str(),
            });
        }
        Ok(())
    }

    /// Checks the unconditional invariants: root is one, children never
    /// exceed their parent by more than [`MONOTONICITY_EPS`].
    pub fn validate_unconditional(&self, h: &ClassHierarchy) -> Result<()> {
        self.check_bound(h)?;
        self.expect_role(ScoreRole::Unconditional)?;
        if self.get(h.root()) != 1.0 {
            return Err(Error::InvalidConfig(
                "unconditional root score must be 1".into(),
            ));
        }
        for n in h.nodes() {
            if let Some(p) = h.parent(n) {
                if self.get(n) > self.get(p) + MONOTONICITY_EPS {
                    return Err(Error::InvalidConfig(format!(
                        "unconditional score of {:?} exceeds its parent",
                        h.name(n)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self, h: &ClassHierarchy) -> ScoreMapFile {
        ScoreMapFile {
            role: self.role,
            values: h
                .nodes()
                .map(|n| (h.name(n).to_owned(), self.get(n)))
                .collect(),
        }
    }

    pub fn from_file(h: &ClassHierarchy, file: &ScoreMapFile) -> Result<Self> {
        if file.values.len() != h.len() {
            return Err(Error::ScoreLength {
                expected: h.len(),
                got: file.values.len(),
            });
        }
        Self::from_named(
            h,
            file.role,
            file.values.iter().map(|(k, &v)| (k.as_str(), v)),
            f64::NAN,
        )
    }

    /// `node,value` rows in node order.
    pub fn to_csv(&self, h: &ClassHierarchy) -> String {
        let mut out = String::from("node,value\n");
        for n in h.nodes() {
            out.push_str(&format!("{},{}\n", h.name(n), self.get(n)));
        }
        out
    }

    pub fn from_csv(h: &ClassHierarchy, role: ScoreRole, text: &str) -> Result<Self> {
        let mut values = vec![f64::NAN; h.len()];
        let mut seen = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("node,")) {
                continue;
            }
            let (name, value) = line.split_once(',').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `node,value`".into(),
            })?;
            let v: f64 = value.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad score {value:?}"),
            })?;
            values[h.lookup(name.trim())?.index()] = v;
            seen += 1;
        }
        if seen != h.len() {
            return Err(Error::ScoreLength {
                expected: h.len(),
                got: seen,
            });
        }
        Self::new(h, role, values)
    }
}

/// Serialized form of a [`ScoreMap`], keyed by external node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMapFile {
    pub role: ScoreRole,
    pub values: BTreeMap<String, f64>,
}

/// Multiplies conditionals down the tree. The root's conditional is ignored
/// and its unconditional probability is one.
pub fn propagate(h: &ClassHierarchy, cond: &ScoreMap) -> Result<ScoreMap> {
    cond.check_bound(h)?;
    cond.expect_role(ScoreRole::Conditional)?;
    let mut out = vec![0.0; h.len()];
    for &n in h.topological_order() {
        out[n.index()] = match h.parent(n) {
            None => 1.0,
            Some(p) => cond.get(n) * out[p.index()],
        };
    }
    Ok(ScoreMap {
        values: out,
        role: ScoreRole::Unconditional,
        hierarchy: cond.hierarchy,
    })
}

/// Overwrites conditionals with what the known label `source` implies.
///
/// Every node on the root-to-source path is certainly present (1). Every
/// child of a strict path ancestor that is not itself on the path is certainly
/// absent (0), which zeroes its whole subtree after propagation. Scores below
/// `source` are kept.
pub fn clamp_to_source(h: &ClassHierarchy, cond: &ScoreMap, source: NodeId) -> Result<ScoreMap> {
    cond.check_bound(h)?;
    cond.expect_role(ScoreRole::Conditional)?;
    let mut values = cond.values.clone();
    let path = h.ancestors(source);
    for (i, &node) in path.iter().enumerate() {
        values[node.index()] = 1.0;
        if let Some(&next) = path.get(i + 1) {
            for &sibling in h.children(node) {
                if sibling != next {
                    values[sibling.index()] = 0.0;
                }
            }
        }
    }
    Ok(ScoreMap {
        values,
        role: ScoreRole::Conditional,
        hierarchy: cond.hierarchy,
    })
}

/// Most probable leaf under sorting noise seeded by `seed`.
pub fn predict_leaf(h: &ClassHierarchy, uncond: &ScoreMap, seed: u64) -> Result<NodeId> {
    predict_leaf_with(h, uncond, Jitter::new(DEFAULT_JITTER_SIGMA, seed))
}

pub fn predict_leaf_with(h: &ClassHierarchy, uncond: &ScoreMap, jitter: Jitter) -> Result<NodeId> {
    uncond.check_bound(h)?;
    uncond.expect_role(ScoreRole::Unconditional)?;
    let scored: Vec<(NodeId, f64)> = h.leaves().iter().map(|&l| (l, uncond.get(l))).collect();
    Ok(jittered_argmax(&scored, jitter).expect("a hierarchy always has a leaf"))
}
