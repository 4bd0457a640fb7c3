#![allow(dead_code)]

use imprecise::{ClassHierarchy, NodeId, ScoreMap, ScoreRole};
use proptest::prelude::*;

/// A random tree (node `i` hangs under some `j < i`), conditional scores
/// for it, and an index used to pick a source node.
#[derive(Debug, Clone)]
pub struct Case {
    pub hierarchy: ClassHierarchy,
    pub cond: ScoreMap,
    pub pick: usize,
}

pub fn arb_case(max_nodes: usize) -> impl Strategy<Value = Case> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
                proptest::collection::vec(0.0f64..=1.0, n),
                any::<usize>(),
            )
        })
        .prop_map(|(parents, scores, pick)| {
            let edges = parents
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("c{}", i + 1), format!("c{}", p.index(i + 1))));
            let hierarchy = ClassHierarchy::from_edges(edges).unwrap();
            let mut values = scores;
            values[hierarchy.root().index()] = 1.0;
            let cond = ScoreMap::new(&hierarchy, ScoreRole::Conditional, values).unwrap();
            Case {
                hierarchy,
                cond,
                pick,
            }
        })
}

impl Case {
    pub fn source(&self) -> NodeId {
        self.hierarchy
            .node(self.pick % self.hierarchy.len())
            .unwrap()
    }
}

/// Unconditional score as an explicit product along the root path.
pub fn path_product(h: &ClassHierarchy, cond: &ScoreMap, n: NodeId) -> f64 {
    h.ancestors(n).into_iter().map(|a| cond.get(a)).product()
}
