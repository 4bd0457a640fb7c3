//! Synthetic class trees.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;
use crate::seed::{stream_rng, Stream};

/// Complete binary tree of the given depth; depth 3 gives 15 nodes.
/// Node `i` has children `2i + 1` and `2i + 2`.
pub fn complete_binary(depth: usize) -> ClassHierarchy {
    let total = (1usize << (depth + 1)) - 1;
    let edges = (1..total).map(|i| (i.to_string(), ((i - 1) / 2).to_string()));
    ClassHierarchy::from_edges(edges).expect("complete binary tree is valid")
}

/// Random taxonomy with exactly `leaves` leaves, every inner node having
/// between 2 and `max_fanout` children, and no node deeper than `max_depth`.
/// Node names are decimal integers with the root at `0`.
pub fn random_taxonomy(
    leaves: usize,
    max_fanout: usize,
    max_depth: usize,
    seed: u64,
) -> Result<ClassHierarchy> {
    if leaves < 2 || max_fanout < 2 || max_depth == 0 {
        return Err(Error::InvalidConfig(
            "random taxonomy needs at least 2 leaves, fanout >= 2 and depth >= 1".into(),
        ));
    }
    let capacity = max_fanout
        .checked_pow(max_depth as u32)
        .unwrap_or(usize::MAX);
    if leaves > capacity {
        return Err(Error::InvalidConfig(format!(
            "{leaves} leaves do not fit under fanout {max_fanout} and depth {max_depth}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Taxonomy, 0);
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut next_id = 1usize;
    // (node id, depth, leaf budget)
    let mut stack = vec![(0usize, 0usize, leaves)];
    while let Some((node, depth, budget)) = stack.pop() {
        if budget == 1 {
            continue;
        }
        let remaining_levels = (max_depth - depth - 1) as u32;
        let per_child_cap = max_fanout
            .checked_pow(remaining_levels)
            .unwrap_or(usize::MAX);
        let min_fanout = budget.div_ceil(per_child_cap).max(2);
        let fanout = rng.random_range(min_fanout..=max_fanout.min(budget));
        let parts = split_budget(&mut rng, budget, fanout, per_child_cap);
        for part in parts {
            let child = next_id;
            next_id += 1;
            edges.push((child.to_string(), node.to_string()));
            stack.push((child, depth + 1, part));
        }
    }
    ClassHierarchy::from_edges(edges)
}

/// Random composition of `total` into `parts` positive pieces, each at most `cap`.
fn split_budget<R: Rng>(rng: &mut R, total: usize, parts: usize, cap: usize) -> Vec<usize> {
    let mut out = vec![1usize; parts];
    let mut left = total - parts;
    while left > 0 {
        let i = rng.random_range(0..parts);
        if out[i] < cap {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}
