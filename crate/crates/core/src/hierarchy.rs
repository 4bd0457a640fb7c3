//! Class taxonomies: loading, validation, structural queries and intrinsic
//! information content.
//!
//! A [`ClassHierarchy`] is a rooted tree. Node ids are dense indices assigned
//! after sorting the external ids in natural order (numeric ids numerically,
//! everything else lexicographically), so every downstream tie-break is
//! reproducible regardless of input line order.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a node within one [`ClassHierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(index: usize) -> Self {
        NodeId(u32::try_from(index).expect("hierarchy larger than u32::MAX nodes"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Immutable rooted class tree with cached depths and information content.
#[derive(Debug, Clone)]
pub struct ClassHierarchy {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<usize>,
    descendant_count: Vec<usize>,
    ic: Vec<f64>,
    topo: Vec<NodeId>,
    leaves: Vec<NodeId>,
    root: NodeId,
    fingerprint: u64,
}

impl PartialEq for ClassHierarchy {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.parent == other.parent
    }
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Parses edge-list text: one `child parent` pair per line, `#` starts a
/// comment, blank lines are ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(String, String)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(child), Some(parent), None) => edges.push((child.to_owned(), parent.to_owned())),
            _ => {
                return Err(Error::MalformedEdge {
                    line: lineno + 1,
                    content: raw.to_owned(),
                })
            }
        }
    }
    Ok(edges)
}

/// Parses and validates an edge list.
pub fn load_hierarchy(text: &str) -> Result<ClassHierarchy> {
    ClassHierarchy::from_edges(parse_edge_list(text)?)
}

/// Intrinsic information content `1 - ln(|desc(n)| + 1) / ln(|V|)`.
///
/// Zero at the root, one at every leaf. Fails on single-node hierarchies
/// where the denominator vanishes.
pub fn information_content(h: &ClassHierarchy, n: NodeId) -> Result<f64> {
    intrinsic_ic(h.descendant_count(n), h.len())
}

fn intrinsic_ic(descendants: usize, total: usize) -> Result<f64> {
    if total < 2 {
        return Err(Error::DegenerateHierarchy);
    }
    Ok(1.0 - ((descendants + 1) as f64).ln() / (total as f64).ln())
}

impl ClassHierarchy {
    /// Builds a hierarchy from `(child, parent)` pairs in any order.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut parent_of: HashMap<String, String> = HashMap::new();
        let mut names: Vec<String> = Vec::new();
        let mut seen: HashMap<String, ()> = HashMap::new();
        for (line, (child, parent)) in edges.into_iter().enumerate() {
            let (child, parent) = (child.into(), parent.into());
            if parent_of.contains_key(&child) {
                return Err(Error::DuplicateChild {
                    child,
                    line: line + 1,
                });
            }
            for name in [&child, &parent] {
                if seen.insert(name.clone(), ()).is_none() {
                    names.push(name.clone());
                }
            }
            parent_of.insert(child, parent);
        }
        if names.is_empty() {
            return Err(Error::EmptyHierarchy);
        }
        names.sort_by(|a, b| natural_cmp(a, b));
        let index: HashMap<String, NodeId> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId::from_index(i)))
            .collect();
        let parent: Vec<Option<NodeId>> = names
            .iter()
            .map(|n| parent_of.get(n).map(|p| index[p]))
            .collect();
        Self::build(names, index, parent)
    }

    /// Builds a hierarchy from explicit `(name, parent)` entries. Unlike
    /// [`ClassHierarchy::from_edges`] this can express a single-node tree.
    pub fn from_parent_links<I>(links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Option<String>)>,
    {
        let links: Vec<(String, Option<String>)> = links.into_iter().collect();
        let mut edges = Vec::new();
        let mut roots = Vec::new();
        for (name, parent) in &links {
            match parent {
                Some(p) => edges.push((name.clone(), p.clone())),
                None => roots.push(name.clone()),
            }
        }
        if edges.is_empty() {
            return match roots.as_slice() {
                [] => Err(Error::EmptyHierarchy),
                [single] => {
                    let names = vec![single.clone()];
                    let index = HashMap::from([(single.clone(), NodeId(0))]);
                    Self::build(names, index, vec![None])
                }
                _ => Err(Error::MultipleRoots { roots }),
            };
        }
        let h = Self::from_edges(edges)?;
        for r in &roots {
            if h.id(r).is_none() {
                let mut all = vec![h.name(h.root()).to_owned()];
                all.push(r.clone());
                return Err(Error::MultipleRoots { roots: all });
            }
        }
        Ok(h)
    }

    fn build(
        names: Vec<String>,
        index: HashMap<String, NodeId>,
        parent: Vec<Option<NodeId>>,
    ) -> Result<Self> {
        let n = names.len();

        // Parent pointers form a functional graph; any node whose upward walk
        // revisits a node on the current walk sits on a cycle.
        let mut state = vec![0u8; n]; // 0 unvisited, 1 on current walk, 2 done
        for start in 0..n {
            let mut walk = Vec::new();
            let mut cur = Some(start);
            while let Some(c) = cur {
                match state[c] {
                    2 => break,
                    1 => {
                        return Err(Error::Cycle {
                            node: names[c].clone(),
                        })
                    }
                    _ => {
                        state[c] = 1;
                        walk.push(c);
                        cur = parent[c].map(NodeId::index);
                    }
                }
            }
            for w in walk {
                state[w] = 2;
            }
        }

        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => NodeId::from_index(*r),
            [] => {
                return Err(Error::Cycle {
                    node: names[0].clone(),
                })
            }
            _ => {
                return Err(Error::MultipleRoots {
                    roots: roots.iter().map(|&r| names[r].clone()).collect(),
                })
            }
        };

        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.index()].push(NodeId::from_index(i));
            }
        }

        let mut depth = vec![0usize; n];
        let mut topo = Vec::with_capacity(n);
        topo.push(root);
        let mut head = 0;
        while head < topo.len() {
            let cur = topo[head];
            head += 1;
            for &c in &children[cur.index()] {
                depth[c.index()] = depth[cur.index()] + 1;
                topo.push(c);
            }
        }
        debug_assert_eq!(topo.len(), n);

        let mut descendant_count = vec![0usize; n];
        for &node in topo.iter().rev() {
            if let Some(p) = parent[node.index()] {
                descendant_count[p.index()] += descendant_count[node.index()] + 1;
            }
        }

        let ic = if n < 2 {
            vec![0.0]
        } else {
            descendant_count
                .iter()
                .map(|&d| intrinsic_ic(d, n).expect("n >= 2"))
                .collect()
        };

        let leaves = (0..n)
            .filter(|&i| children[i].is_empty())
            .map(NodeId::from_index)
            .collect();

        let mut fingerprint: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                fingerprint ^= u64::from(*b);
                fingerprint = fingerprint.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, p) in names.iter().zip(&parent) {
            feed(name.as_bytes());
            feed(&[0xff]);
            feed(&p.map_or(u32::MAX, |p| p.0).to_le_bytes());
        }

        Ok(Self {
            names,
            index,
            parent,
            children,
            depth,
            descendant_count,
            ic,
            topo,
            leaves,
            root,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Structural hash used to bind score maps to the hierarchy that made them.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn name(&self, n: NodeId) -> &str {
        &self.names[n.index()]
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<NodeId> {
        self.id(name)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn node(&self, index: usize) -> Result<NodeId> {
        if index < self.len() {
            Ok(NodeId::from_index(index))
        } else {
            Err(Error::InvalidNode(index))
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        (0..self.len()).map(NodeId::from_index)
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.parent[n.index()]
    }

    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.children[n.index()]
    }

    pub fn depth(&self, n: NodeId) -> usize {
        self.depth[n.index()]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Cached information content of `n`.
    pub fn ic(&self, n: NodeId) -> f64 {
        self.ic[n.index()]
    }

    pub fn descendant_count(&self, n: NodeId) -> usize {
        self.descendant_count[n.index()]
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.children[n.index()].is_empty()
    }

    /// All leaves in id order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Parents-before-children order (breadth first from the root).
    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Root-to-`n` path, inclusive of both ends.
    pub fn ancestors(&self, n: NodeId) -> Vec<NodeId> {
        let mut path = Vec::with_capacity(self.depth(n) + 1);
        let mut cur = Some(n);
        while let Some(c) = cur {
            path.push(c);
            cur = self.parent(c);
        }
        path.reverse();
        path
    }

    /// Strict descendants of `n` in id order.
    pub fn descendants(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = self.subtree(n);
        out.retain(|&d| d != n);
        out
    }

    /// `n` together with all its descendants, in id order.
    pub fn subtree(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.descendant_count(n) + 1);
        let mut stack = vec![n];
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend_from_slice(self.children(c));
        }
        out.sort_unstable();
        out
    }

    /// Leaves of the subtree rooted at `n`, in id order.
    pub fn leaves_under(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = self.subtree(n);
        out.retain(|&d| self.is_leaf(d));
        out
    }

    /// True when `ancestor` lies on the root-to-`n` path (inclusive).
    pub fn subsumes(&self, ancestor: NodeId, n: NodeId) -> bool {
        let target_depth = self.depth(ancestor);
        if self.depth(n) < target_depth {
            return false;
        }
        self.ancestor_at_depth(n, target_depth) == ancestor
    }

    /// Ancestor of `n` at `depth`, or `n` itself if `depth >= depth(n)`.
    pub fn ancestor_at_depth(&self, n: NodeId, depth: usize) -> NodeId {
        let mut cur = n;
        let mut d = self.depth(n);
        while d > depth {
            cur = self.parent(cur).expect("non-root node has a parent");
            d -= 1;
        }
        cur
    }

    /// Depth of the deepest common ancestor of `a` and `b`.
    pub fn common_depth(&self, a: NodeId, b: NodeId) -> usize {
        let d = self.depth(a).min(self.depth(b));
        let (mut x, mut y) = (self.ancestor_at_depth(a, d), self.ancestor_at_depth(b, d));
        let mut depth = d;
        while x != y {
            x = self.parent(x).expect("distinct nodes below a shared root");
            y = self.parent(y).expect("distinct nodes below a shared root");
            depth -= 1;
        }
        depth
    }

    /// Edge-list text in id order; loads back to an identical hierarchy.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for n in self.nodes() {
            if let Some(p) = self.parent(n) {
                out.push_str(self.name(n));
                out.push(' ');
                out.push_str(self.name(p));
                out.push('\n');
            }
        }
        out
    }

    pub fn export(&self) -> HierarchyExport {
        HierarchyExport {
            root: self.name(self.root).to_owned(),
            node_count: self.len(),
            leaf_count: self.leaves.len(),
            max_depth: self.max_depth(),
            nodes: self
                .nodes()
                .map(|n| ExportedNode {
                    id: self.name(n).to_owned(),
                    parent: self.parent(n).map(|p| self.name(p).to_owned()),
                    depth: self.depth(n),
                    ic: self.ic(n),
                    leaf: self.is_leaf(n),
                    children: self
                        .children(n)
                        .iter()
                        .map(|&c| self.name(c).to_owned())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_export(export: &HierarchyExport) -> Result<Self> {
        Self::from_parent_links(
            export
                .nodes
                .iter()
                .map(|n| (n.id.clone(), n.parent.clone())),
        )
    }
}

/// JSON view of a validated hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyExport {
    pub root: String,
    pub node_count: usize,
    pub leaf_count: usize,
    pub max_depth: usize,
    pub nodes: Vec<ExportedNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedNode {
    pub id: String,
    pub parent: Option<String>,
    pub depth: usize,
    pub ic: f64,
    pub leaf: bool,
    pub children: Vec<String>,
}
