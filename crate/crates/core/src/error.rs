use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty hierarchy input")]
    EmptyHierarchy,
    #[error("line {line}: expected `child parent`, got {content:?}")]
    MalformedEdge { line: usize, content: String },
    #[error("cycle detected involving node {node:?}")]
    Cycle { node: String },
    #[error("multiple roots: {roots:?}")]
    MultipleRoots { roots: Vec<String> },
    #[error("duplicate child entry {child:?} on line {line}")]
    DuplicateChild { child: String, line: usize },
    #[error("degenerate hierarchy: information content needs at least two nodes")]
    DegenerateHierarchy,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node index {0} out of range")]
    InvalidNode(usize),
    #[error("score map is bound to a different hierarchy")]
    HierarchyMismatch,
    #[error("score map has {got} values, hierarchy has {expected} nodes")]
    ScoreLength { expected: usize, got: usize },
    #[error("score for node {node:?} is {value}, outside [0, 1]")]
    ScoreOutOfRange { node: String, value: f64 },
    #[error("expected a {expected} score map")]
    WrongRole { expected: &'static str },
    #[error("node {0:?} is not a leaf")]
    NotALeaf(String),
    #[error("target {target:?} is outside the subtree of source {source_node:?}")]
    NotSubsumed { source_node: String, target: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty evaluation input")]
    EmptyEvaluation,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
