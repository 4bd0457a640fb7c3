//! Plain-text label files: one `example-id node-id` pair per line, compatible
//! with NABirds `image_class_labels.txt`. Train/test split files hold
//! `example-id flag` lines with flag `1` for training examples.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hierarchy::{ClassHierarchy, NodeId};
use crate::seed::example_key;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub id: String,
    pub node: NodeId,
}

impl LabelRecord {
    /// Key used to seed this example's random streams.
    pub fn key(&self) -> u64 {
        example_key(&self.id)
    }
}

fn pairs(text: &str) -> impl Iterator<Item = Result<(usize, &str, &str)>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        let mut tokens = line.split_whitespace();
        Some(match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => Ok((i + 1, a, b)),
            _ => Err(Error::Parse {
                line: i + 1,
                message: format!("expected `id node`, got {raw:?}"),
            }),
        })
    })
}

pub fn parse_labels(h: &ClassHierarchy, text: &str) -> Result<Vec<LabelRecord>> {
    pairs(text)
        .map(|entry| {
            let (line, id, node) = entry?;
            let node = h.id(node).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown node {node:?}"),
            })?;
            Ok(LabelRecord {
                id: id.to_owned(),
                node,
            })
        })
        .collect()
}

/// Like [`parse_labels`], additionally requiring every label to be a leaf.
pub fn parse_leaf_labels(h: &ClassHierarchy, text: &str) -> Result<Vec<LabelRecord>> {
    pairs(text)
        .map(|entry| {
            let (line, id, name) = entry?;
            let node = h.id(name).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown node {name:?}"),
            })?;
            if !h.is_leaf(node) {
                return Err(Error::Parse {
                    line,
                    message: format!("label {name:?} of example {id:?} is not a leaf"),
                });
            }
            Ok(LabelRecord {
                id: id.to_owned(),
                node,
            })
        })
        .collect()
}

pub fn format_labels(h: &ClassHierarchy, records: &[LabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.id);
        out.push(' ');
        out.push_str(h.name(r.node));
        out.push('\n');
    }
    out
}

/// Parses a split file into `id -> is_training`.
pub fn parse_split(text: &str) -> Result<HashMap<String, bool>> {
    pairs(text)
        .map(|entry| {
            let (line, id, flag) = entry?;
            let train = match flag {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("split flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            Ok((id.to_owned(), train))
        })
        .collect()
}

/// Keeps records whose split flag equals `keep_training`; ids missing from the split are dropped.
pub fn filter_split(
    records: Vec<LabelRecord>,
    split: &HashMap<String, bool>,
    keep_training: bool,
) -> Vec<LabelRecord> {
    records
        .into_iter()
        .filter(|r| split.get(&r.id) == Some(&keep_training))
        .collect()
}
