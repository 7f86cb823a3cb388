//! Hierarchical task model that groups metrics for reporting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Taxonomy shipped with the crate; see `taxonomy/default.toml`.
pub const DEFAULT_TAXONOMY: &str = include_str!("../../taxonomy/default.toml");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy does not parse: {0}")]
    Parse(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("expected exactly one root node, found {0}")]
    Root(usize),
    #[error("node {node:?} has unknown parent {parent:?}")]
    UnknownParent { node: String, parent: String },
    #[error("node {node:?} (level {level}) must have a higher level than its parent (level {parent_level})")]
    LevelOrder { node: String, level: u8, parent_level: u8 },
    #[error("node {node:?}: level {level} out of range 0..=5")]
    LevelRange { node: String, level: u8 },
    #[error("node {0:?} lists metric keys but is not a level-5 leaf")]
    MetricsOnInnerNode(String),
    #[error("metric {key:?} is attached to {count} leaves, expected exactly one")]
    MetricPlacement { key: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtaNode {
    pub id: String,
    pub level: u8,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metric_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    node: Vec<CtaNode>,
}

/// A validated tree of [`CtaNode`]s, stored in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<CtaNode>,
}

impl Taxonomy {
    pub fn parse(text: &str, metric_keys: &[&str]) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile = toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::new(file.node, metric_keys)
    }

    pub fn default_for(metric_keys: &[&str]) -> Self {
        Self::parse(DEFAULT_TAXONOMY, metric_keys).expect("bundled taxonomy is valid")
    }

    /// Checks tree shape, level order and that each of `metric_keys` is
    /// attached to exactly one leaf (and nothing else is).
    pub fn new(nodes: Vec<CtaNode>, metric_keys: &[&str]) -> Result<Self, TaxonomyError> {
        let mut by_id: BTreeMap<&str, &CtaNode> = BTreeMap::new();
        for n in &nodes {
            if by_id.insert(&n.id, n).is_some() {
                return Err(TaxonomyError::DuplicateNode(n.id.clone()));
            }
            if n.level > 5 {
                return Err(TaxonomyError::LevelRange {
                    node: n.id.clone(),
                    level: n.level,
                });
            }
        }
        let roots = nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 {
            return Err(TaxonomyError::Root(roots));
        }
        let mut has_children = BTreeSet::new();
        for n in &nodes {
            if let Some(p) = &n.parent {
                let parent = by_id.get(p.as_str()).ok_or_else(|| TaxonomyError::UnknownParent {
                    node: n.id.clone(),
                    parent: p.clone(),
                })?;
                if parent.level >= n.level {
                    return Err(TaxonomyError::LevelOrder {
                        node: n.id.clone(),
                        level: n.level,
                        parent_level: parent.level,
                    });
                }
                has_children.insert(p.as_str());
            }
        }
        let mut placements: BTreeMap<&str, usize> = metric_keys.iter().map(|k| (*k, 0)).collect();
        for n in &nodes {
            if n.metric_keys.is_empty() {
                continue;
            }
            if n.level != 5 || has_children.contains(n.id.as_str()) {
                return Err(TaxonomyError::MetricsOnInnerNode(n.id.clone()));
            }
            for k in &n.metric_keys {
                *placements.entry(k.as_str()).or_default() += 1;
            }
        }
        if let Some((k, c)) = placements.iter().find(|(_, c)| **c != 1) {
            return Err(TaxonomyError::MetricPlacement {
                key: k.to_string(),
                count: *c,
            });
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[CtaNode] {
        &self.nodes
    }

    pub fn root(&self) -> &CtaNode {
        self.nodes.iter().find(|n| n.parent.is_none()).expect("validated")
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a CtaNode> + 'a {
        self.nodes.iter().filter(move |n| n.parent.as_deref() == Some(id))
    }

    /// Leaf id holding `metric_key`.
    pub fn leaf_of(&self, metric_key: &str) -> Option<&CtaNode> {
        self.nodes.iter().find(|n| n.metric_keys.iter().any(|k| k == metric_key))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&TaxonomyFile {
            node: self.nodes.clone(),
        })
        .expect("taxonomy serializes")
    }
}
