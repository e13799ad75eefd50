//! Attribute trees over the training set and the partition plans that turn
//! selected tree nodes into encoder branches.

mod nc;
mod plan;
mod tree;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttributeTag, SpeakerClass};
use crate::error::{Error, Result};

pub use nc::{kmeans, nc_features, nc_partition, KMeansResult, NcClustering};
pub use plan::{attach_sat, select_plan, Band, Branch, PartitionPlan, PlanVariant, SatMode};
pub use tree::{build_rt, build_uat, DEFAULT_SNR_THRESHOLD_DB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrBand {
    High,
    Low,
}

/// Membership test attached to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    All,
    Attributes {
        speaker: Option<SpeakerClass>,
        snr: Option<SnrBand>,
    },
    /// Random-tree nodes: membership is a seeded draw, not an attribute test.
    RandomSubset,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeKind {
    Uat,
    Rt { seed: u64 },
    Nc { seed: u64, clusters: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsdtNode {
    pub id: usize,
    pub depth: usize,
    pub label: String,
    pub predicate: Predicate,
    pub members: Vec<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dsdt {
    pub kind: TreeKind,
    pub nodes: Vec<DsdtNode>,
    pub layer_labels: Vec<String>,
    pub snr_threshold_db: f64,
}

impl Dsdt {
    pub fn root(&self) -> &DsdtNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> Result<&DsdtNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown tree node {id}")))
    }

    pub fn leaves(&self) -> impl Iterator<Item = &DsdtNode> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    pub fn nodes_at_depth(&self, depth: usize) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.depth == depth).map(|n| n.id).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Whether `tag` satisfies the predicate of `id` and of all its ancestors.
    /// Random and cluster nodes match only through explicit membership.
    pub fn tag_matches(&self, id: usize, tag: &AttributeTag) -> bool {
        let mut current = Some(id);
        while let Some(i) = current {
            let node = &self.nodes[i];
            let ok = match &node.predicate {
                Predicate::All => true,
                Predicate::Attributes { speaker, snr } => {
                    let speaker_ok = match speaker {
                        Some(c) => tag.speaker_class == Some(*c),
                        None => true,
                    };
                    let snr_ok = match (snr, tag.snr_db) {
                        (None, _) => true,
                        (Some(band), Some(s)) => {
                            let high = s >= self.snr_threshold_db;
                            (*band == SnrBand::High) == high
                        }
                        (Some(_), None) => false,
                    };
                    speaker_ok && snr_ok
                }
                Predicate::RandomSubset | Predicate::Cluster(_) => false,
            };
            if !ok {
                return false;
            }
            current = node.parent;
        }
        true
    }

    /// Disjoint children whose union is the parent, at every internal node.
    pub fn check_partition_law(&self) -> Result<()> {
        for node in &self.nodes {
            if node.children.is_empty() {
                continue;
            }
            let mut seen = HashSet::new();
            let mut count = 0;
            for &c in &node.children {
                for m in &self.nodes[c].members {
                    count += 1;
                    if !seen.insert(m.as_str()) {
                        return Err(Error::invalid(format!("{m} appears in two children of node {}", node.id)));
                    }
                }
            }
            let parent: HashSet<&str> = node.members.iter().map(String::as_str).collect();
            if count != node.members.len() || seen != parent {
                return Err(Error::invalid(format!("children of node {} do not cover it", node.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
