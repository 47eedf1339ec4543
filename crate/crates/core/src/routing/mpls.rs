use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

/// Labels 0..=15 are reserved.
pub const FIRST_UNRESERVED_LABEL: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelAction {
    Swap { out_label: u32, next_hop: NodeId },
    /// Egress: remove the label and hand the payload to `next_hop`.
    Pop { next_hop: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MplsError {
    #[error("no label entry for {0}")]
    NoLabelEntry(u32),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub owner: Option<NodeId>,
    pub entries: BTreeMap<u32, LabelAction>,
}

impl LabelMap {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner: Some(owner),
            entries: BTreeMap::new(),
        }
    }
}

/// Label used by flow `flow_index` on entering the `position`-th node of its
/// LSP. Unique per node as long as a node appears once per LSP.
pub fn label_for(flow_index: u32, position: usize) -> u32 {
    FIRST_UNRESERVED_LABEL + flow_index * 256 + position as u32
}

pub fn mpls_forward(map: &LabelMap, in_label: u32) -> Result<LabelAction, MplsError> {
    map.entries
        .get(&in_label)
        .copied()
        .ok_or(MplsError::NoLabelEntry(in_label))
}
