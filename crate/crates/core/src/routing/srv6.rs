use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Srv6Error {
    #[error("malformed routing header: segments_left {segments_left} exceeds {len} SIDs")]
    MalformedHeader { segments_left: usize, len: usize },
}

/// Waypoint list carried in the routing header. The last SID is the egress.
///
/// The active SID is `sids[len - segments_left - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentList {
    pub sids: Vec<NodeId>,
    pub segments_left: usize,
}

impl SegmentList {
    /// A fresh list whose first SID is active.
    pub fn new(sids: Vec<NodeId>) -> Self {
        assert!(!sids.is_empty(), "segment list needs at least one SID");
        let segments_left = sids.len() - 1;
        Self {
            sids,
            segments_left,
        }
    }

    pub fn active_index(&self) -> usize {
        self.sids.len() - 1 - self.segments_left.min(self.sids.len() - 1)
    }

    pub fn active(&self) -> NodeId {
        self.sids[self.active_index()]
    }

    pub fn egress(&self) -> NodeId {
        *self.sids.last().unwrap()
    }

    /// Number of SIDs before the egress.
    pub fn waypoints(&self) -> usize {
        self.sids.len() - 1
    }
}

/// Segment endpoint processing at `current`.
///
/// At the active SID with segments left, decrements `segments_left` and
/// returns the new active SID as next destination. At the active SID with
/// nothing left, returns `current` (local delivery). Anywhere else the
/// header is untouched and the active SID is the destination.
pub fn srv6_process(
    seglist: &SegmentList,
    current: NodeId,
) -> Result<(NodeId, SegmentList), Srv6Error> {
    let len = seglist.sids.len();
    if seglist.segments_left > len {
        return Err(Srv6Error::MalformedHeader {
            segments_left: seglist.segments_left,
            len,
        });
    }
    let mut out = seglist.clone();
    if out.segments_left == len {
        out.segments_left = len - 1;
    }
    let active = out.active();
    if current != active {
        return Ok((active, out));
    }
    if out.segments_left == 0 {
        return Ok((current, out));
    }
    out.segments_left -= 1;
    Ok((out.active(), out))
}
