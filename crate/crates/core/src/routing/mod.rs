//! Per-protocol route computation.
//!
//! All protocols derive their hops from destination-rooted shortest-path
//! trees ([`SpfTree`]), so under a shared weight map IPv4, IPv6, MPLS and
//! SRv6 agree hop for hop.

pub mod encap;
pub mod mpls;
pub mod spf;
pub mod srv6;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, TopologySnapshot};

pub use encap::{encapsulate, HeaderModel};
pub use mpls::{label_for, mpls_forward, LabelAction, LabelMap, MplsError};
pub use spf::{path_cost, spf, LinkWeights, OpCount, SpfTree};
pub use srv6::{srv6_process, SegmentList, Srv6Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Ipv4,
    Ipv6,
    Mpls,
    Srv6,
    Srv6Green,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [
        ProtocolKind::Ipv4,
        ProtocolKind::Ipv6,
        ProtocolKind::Mpls,
        ProtocolKind::Srv6,
        ProtocolKind::Srv6Green,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Ipv4 => "ipv4",
            ProtocolKind::Ipv6 => "ipv6",
            ProtocolKind::Mpls => "mpls",
            ProtocolKind::Srv6 => "srv6",
            ProtocolKind::Srv6Green => "srv6-green",
        }
    }

    /// Hop-by-hop protocols whose satellites run SPF themselves.
    pub fn is_hop_by_hop(self) -> bool {
        matches!(self, ProtocolKind::Ipv4 | ProtocolKind::Ipv6)
    }

    pub fn is_srv6(self) -> bool {
        matches!(self, ProtocolKind::Srv6 | ProtocolKind::Srv6Green)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown protocol '{s}' (expected ipv4|ipv6|mpls|srv6|srv6-green)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub hops: Vec<NodeId>,
    pub cost: f64,
}

/// Ground-station to ground-station demand to be routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
}

/// Destination-indexed next hops of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Fib {
    pub owner: NodeId,
    pub entries: Vec<Option<NodeId>>,
}

impl Fib {
    pub fn next_hop(&self, dst: NodeId) -> Option<NodeId> {
        self.entries.get(dst.index()).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Label-switched path of one flow. `path[1]` is the ingress that pushes
/// `ingress_label` (absent when the path has a single satellite).
#[derive(Debug, Clone, PartialEq)]
pub struct Lsp {
    pub path: Vec<NodeId>,
    pub ingress_label: Option<u32>,
}

impl Lsp {
    pub fn stack_depth(&self) -> usize {
        usize::from(self.ingress_label.is_some())
    }
}

/// Segment list plus the hop sequence realising each segment.
///
/// `segments[j]` runs from the previous SID (or the source) to `sids[j]`,
/// both ends included.
#[derive(Debug, Clone, PartialEq)]
pub struct SrPolicy {
    pub list: SegmentList,
    pub segments: Vec<Vec<NodeId>>,
}

impl SrPolicy {
    pub fn from_path(path: &[NodeId], waypoint_positions: &[usize]) -> Self {
        let mut sids = Vec::new();
        let mut segments = Vec::new();
        let mut from = 0;
        for &p in waypoint_positions.iter().chain(std::iter::once(&(path.len() - 1))) {
            if p <= from {
                continue;
            }
            sids.push(path[p]);
            segments.push(path[from..=p].to_vec());
            from = p;
        }
        if sids.is_empty() {
            sids.push(path[path.len() - 1]);
            segments.push(path.to_vec());
        }
        SrPolicy {
            list: SegmentList::new(sids),
            segments,
        }
    }

    /// Full hop sequence.
    pub fn hops(&self) -> Vec<NodeId> {
        let mut out = self.segments[0].clone();
        for s in &self.segments[1..] {
            out.extend_from_slice(&s[1..]);
        }
        out
    }

    /// Next hop of a packet at `current` heading for SID number `active`.
    pub fn next_hop(&self, active: usize, current: NodeId) -> Option<NodeId> {
        let seg = self.segments.get(active)?;
        let pos = seg.iter().position(|n| *n == current)?;
        seg.get(pos + 1).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("no route for flow {0}")]
    NoRoute(u32),
}

/// Routing artefacts of one protocol for one snapshot.
#[derive(Debug, Clone, Default)]
pub struct RouteSet {
    pub protocol: Option<ProtocolKind>,
    pub t_s: f64,
    /// IPv4/IPv6 only, one per node.
    pub fibs: Vec<Fib>,
    /// MPLS only, one per node.
    pub label_maps: Vec<LabelMap>,
    pub lsps: BTreeMap<u32, Lsp>,
    pub primary: BTreeMap<u32, SrPolicy>,
    pub backup: BTreeMap<u32, SrPolicy>,
    pub unroutable: Vec<u32>,
    /// Flows routed by the availability fallback (green only).
    pub fallback: Vec<u32>,
    /// Destinations reachable from each node over the underlay.
    pub reachable: Vec<u32>,
    /// Number of SPF runs performed by the controller.
    pub spf_runs: u32,
}

impl RouteSet {
    /// Hop sequence a packet of `flow` follows on the primary route.
    pub fn flow_hops(&self, flow: &FlowSpec) -> Option<Vec<NodeId>> {
        match self.protocol? {
            ProtocolKind::Ipv4 | ProtocolKind::Ipv6 => {
                let mut hops = vec![flow.src];
                let mut cur = flow.src;
                while cur != flow.dst {
                    cur = self.fibs[cur.index()].next_hop(flow.dst)?;
                    hops.push(cur);
                    if hops.len() > self.fibs.len() {
                        return None;
                    }
                }
                Some(hops)
            }
            ProtocolKind::Mpls => self.lsps.get(&flow.id).map(|l| l.path.clone()),
            ProtocolKind::Srv6 | ProtocolKind::Srv6Green => {
                self.primary.get(&flow.id).map(|p| p.hops())
            }
        }
    }

    /// Label-map entries installed at `node`, counting the ingress push.
    pub fn label_entries_at(&self, node: NodeId) -> usize {
        let own = self.label_maps.get(node.index()).map(|m| m.entries.len()).unwrap_or(0);
        let ftn = self
            .lsps
            .values()
            .filter(|l| l.ingress_label.is_some() && l.path.get(1) == Some(&node))
            .count();
        own + ftn
    }
}

/// Number of destinations reachable from every node, via connected
/// components of the usable graph.
pub fn reachable_counts(snapshot: &TopologySnapshot, weights: &LinkWeights) -> Vec<u32> {
    let n = snapshot.node_count;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, li) in snapshot.neighbors(NodeId(u as u16)) {
                if weights.usable(snapshot, li) && comp[v.index()] == usize::MAX {
                    comp[v.index()] = id;
                    stack.push(v.index());
                }
            }
        }
        sizes.push(size);
    }
    comp.iter().map(|&c| sizes[c] as u32 - 1).collect()
}

/// Cache of destination-rooted trees for one weight map.
pub struct TreeCache<'a> {
    snapshot: &'a TopologySnapshot,
    weights: &'a LinkWeights,
    trees: HashMap<NodeId, SpfTree>,
    pub runs: u32,
}

impl<'a> TreeCache<'a> {
    pub fn new(snapshot: &'a TopologySnapshot, weights: &'a LinkWeights) -> Self {
        Self {
            snapshot,
            weights,
            trees: HashMap::new(),
            runs: 0,
        }
    }

    pub fn tree(&mut self, root: NodeId) -> &SpfTree {
        let (snap, w) = (self.snapshot, self.weights);
        let runs = &mut self.runs;
        self.trees.entry(root).or_insert_with(|| {
            *runs += 1;
            SpfTree::build(snap, w, root)
        })
    }
}

/// Interior positions used as waypoints: one near the middle.
fn primary_waypoints(len: usize) -> Vec<usize> {
    if len < 3 {
        return Vec::new();
    }
    vec![len / 2]
}

/// Two interior positions at roughly one and two thirds of the path.
fn backup_waypoints(len: usize) -> Vec<usize> {
    if len < 3 {
        return Vec::new();
    }
    let last = len - 2;
    let a = ((len - 1) / 3).clamp(1, last);
    let b = (2 * (len - 1) / 3).clamp(1, last);
    if b > a {
        vec![a, b]
    } else {
        vec![a]
    }
}

/// Path that shares as few links as possible with `primary`, cheapest among
/// those. Primary links get a penalty larger than any simple path cost.
pub fn disjoint_backup(
    snapshot: &TopologySnapshot,
    weights: &LinkWeights,
    primary: &[NodeId],
    src: NodeId,
    dst: NodeId,
) -> Option<Vec<NodeId>> {
    let penalty = weights.total() + 1.0;
    let mut w = weights.clone();
    for pair in primary.windows(2) {
        if let Some(li) = snapshot.link_index(pair[0], pair[1]) {
            if w.0[li] > 0.0 {
                w.0[li] += penalty;
            }
        }
    }
    SpfTree::build(snapshot, &w, dst).walk(src)
}

/// Single-waypoint policy along `path`.
pub fn primary_policy(path: &[NodeId]) -> SrPolicy {
    SrPolicy::from_path(path, &primary_waypoints(path.len()))
}

/// Two-waypoint policy along the most link-disjoint alternative to
/// `primary`, or along `primary` itself when no other path exists.
pub fn backup_policy(snapshot: &TopologySnapshot, weights: &LinkWeights, primary: &[NodeId]) -> SrPolicy {
    let (src, dst) = (primary[0], primary[primary.len() - 1]);
    let backup = disjoint_backup(snapshot, weights, primary, src, dst).unwrap_or_else(|| primary.to_vec());
    SrPolicy::from_path(&backup, &backup_waypoints(backup.len()))
}

/// True when every hop of `policy` crosses a usable link.
pub fn policy_usable(snapshot: &TopologySnapshot, weights: &LinkWeights, policy: &SrPolicy) -> bool {
    policy.hops().windows(2).all(|w| {
        snapshot
            .link_index(w[0], w[1])
            .map(|li| weights.usable(snapshot, li))
            .unwrap_or(false)
    })
}

/// Primary and backup SR policies of one flow, or `None` when disconnected.
pub fn sr_policies(
    snapshot: &TopologySnapshot,
    weights: &LinkWeights,
    cache: &mut TreeCache<'_>,
    flow: &FlowSpec,
) -> Option<(SrPolicy, SrPolicy)> {
    let primary = cache.tree(flow.dst).walk(flow.src)?;
    cache.runs += 1;
    Some((primary_policy(&primary), backup_policy(snapshot, weights, &primary)))
}

/// Route computation that records disconnected flows instead of failing.
pub fn build_routeset(
    snapshot: &TopologySnapshot,
    protocol: ProtocolKind,
    flows: &[FlowSpec],
    weights: &LinkWeights,
) -> RouteSet {
    let mut rs = RouteSet {
        protocol: Some(protocol),
        t_s: snapshot.t_s,
        ..Default::default()
    };
    let n = snapshot.node_count;
    let mut cache = TreeCache::new(snapshot, weights);
    match protocol {
        ProtocolKind::Ipv4 | ProtocolKind::Ipv6 => {
            let mut fibs: Vec<Fib> = (0..n)
                .map(|u| Fib {
                    owner: NodeId(u as u16),
                    entries: vec![None; n],
                })
                .collect();
            for d in 0..n {
                let tree = SpfTree::build(snapshot, weights, NodeId(d as u16));
                for (u, fib) in fibs.iter_mut().enumerate() {
                    fib.entries[d] = tree.next_hop[u];
                }
            }
            rs.spf_runs = n as u32;
            rs.reachable = fibs.iter().map(|f| f.len() as u32).collect();
            for f in flows {
                if rs.fibs_path(&fibs, f).is_none() {
                    rs.unroutable.push(f.id);
                }
            }
            rs.fibs = fibs;
        }
        ProtocolKind::Mpls => {
            let mut maps: Vec<LabelMap> = (0..n).map(|u| LabelMap::new(NodeId(u as u16))).collect();
            for f in flows {
                let Some(path) = cache.tree(f.dst).walk(f.src) else {
                    rs.unroutable.push(f.id);
                    continue;
                };
                // path = [src gs, ingress, ..., egress, dst gs]
                let ingress_label = if path.len() > 3 {
                    Some(label_for(f.id, 2))
                } else {
                    None
                };
                for i in 2..path.len().saturating_sub(1) {
                    let action = if i + 1 == path.len() - 1 {
                        LabelAction::Pop { next_hop: path[i + 1] }
                    } else {
                        LabelAction::Swap {
                            out_label: label_for(f.id, i + 1),
                            next_hop: path[i + 1],
                        }
                    };
                    maps[path[i].index()].entries.insert(label_for(f.id, i), action);
                }
                rs.lsps.insert(f.id, Lsp { path, ingress_label });
            }
            rs.label_maps = maps;
            rs.reachable = reachable_counts(snapshot, weights);
            rs.spf_runs = cache.runs;
        }
        ProtocolKind::Srv6 | ProtocolKind::Srv6Green => {
            for f in flows {
                match sr_policies(snapshot, weights, &mut cache, f) {
                    Some((p, b)) => {
                        rs.primary.insert(f.id, p);
                        rs.backup.insert(f.id, b);
                    }
                    None => rs.unroutable.push(f.id),
                }
            }
            rs.reachable = reachable_counts(snapshot, weights);
            rs.spf_runs = cache.runs;
        }
    }
    rs
}

impl RouteSet {
    fn fibs_path(&self, fibs: &[Fib], f: &FlowSpec) -> Option<()> {
        let mut cur = f.src;
        let mut steps = 0;
        while cur != f.dst {
            cur = fibs[cur.index()].next_hop(f.dst)?;
            steps += 1;
            if steps > fibs.len() {
                return None;
            }
        }
        Some(())
    }
}

/// Computes the artefacts of `protocol`; fails on the first disconnected
/// flow.
pub fn compute_routeset(
    snapshot: &TopologySnapshot,
    protocol: ProtocolKind,
    flows: &[FlowSpec],
    weights: &LinkWeights,
) -> Result<RouteSet, RoutingError> {
    let rs = build_routeset(snapshot, protocol, flows, weights);
    match rs.unroutable.first() {
        Some(&id) => Err(RoutingError::NoRoute(id)),
        None => Ok(rs),
    }
}
