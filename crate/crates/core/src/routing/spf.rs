//! Dijkstra over a snapshot with per-link weights.
//!
//! A weight of exactly zero marks a pruned link; it is skipped, never
//! treated as free. Links that are not `Active` are always skipped.
//!
//! Ties between equal-cost alternatives are broken towards the smallest
//! next-hop id, which makes every protocol that shares a weight map pick the
//! same hops.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::topology::{NodeId, TopologySnapshot};

use super::Path;

/// Per-link weights, indexed like `TopologySnapshot::links`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWeights(pub Vec<f64>);

impl LinkWeights {
    pub fn unit(snapshot: &TopologySnapshot) -> Self {
        LinkWeights(vec![1.0; snapshot.links.len()])
    }

    pub fn usable(&self, snapshot: &TopologySnapshot, link: usize) -> bool {
        snapshot.links[link].is_active() && self.0[link] > 0.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().filter(|w| **w > 0.0).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Operation counters for the complexity budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub edge_scans: u64,
    pub heap_ops: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.edge_scans + self.heap_ops
    }
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Shortest-path tree towards (equivalently, from) `root`.
///
/// `next_hop[u]` is the smallest-id neighbour of `u` on some minimum-cost
/// path from `u` to `root`.
#[derive(Debug, Clone)]
pub struct SpfTree {
    pub root: NodeId,
    pub dist: Vec<f64>,
    pub next_hop: Vec<Option<NodeId>>,
}

impl SpfTree {
    pub fn build(snapshot: &TopologySnapshot, weights: &LinkWeights, root: NodeId) -> Self {
        Self::build_counted(snapshot, weights, root, &mut OpCount::default())
    }

    pub fn build_counted(
        snapshot: &TopologySnapshot,
        weights: &LinkWeights,
        root: NodeId,
        ops: &mut OpCount,
    ) -> Self {
        let n = snapshot.node_count;
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[root.index()] = 0.0;
        heap.push(Reverse((Dist(0.0), root)));
        ops.heap_ops += 1;
        while let Some(Reverse((Dist(d), u))) = heap.pop() {
            ops.heap_ops += 1;
            if done[u.index()] {
                continue;
            }
            done[u.index()] = true;
            for &(v, li) in snapshot.neighbors(u) {
                ops.edge_scans += 1;
                if !weights.usable(snapshot, li) {
                    continue;
                }
                let nd = d + weights.0[li];
                if nd < dist[v.index()] {
                    dist[v.index()] = nd;
                    heap.push(Reverse((Dist(nd), v)));
                    ops.heap_ops += 1;
                }
            }
        }
        let mut next_hop = vec![None; n];
        for u in 0..n {
            if u == root.index() || !dist[u].is_finite() {
                continue;
            }
            for &(v, li) in snapshot.neighbors(NodeId(u as u16)) {
                ops.edge_scans += 1;
                if !weights.usable(snapshot, li) || !dist[v.index()].is_finite() {
                    continue;
                }
                if same_cost(dist[v.index()] + weights.0[li], dist[u]) && dist[v.index()] < dist[u] {
                    next_hop[u] = Some(v);
                    break;
                }
            }
        }
        SpfTree {
            root,
            dist,
            next_hop,
        }
    }

    pub fn reachable(&self, n: NodeId) -> bool {
        self.dist[n.index()].is_finite()
    }

    /// Hops from `from` to the root following next hops.
    pub fn walk(&self, from: NodeId) -> Option<Vec<NodeId>> {
        if !self.reachable(from) {
            return None;
        }
        let mut hops = vec![from];
        let mut cur = from;
        while cur != self.root {
            cur = self.next_hop[cur.index()]?;
            hops.push(cur);
            if hops.len() > self.dist.len() {
                return None;
            }
        }
        Some(hops)
    }

    pub fn path_from(&self, from: NodeId) -> Option<Path> {
        self.walk(from).map(|hops| Path {
            hops,
            cost: self.dist[from.index()],
        })
    }
}

/// Minimum-cost paths from `src` to every reachable destination.
pub fn spf(
    snapshot: &TopologySnapshot,
    weights: &LinkWeights,
    src: NodeId,
) -> BTreeMap<NodeId, Path> {
    let tree = SpfTree::build(snapshot, weights, src);
    let mut out = BTreeMap::new();
    for d in 0..snapshot.node_count {
        let d = NodeId(d as u16);
        if let Some(mut hops) = tree.walk(d) {
            hops.reverse();
            out.insert(
                d,
                Path {
                    hops,
                    cost: tree.dist[d.index()],
                },
            );
        }
    }
    out
}

/// Sum of link weights along `hops`, or `None` if two consecutive hops are
/// not joined by a usable link.
pub fn path_cost(snapshot: &TopologySnapshot, weights: &LinkWeights, hops: &[NodeId]) -> Option<f64> {
    let mut c = 0.0;
    for w in hops.windows(2) {
        let li = snapshot.link_index(w[0], w[1])?;
        if !weights.usable(snapshot, li) {
            return None;
        }
        c += weights.0[li];
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, LinkKind, LinkState, NodeResources};

    fn graph(n: usize, edges: &[(u16, u16, f64)]) -> (TopologySnapshot, LinkWeights) {
        let links: Vec<Link> = edges
            .iter()
            .map(|&(a, b, _)| Link {
                a: NodeId(a),
                b: NodeId(b),
                kind: LinkKind::Isl,
                capacity_bps: 20e6,
                state: LinkState::Active,
                length_km: 1.0,
            })
            .collect();
        let snap = TopologySnapshot::from_links(0.0, n, n, links, vec![NodeResources::default(); n]);
        let mut w = vec![0.0; snap.links.len()];
        for &(a, b, c) in edges {
            w[snap.link_index(NodeId(a), NodeId(b)).unwrap()] = c;
        }
        (snap, LinkWeights(w))
    }

    #[test]
    fn two_nodes() {
        let (s, w) = graph(2, &[(0, 1, 5.0)]);
        let p = &spf(&s, &w, NodeId(0))[&NodeId(1)];
        assert_eq!(p.hops, vec![NodeId(0), NodeId(1)]);
        assert_eq!(p.cost, 5.0);
    }

    #[test]
    fn triangle_prefers_two_cheap_hops() {
        let (s, w) = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let p = &spf(&s, &w, NodeId(0))[&NodeId(2)];
        assert_eq!(p.hops, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(p.cost, 2.0);
    }

    #[test]
    fn zero_weight_is_pruned() {
        let (s, w) = graph(3, &[(0, 1, 0.0), (1, 2, 1.0)]);
        let r = spf(&s, &w, NodeId(0));
        assert!(!r.contains_key(&NodeId(1)));
        assert!(!r.contains_key(&NodeId(2)));
    }

    #[test]
    fn tie_break_smallest_next_hop() {
        // 0 -> {1,2} -> 3, both cost 2
        let (s, w) = graph(4, &[(0, 2, 1.0), (0, 1, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        let t = SpfTree::build(&s, &w, NodeId(3));
        assert_eq!(t.next_hop[0], Some(NodeId(1)));
        assert_eq!(t.walk(NodeId(0)).unwrap(), vec![NodeId(0), NodeId(1), NodeId(3)]);
    }

    #[test]
    fn inactive_links_skipped() {
        let (mut s, w) = graph(2, &[(0, 1, 1.0)]);
        s.links[0].state = LinkState::Inactive;
        assert!(spf(&s, &w, NodeId(0)).get(&NodeId(1)).is_none());
    }
}
