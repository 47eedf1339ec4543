//! Brute-force oracles and graph builders shared by the integration tests.

#![allow(dead_code)]

use leosim::green::{calculate_weights_counted, GreenParams};
use leosim::routing::{LinkWeights, OpCount, SpfTree};
use leosim::topology::{Link, LinkKind, LinkState, NodeResources};
use leosim::{NodeId, TopologySnapshot};
use rand::Rng;

pub fn snapshot(n: usize, edges: &[(u16, u16)], cpu: &[f64]) -> TopologySnapshot {
    let links = edges
        .iter()
        .map(|&(a, b)| Link {
            a: NodeId(a),
            b: NodeId(b),
            kind: LinkKind::Isl,
            capacity_bps: 20e6,
            state: LinkState::Active,
            length_km: 1000.0,
        })
        .collect();
    let resources = cpu
        .iter()
        .map(|&c| NodeResources {
            cpu_pct: c,
            ..NodeResources::default()
        })
        .collect();
    TopologySnapshot::from_links(0.0, n, n, links, resources)
}

/// Random simple graph on `n` nodes with edge probability `p`, random CPU
/// readings and random positive weights.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> (TopologySnapshot, LinkWeights) {
    let mut edges = Vec::new();
    for a in 0..n as u16 {
        for b in a + 1..n as u16 {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let cpu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
    let s = snapshot(n, &edges, &cpu);
    let w = LinkWeights((0..s.links.len()).map(|_| rng.gen_range(1..=10) as f64).collect());
    (s, w)
}

/// Every simple path from `src` to `dst` over usable links.
pub fn simple_paths(s: &TopologySnapshot, w: &LinkWeights, src: NodeId, dst: NodeId) -> Vec<Vec<NodeId>> {
    fn go(
        s: &TopologySnapshot,
        w: &LinkWeights,
        dst: NodeId,
        path: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let u = *path.last().unwrap();
        if u == dst {
            out.push(path.clone());
            return;
        }
        for &(v, li) in s.neighbors(u) {
            if w.usable(s, li) && !path.contains(&v) {
                path.push(v);
                go(s, w, dst, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(s, w, dst, &mut vec![src], &mut out);
    out
}

pub fn cost(s: &TopologySnapshot, w: &LinkWeights, hops: &[NodeId]) -> f64 {
    hops.windows(2).map(|x| w.0[s.link_index(x[0], x[1]).unwrap()]).sum()
}

pub fn brute_min_cost(s: &TopologySnapshot, w: &LinkWeights, src: NodeId, dst: NodeId) -> Option<f64> {
    simple_paths(s, w, src, dst)
        .iter()
        .map(|p| cost(s, w, p))
        .min_by(|a, b| a.total_cmp(b))
}

pub fn shared_links(a: &[NodeId], b: &[NodeId]) -> usize {
    let key = |x: NodeId, y: NodeId| if x < y { (x, y) } else { (y, x) };
    let la: Vec<_> = a.windows(2).map(|p| key(p[0], p[1])).collect();
    b.windows(2).filter(|p| la.contains(&key(p[0], p[1]))).count()
}

/// Torus of `planes x slots` nodes with four neighbours each, the shape
/// of one +Grid shell.
pub fn torus(planes: usize, slots: usize, cpu: impl Fn(usize) -> f64) -> TopologySnapshot {
    let id = |p: usize, k: usize| (p * slots + k) as u16;
    let mut edges = Vec::new();
    for p in 0..planes {
        for k in 0..slots {
            edges.push((id(p, k), id(p, (k + 1) % slots)));
            edges.push((id(p, k), id((p + 1) % planes, k)));
        }
    }
    let edges: Vec<(u16, u16)> = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
    let n = planes * slots;
    let cpu: Vec<f64> = (0..n).map(cpu).collect();
    snapshot(n, &edges, &cpu)
}

/// Operations of one weight calculation plus one SPF divided by
/// `(M + N) log2 N`.
pub fn normalised_ops(s: &TopologySnapshot) -> f64 {
    let mut ops = OpCount::default();
    let wl = calculate_weights_counted(s, &GreenParams::default(), &mut ops);
    SpfTree::build_counted(s, &wl.weights, NodeId(0), &mut ops);
    let (m, n) = (s.links.len() as f64, s.node_count as f64);
    ops.total() as f64 / ((m + n) * n.log2())
}
