//! CPU-driven link weighting for green traffic engineering.
//!
//! Busy but not overloaded links get low weights so traffic consolidates on
//! equipment that is already awake. Links touching a node above the
//! utilisation threshold are pruned. Satellites that stay below the idle
//! threshold long enough are sent to low-power mode.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::routing::{
    backup_policy, primary_policy, reachable_counts, sr_policies, FlowSpec,
    LinkWeights, OpCount, ProtocolKind, RouteSet, SpfTree, SrPolicy, TreeCache,
};
use crate::topology::{NodeId, TopologySnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    pub cpu_th_pct: f64,
    pub idle_cpu_pct: f64,
    pub idle_time_s: f64,
    pub baseline: f64,
    /// Fraction of a placed flow's estimated CPU demand added to the load
    /// seen by later placements in the same recomputation.
    pub placement_gain: f64,
}

impl Default for GreenParams {
    fn default() -> Self {
        Self {
            cpu_th_pct: 80.0,
            idle_cpu_pct: 10.0,
            idle_time_s: 600.0,
            baseline: 100.0,
            placement_gain: 0.5,
        }
    }
}

impl GreenParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.idle_cpu_pct > 0.0) {
            v.push(format!("green.idle_cpu_pct = {} must be > 0", self.idle_cpu_pct));
        }
        if !(self.idle_cpu_pct < self.cpu_th_pct) {
            v.push(format!(
                "green.idle_cpu_pct = {} must be < green.cpu_th_pct = {}",
                self.idle_cpu_pct, self.cpu_th_pct
            ));
        }
        if !(self.cpu_th_pct <= 100.0) {
            v.push(format!("green.cpu_th_pct = {} out of range (0, 100]", self.cpu_th_pct));
        }
        if !(self.baseline >= 100.0) {
            v.push(format!("green.baseline = {} must be >= 100", self.baseline));
        }
        if !(0.0..=1.0).contains(&self.placement_gain) {
            v.push(format!("green.placement_gain = {} out of range [0, 1]", self.placement_gain));
        }
        if !(self.idle_time_s > 0.0) {
            v.push(format!("green.idle_time_s = {} must be > 0", self.idle_time_s));
        }
        v
    }
}

/// Smallest weight handed to a non-pruned link; zero is reserved for pruning.
const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLinks {
    pub weights: LinkWeights,
    pub overloaded: BTreeSet<NodeId>,
}

/// Weight of one link from its endpoint loads: pruned when the busier
/// endpoint exceeds the threshold, otherwise baseline minus that load.
pub fn link_weight(cpu_a: f64, cpu_b: f64, params: &GreenParams) -> f64 {
    let busiest = cpu_a.max(cpu_b);
    if busiest > params.cpu_th_pct {
        0.0
    } else {
        (params.baseline - busiest).max(MIN_WEIGHT)
    }
}

pub fn calculate_weights(snapshot: &TopologySnapshot, params: &GreenParams) -> WeightedLinks {
    calculate_weights_counted(snapshot, params, &mut OpCount::default())
}

pub fn calculate_weights_counted(
    snapshot: &TopologySnapshot,
    params: &GreenParams,
    ops: &mut OpCount,
) -> WeightedLinks {
    let mut weights = vec![0.0; snapshot.links.len()];
    let mut overloaded = BTreeSet::new();
    for (i, l) in snapshot.links.iter().enumerate() {
        ops.edge_scans += 1;
        if !l.is_active() {
            continue;
        }
        let (ca, cb) = (snapshot.cpu(l.a), snapshot.cpu(l.b));
        for (n, c) in [(l.a, ca), (l.b, cb)] {
            if c > params.cpu_th_pct {
                overloaded.insert(n);
            }
        }
        weights[i] = link_weight(ca, cb, params);
    }
    WeightedLinks {
        weights: LinkWeights(weights),
        overloaded,
    }
}

/// Start of the current below-threshold run of every node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdleTracker {
    pub below_since: Vec<Option<f64>>,
}

impl IdleTracker {
    pub fn new(nodes: usize) -> Self {
        Self {
            below_since: vec![None; nodes],
        }
    }

    pub fn reset(&mut self, n: NodeId) {
        self.below_since[n.index()] = None;
    }
}

/// Feeds one set of readings at time `t` and returns the satellites that
/// have now been idle for at least `idle_time_s`. Ground stations and
/// nodes already in low-power mode are never returned.
pub fn update_idle(
    tracker: &mut IdleTracker,
    snapshot: &TopologySnapshot,
    t: f64,
    params: &GreenParams,
) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for (i, r) in snapshot.resources.iter().enumerate() {
        let n = NodeId(i as u16);
        if !snapshot.is_satellite(n) || r.low_power {
            continue;
        }
        if r.cpu_pct < params.idle_cpu_pct {
            let since = *tracker.below_since[i].get_or_insert(t);
            if t - since >= params.idle_time_s {
                out.insert(n);
            }
        } else {
            tracker.below_since[i] = None;
        }
    }
    out
}

/// Outcome of one green route computation.
#[derive(Debug, Clone)]
pub struct GreenRoutes {
    pub routes: RouteSet,
    pub weighted: WeightedLinks,
    /// Low-power nodes the fallback needs awake.
    pub woken: BTreeSet<NodeId>,
}

fn unit_without_overloaded(snapshot: &TopologySnapshot, overloaded: &BTreeSet<NodeId>) -> LinkWeights {
    LinkWeights(
        snapshot
            .links
            .iter()
            .map(|l| {
                if overloaded.contains(&l.a) || overloaded.contains(&l.b) {
                    0.0
                } else {
                    1.0
                }
            })
            .collect(),
    )
}

/// What the controller knows beyond the snapshot when placing flows.
#[derive(Debug, Clone, Copy, Default)]
pub struct Placement<'a> {
    /// Installed routes, whose estimated demand is already part of the
    /// measured load.
    pub prior: Option<&'a RouteSet>,
    /// CPU percent each flow adds to every satellite it crosses, indexed by
    /// flow id.
    pub demand_pct: &'a [f64],
}

/// SRv6 routes over green weights, computed from scratch.
pub fn green_routes(snapshot: &TopologySnapshot, flows: &[FlowSpec], params: &GreenParams) -> GreenRoutes {
    green_routes_with(snapshot, flows, params, Placement::default())
}

/// SRv6 routes over green weights.
///
/// Flows are placed one at a time. Each placement adds the
/// flow's demand to the load seen by later flows, and a satellite that
/// the addition would push over the threshold is pruned for that flow.
/// Flows that the pruned graph disconnects fall back to unit weights:
/// first with sleeping nodes allowed to wake but overloaded nodes still
/// avoided, then over every visible link.
pub fn green_routes_with(
    snapshot: &TopologySnapshot,
    flows: &[FlowSpec],
    params: &GreenParams,
    placement: Placement<'_>,
) -> GreenRoutes {
    let weighted = calculate_weights(snapshot, params);
    let mut rs = RouteSet {
        protocol: Some(ProtocolKind::Srv6Green),
        t_s: snapshot.t_s,
        ..Default::default()
    };
    let demand_of = |id: u32| placement.demand_pct.get(id as usize).copied().unwrap_or(0.0);
    // Measured load minus the estimated share of the installed flows, which
    // are all placed again below.
    let mut load: Vec<f64> = snapshot.resources.iter().map(|r| r.cpu_pct).collect();
    if let Some(prior) = placement.prior {
        for (&id, p) in &prior.primary {
            for n in p.hops() {
                if snapshot.is_satellite(n) {
                    load[n.index()] = (load[n.index()] - demand_of(id)).max(0.0);
                }
            }
        }
    }
    let mut pending = Vec::new();
    for &f in flows {
        let demand = demand_of(f.id) * params.placement_gain;
        let projected = |n: NodeId| {
            if snapshot.is_satellite(n) {
                load[n.index()] + demand
            } else {
                load[n.index()]
            }
        };
        let w = LinkWeights(
            snapshot
                .links
                .iter()
                .zip(&weighted.weights.0)
                .map(|(l, &w0)| {
                    if w0 == 0.0 {
                        0.0
                    } else {
                        link_weight(projected(l.a), projected(l.b), params)
                    }
                })
                .collect(),
        );
        rs.spf_runs += 2;
        match SpfTree::build(snapshot, &w, f.dst).walk(f.src) {
            Some(path) => {
                for &n in &path {
                    if snapshot.is_satellite(n) {
                        load[n.index()] += demand;
                    }
                }
                rs.backup.insert(f.id, backup_policy(snapshot, &w, &path));
                rs.primary.insert(f.id, primary_policy(&path));
            }
            None => pending.push(f),
        }
    }
    let mut woken = BTreeSet::new();
    if !pending.is_empty() {
        let awake = snapshot.woken();
        let tiers = [
            unit_without_overloaded(&awake, &weighted.overloaded),
            LinkWeights::unit(&awake),
        ];
        for w in &tiers {
            let mut cache = TreeCache::new(&awake, w);
            let mut still = Vec::new();
            for f in pending {
                match sr_policies(&awake, w, &mut cache, &f) {
                    Some((p, b)) => {
                        for pol in [&p, &b] {
                            for n in pol.hops() {
                                if snapshot.resources[n.index()].low_power {
                                    woken.insert(n);
                                }
                            }
                        }
                        rs.fallback.push(f.id);
                        rs.primary.insert(f.id, p);
                        rs.backup.insert(f.id, b);
                    }
                    None => still.push(f),
                }
            }
            rs.spf_runs += cache.runs;
            pending = still;
        }
        rs.unroutable = pending.iter().map(|f| f.id).collect();
    }
    // Sleeping satellites keep their routing state.
    let awake = snapshot.woken();
    rs.reachable = reachable_counts(&awake, &LinkWeights::unit(&awake));
    GreenRoutes {
        routes: rs,
        weighted,
        woken,
    }
}

/// Number of policy hops that cross a link with an endpoint above the
/// threshold in `snapshot`.
pub fn audit_pruning(routes: &RouteSet, snapshot: &TopologySnapshot, params: &GreenParams) -> usize {
    let bad = |pol: &SrPolicy| {
        pol.hops()
            .windows(2)
            .filter(|w| snapshot.cpu(w[0]) > params.cpu_th_pct || snapshot.cpu(w[1]) > params.cpu_th_pct)
            .count()
    };
    routes.primary.values().map(bad).sum::<usize>() + routes.backup.values().map(bad).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, LinkKind, LinkState, NodeResources};

    fn snap(n: usize, edges: &[(u16, u16)], cpu: &[f64]) -> TopologySnapshot {
        let links = edges
            .iter()
            .map(|&(a, b)| Link {
                a: NodeId(a),
                b: NodeId(b),
                kind: LinkKind::Isl,
                capacity_bps: 20e6,
                state: LinkState::Active,
                length_km: 1.0,
            })
            .collect();
        let res = cpu
            .iter()
            .map(|&c| NodeResources {
                cpu_pct: c,
                ..Default::default()
            })
            .collect();
        TopologySnapshot::from_links(0.0, n, n, links, res)
    }

    #[test]
    fn weight_formula() {
        let p = GreenParams::default();
        assert_eq!(link_weight(30.0, 10.0, &p), 70.0);
        assert_eq!(link_weight(85.0, 10.0, &p), 0.0);
        assert_eq!(link_weight(80.0, 10.0, &p), 20.0);
    }

    #[test]
    fn overloaded_endpoints_collected() {
        let s = snap(3, &[(0, 1), (1, 2)], &[85.0, 20.0, 90.0]);
        let w = calculate_weights(&s, &GreenParams::default());
        assert_eq!(w.weights.0, vec![0.0, 0.0]);
        assert_eq!(w.overloaded, [NodeId(0), NodeId(2)].into_iter().collect());
    }

    /// 0 = source, 4 = destination; 0-1-4 through a busy node (50%), 0-2-4
    /// through an idle one (2%). Hand-computed weights: 50+50 vs 98+98.
    #[test]
    fn prefers_busy_path() {
        let s = snap(5, &[(0, 2), (2, 4), (0, 1), (1, 4), (3, 4)], &[0.0, 50.0, 2.0, 0.0, 0.0]);
        let f = [FlowSpec {
            id: 0,
            src: NodeId(0),
            dst: NodeId(4),
        }];
        let g = green_routes(&s, &f, &GreenParams::default());
        assert_eq!(g.routes.primary[&0].hops(), vec![NodeId(0), NodeId(1), NodeId(4)]);
        assert!(g.routes.fallback.is_empty());
    }

    #[test]
    fn overloaded_middle_falls_back() {
        let s = snap(3, &[(0, 1), (1, 2)], &[0.0, 95.0, 0.0]);
        let f = [FlowSpec {
            id: 7,
            src: NodeId(0),
            dst: NodeId(2),
        }];
        let g = green_routes(&s, &f, &GreenParams::default());
        assert_eq!(g.routes.fallback, vec![7]);
        assert_eq!(g.routes.primary[&7].hops().len(), 3);
        assert!(g.routes.unroutable.is_empty());
    }

    #[test]
    fn uniform_load_matches_unit_weights() {
        let edges = [(0, 1), (1, 2), (2, 5), (0, 3), (3, 4), (4, 5), (1, 4)];
        let s = snap(6, &edges, &[37.0; 6]);
        let f = [FlowSpec {
            id: 0,
            src: NodeId(0),
            dst: NodeId(5),
        }];
        let g = green_routes(&s, &f, &GreenParams::default());
        let unit = crate::routing::compute_routeset(
            &s,
            ProtocolKind::Srv6,
            &f,
            &LinkWeights::unit(&s),
        )
        .unwrap();
        assert_eq!(g.routes.primary[&0].hops(), unit.primary[&0].hops());
    }

    #[test]
    fn idle_transition_after_ten_minutes() {
        let mut s = snap(2, &[(0, 1)], &[50.0, 50.0]);
        let p = GreenParams::default();
        let mut tr = IdleTracker::new(2);
        let mut first = None;
        for step in 0..=100 {
            let t = step as f64 * 10.0;
            s.resources[0].cpu_pct = if t >= 100.0 { 5.0 } else { 50.0 };
            if !update_idle(&mut tr, &s, t, &p).is_empty() && first.is_none() {
                first = Some(t);
            }
        }
        assert_eq!(first, Some(700.0));
    }

    #[test]
    fn idle_timer_resets() {
        let mut s = snap(1, &[], &[9.0]);
        let p = GreenParams::default();
        let mut tr = IdleTracker::new(1);
        for step in 0..=59 {
            assert!(update_idle(&mut tr, &s, step as f64 * 10.0, &p).is_empty());
        }
        s.resources[0].cpu_pct = 11.0;
        assert!(update_idle(&mut tr, &s, 600.0, &p).is_empty());
        assert_eq!(tr.below_since[0], None);
        s.resources[0].cpu_pct = 9.0;
        assert!(update_idle(&mut tr, &s, 610.0, &p).is_empty());
    }

    #[test]
    fn busy_node_never_sleeps() {
        let s = snap(1, &[], &[40.0]);
        let mut tr = IdleTracker::new(1);
        for step in 0..400 {
            assert!(update_idle(&mut tr, &s, step as f64 * 10.0, &GreenParams::default()).is_empty());
        }
    }

    #[test]
    fn params_validation() {
        assert!(GreenParams::default().violations().is_empty());
        let p = GreenParams {
            cpu_th_pct: 105.0,
            ..Default::default()
        };
        assert_eq!(p.violations().len(), 1);
    }
}
