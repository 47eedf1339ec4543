//! Deterministic discrete-event packet simulation.
//!
//! Every refresh period the topology is rebuilt, routes are recomputed and
//! one metrics sample per node is taken. Between refreshes packets move hop
//! by hop through per-satellite CPU servers and per-link byte queues.
//!
//! Events are ordered by `(time, kind, insertion sequence)`, so a run is a
//! pure function of its inputs.

pub mod queue;
pub mod traffic;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::rc::Rc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constellation::{visible, SPEED_OF_LIGHT_KM_S};
use crate::green::{audit_pruning, green_routes_with, update_idle, IdleTracker, Placement};
use crate::metrics::{aggregate, DropReason, HeaderCount, Outcomes, RunSummary, Sample, Trace};
use crate::routing::encap::{encapsulate, srv6_header_bytes};
use crate::routing::{
    build_routeset, mpls_forward, srv6_process, FlowSpec, LabelAction, LinkWeights, ProtocolKind,
    RouteSet, SegmentList, SpfTree, SrPolicy,
};
use crate::scenario::{Scenario, ScenarioInvalid, Violation};
use crate::topology::{build_snapshot, Constellation, LinkKind, LinkState, NodeId, NodeResources, TopologySnapshot};

pub use queue::{queue_admit, Admission, CpuServer, LinkQueue};
pub use traffic::{generate_traffic, make_flows, CbrSchedule, Flow};

/// Packets looping longer than this are discarded as unroutable.
pub const MAX_HOPS: u16 = 64;

/// Synthetic per-node processing cost, in CPU units.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCostModel {
    pub c_lookup_v4: f64,
    pub c_lookup_v6: f64,
    pub c_mpls_swap: f64,
    /// SRv6 processing at a segment endpoint.
    pub c_srv6_end: f64,
    /// SRv6 forwarding between segment endpoints.
    pub c_srv6_transit: f64,
    /// Label push at the MPLS ingress.
    pub c_encap: f64,
    pub c_spf_per_unit: f64,
    pub capacity_units_per_s: f64,
    pub window_s: f64,
    /// Housekeeping load of an awake satellite; zero in low-power mode.
    pub idle_units_per_s: f64,
    /// Capacity of one ground controller.
    pub controller_units_per_s: f64,
}

impl Default for NodeCostModel {
    fn default() -> Self {
        Self {
            c_lookup_v4: 1.0,
            c_lookup_v6: 1.0,
            c_mpls_swap: 0.6,
            c_srv6_end: 0.8,
            c_srv6_transit: 0.6,
            c_encap: 2.0,
            c_spf_per_unit: 6.0,
            capacity_units_per_s: 7500.0,
            window_s: 10.0,
            idle_units_per_s: 375.0,
            controller_units_per_s: 1e6,
        }
    }
}

impl NodeCostModel {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (k, x) in [
            ("c_lookup_v4", self.c_lookup_v4),
            ("c_lookup_v6", self.c_lookup_v6),
            ("c_mpls_swap", self.c_mpls_swap),
            ("c_srv6_end", self.c_srv6_end),
            ("c_srv6_transit", self.c_srv6_transit),
            ("c_encap", self.c_encap),
            ("c_spf_per_unit", self.c_spf_per_unit),
            ("capacity_units_per_s", self.capacity_units_per_s),
            ("window_s", self.window_s),
            ("controller_units_per_s", self.controller_units_per_s),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("cost.{k} = {x} must be positive"));
            }
        }
        if !(self.idle_units_per_s >= 0.0 && self.idle_units_per_s < self.capacity_units_per_s) {
            v.push(format!(
                "cost.idle_units_per_s = {} must be in [0, capacity_units_per_s)",
                self.idle_units_per_s
            ));
        }
        v
    }

    /// One SPF run over `links` active links and `nodes` nodes.
    pub fn spf_units(&self, links: usize, nodes: usize) -> f64 {
        self.c_spf_per_unit * (links + nodes) as f64 * (nodes.max(2) as f64).log2()
    }

    pub fn cpu_pct(&self, units: f64) -> f64 {
        (100.0 * units / (self.window_s * self.capacity_units_per_s)).min(100.0)
    }

    /// Units for one packet at satellite `node` under `protocol` when
    /// the packet is processed as `role`.
    pub fn per_packet(&self, protocol: ProtocolKind, role: HopRole) -> f64 {
        match (protocol, role) {
            (ProtocolKind::Ipv4, _) => self.c_lookup_v4,
            (ProtocolKind::Ipv6, _) => self.c_lookup_v6,
            (ProtocolKind::Mpls, HopRole::Ingress) => self.c_encap,
            (ProtocolKind::Mpls, HopRole::Lookup) => self.c_lookup_v6,
            (ProtocolKind::Mpls, _) => self.c_mpls_swap,
            (_, HopRole::SegmentEndpoint) => self.c_srv6_end,
            (_, _) => self.c_srv6_transit,
        }
    }
}

/// What a satellite does to a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopRole {
    /// Plain IP lookup.
    Lookup,
    /// MPLS label push.
    Ingress,
    /// Label swap/pop or SRv6 transit.
    Transit,
    SegmentEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub packet_id: u64,
    pub flow_id: u32,
    pub created_s: f64,
    pub header_bytes: u32,
    pub payload_bytes: u32,
    pub seglist: Option<SegmentList>,
    /// Hops of each segment, shared by every packet of the policy.
    pub policy: Option<Rc<SrPolicy>>,
    pub label: Option<u32>,
    pub current_node: NodeId,
    pub deadline_s: f64,
    pub hops: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// A packet leaves its source ground station.
    PacketArrival,
    /// A packet reaches a node.
    PacketForward,
    TopologyRefresh,
    IdleScan,
    RouteRecompute,
    MetricsSample,
}

#[derive(Debug, Clone)]
pub enum EventPayload {
    Emit { flow: u32, index: u64 },
    Packet(Packet),
    Tick,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub t_s: f64,
    pub kind: EventKind,
    pub seq: u64,
    pub payload: EventPayload,
}

impl Event {
    fn key(&self) -> (f64, EventKind, u64) {
        (self.t_s, self.kind, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

/// Result of handing a packet to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forwarded {
    Delivered,
    Progressed { next: NodeId, depart_s: f64, arrive_s: f64 },
    Dropped(DropReason),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    ScenarioInvalid(#[from] ScenarioInvalid),
}

/// Runs one simulation and summarises it.
pub fn run(scenario: &Scenario, protocol: ProtocolKind, load_fraction: f64, seed: u64) -> Result<RunSummary, EngineError> {
    Ok(aggregate(&simulate(scenario, protocol, load_fraction, seed)?))
}

/// Runs one simulation and returns its full trace.
pub fn simulate(scenario: &Scenario, protocol: ProtocolKind, load_fraction: f64, seed: u64) -> Result<Trace, EngineError> {
    let mut v = scenario.violations();
    if !(0.0..=1.0).contains(&load_fraction) {
        v.push(Violation {
            line: None,
            key: "load".into(),
            message: format!("{load_fraction} outside [0, 1]"),
        });
    }
    if !v.is_empty() {
        return Err(ScenarioInvalid(v).into());
    }
    let mut e = Engine::new(scenario, protocol, load_fraction, seed);
    e.run();
    Ok(e.finish())
}

struct Engine<'s> {
    sc: &'s Scenario,
    protocol: ProtocolKind,
    con: Constellation,
    n: usize,
    flows: Vec<Flow>,
    specs: Vec<FlowSpec>,
    /// Controller estimate of the CPU percent a flow adds per satellite.
    demand_pct: Vec<f64>,
    /// Units per second taken by on-board SPF until the next refresh.
    spf_rate: f64,
    schedules: Vec<Option<CbrSchedule>>,
    batch: f64,
    nominal_header: u32,
    queue_bytes: f64,
    snapshot: TopologySnapshot,
    /// Dense `u * n + v` lookup of link indices.
    link_at: Vec<u32>,
    down_at: Vec<f64>,
    /// Installed route sets, oldest first; hop-by-hop protocols forward on
    /// the oldest.
    history: VecDeque<RouteSet>,
    policies: Vec<Option<(Rc<SrPolicy>, Rc<SrPolicy>)>>,
    cpu: Vec<CpuServer>,
    units: Vec<f64>,
    cpu_pct: Vec<f64>,
    mem: Vec<f64>,
    tx: Vec<LinkQueue>,
    low_power: Vec<bool>,
    tracker: IdleTracker,
    heap: BinaryHeap<Event>,
    seq: u64,
    next_packet: u64,
    headers: BTreeMap<(u32, u32), u64>,
    trace: Trace,
}

impl<'s> Engine<'s> {
    fn new(sc: &'s Scenario, protocol: ProtocolKind, load: f64, seed: u64) -> Self {
        let con = sc.constellation();
        let n = con.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let station = |name: &str| sc.ground_stations.iter().position(|g| g.name == name).expect("validated pair");
        let mut pairs: Vec<(usize, usize)> = sc.traffic.pairs.iter().map(|(a, b)| (station(a), station(b))).collect();
        if pairs.is_empty() {
            pairs = traffic::draw_pairs(con.ground.len(), sc.traffic.flow_count, &mut rng);
        }
        // Rates are set against the unit-weight routes of the initial
        // topology so every protocol is offered the same load.
        let sat_count = con.sat_count();
        let first = build_snapshot(&con, 0.0, None, vec![NodeResources::default(); n], sc.link_capacity_bps);
        let unit = LinkWeights::unit(&first);
        let paths: Vec<Vec<NodeId>> = pairs
            .iter()
            .map(|&(a, b)| SpfTree::build(&first, &unit, con.ground_node(b)).walk(con.ground_node(a)).unwrap_or_default())
            .collect();
        let busiest = traffic::busiest_ground_share(&paths, |a, b| {
            first.link(a, b).map(|l| l.kind == LinkKind::Ground).unwrap_or(false)
        });
        let flows = make_flows(
            &pairs,
            |i| con.ground_node(i),
            busiest,
            load,
            sc.link_capacity_bps,
            sc.traffic.payload_bytes,
        );
        let nominal_header = encapsulate(protocol, sc.traffic.payload_bytes, None, false).header_bytes;
        let batch = sc.traffic.batch as f64;
        let packet_bits = batch * 8.0 * (nominal_header + sc.traffic.payload_bytes) as f64;
        let schedules = traffic::schedules(&flows, packet_bits, &mut rng);
        let specs = flows.iter().map(Flow::spec).collect();
        let wire_bits = 8.0 * (nominal_header + sc.traffic.payload_bytes) as f64;
        let demand_pct = flows
            .iter()
            .map(|f| 100.0 * f.rate_bps / wire_bits * sc.cost.c_srv6_end / sc.cost.capacity_units_per_s)
            .collect();
        let controllers = con.ground.iter().filter(|g| g.is_controller_site).count().max(1);
        let trace = Trace {
            protocol,
            load_fraction: load,
            seed,
            payload_bytes: sc.traffic.payload_bytes,
            batch: sc.traffic.batch,
            node_count: n,
            sat_count,
            snapshots: 0,
            samples: Vec::new(),
            flows: vec![Outcomes::default(); flows.len()],
            headers: Vec::new(),
            low_power_node_seconds: 0.0,
            controller_units: 0.0,
            controller_capacity_units: controllers as f64 * sc.cost.controller_units_per_s * sc.duration_s,
            pruning_violations: 0,
        };
        let empty = TopologySnapshot::from_links(0.0, n, sat_count, Vec::new(), vec![NodeResources::default(); n]);
        Engine {
            sc,
            protocol,
            n,
            flows,
            specs,
            demand_pct,
            spf_rate: 0.0,
            schedules,
            batch,
            nominal_header,
            queue_bytes: sc.queue_ms / 1000.0 * sc.link_capacity_bps / 8.0,
            snapshot: empty,
            link_at: vec![u32::MAX; n * n],
            down_at: Vec::new(),
            history: VecDeque::new(),
            policies: Vec::new(),
            cpu: vec![CpuServer::default(); n],
            units: vec![0.0; n],
            cpu_pct: vec![0.0; n],
            mem: vec![0.0; n],
            tx: vec![LinkQueue::default(); n * n],
            low_power: vec![false; n],
            tracker: IdleTracker::new(n),
            heap: BinaryHeap::new(),
            seq: 0,
            next_packet: 0,
            headers: BTreeMap::new(),
            trace,
            con,
        }
    }

    fn push(&mut self, t_s: f64, kind: EventKind, payload: EventPayload) {
        self.seq += 1;
        self.heap.push(Event {
            t_s,
            kind,
            seq: self.seq,
            payload,
        });
    }

    fn run(&mut self) {
        let duration = self.sc.duration_s;
        let refreshes = (duration / self.sc.refresh_s + 1e-9).floor() as u64;
        for k in 0..=refreshes {
            self.push(k as f64 * self.sc.refresh_s, EventKind::TopologyRefresh, EventPayload::Tick);
        }
        for f in 0..self.flows.len() {
            if let Some(s) = self.schedules[f] {
                if s.at(0) < duration {
                    self.push(s.at(0), EventKind::PacketArrival, EventPayload::Emit { flow: f as u32, index: 0 });
                }
            }
        }
        while let Some(ev) = self.heap.pop() {
            if ev.t_s > duration {
                self.heap.push(ev);
                break;
            }
            let t = ev.t_s;
            match (ev.kind, ev.payload) {
                (EventKind::PacketArrival, EventPayload::Emit { flow, index }) => self.emit(t, flow, index),
                (EventKind::PacketForward, EventPayload::Packet(p)) => self.hop(t, p),
                (EventKind::TopologyRefresh, _) => self.refresh(t),
                (EventKind::IdleScan, _) => self.idle_scan(t),
                (EventKind::RouteRecompute, _) => self.recompute(),
                (EventKind::MetricsSample, _) => self.sample(t),
                (k, _) => unreachable!("malformed event {k:?}"),
            }
        }
    }

    fn finish(mut self) -> Trace {
        for ev in self.heap.drain() {
            if let EventPayload::Packet(p) = ev.payload {
                self.trace.flows[p.flow_id as usize].in_flight += 1;
            }
        }
        self.trace.headers = self
            .headers
            .iter()
            .map(|(&(header_bytes, payload_bytes), &packets)| HeaderCount {
                header_bytes,
                payload_bytes,
                packets,
            })
            .collect();
        self.trace
    }

    fn is_sat(&self, n: NodeId) -> bool {
        n.index() < self.trace.sat_count
    }

    /// Forwarding rate left after housekeeping and, for hop-by-hop
    /// protocols, the satellite's own route computation.
    fn cpu_rate(&self) -> f64 {
        let c = &self.sc.cost;
        (c.capacity_units_per_s - c.idle_units_per_s - self.spf_rate).max(0.01 * c.capacity_units_per_s)
    }

    // ---- refresh cycle ----

    fn refresh(&mut self, t: f64) {
        let cost = &self.sc.cost;
        let period = self.sc.refresh_s;
        if t > 0.0 {
            let sats = self.trace.sat_count;
            let sleeping = self.low_power[..sats].iter().filter(|&&l| l).count();
            self.trace.low_power_node_seconds += sleeping as f64 * period;
            for i in 0..sats {
                if !self.low_power[i] {
                    self.units[i] += cost.idle_units_per_s * period;
                }
            }
        }
        for i in 0..self.n {
            self.cpu_pct[i] = cost.cpu_pct(self.units[i]);
            self.units[i] = 0.0;
        }
        let resources = (0..self.n)
            .map(|i| NodeResources {
                cpu_pct: self.cpu_pct[i],
                mem_bytes: self.mem[i],
                low_power: self.low_power[i],
                idle_since_s: self.tracker.below_since[i],
            })
            .collect();
        let prior = (t > 0.0).then_some(&self.snapshot);
        let snap = build_snapshot(&self.con, t, prior, resources, self.sc.link_capacity_bps);
        self.snapshot = snap;
        self.index_links(t);
        self.trace.snapshots += 1;
        if self.protocol == ProtocolKind::Srv6Green {
            self.push(t, EventKind::IdleScan, EventPayload::Tick);
        }
        self.push(t, EventKind::RouteRecompute, EventPayload::Tick);
        self.push(t, EventKind::MetricsSample, EventPayload::Tick);
    }

    /// Rebuilds the dense link index and the instant each active link
    /// first loses sight before the next refresh.
    fn index_links(&mut self, t: f64) {
        self.link_at.fill(u32::MAX);
        let n = self.n;
        for (i, l) in self.snapshot.links.iter().enumerate() {
            self.link_at[l.a.index() * n + l.b.index()] = i as u32;
            self.link_at[l.b.index() * n + l.a.index()] = i as u32;
        }
        self.down_at = vec![f64::INFINITY; self.snapshot.links.len()];
        let step = self.sc.vanish_step_s;
        let steps = (self.sc.refresh_s / step).ceil() as usize;
        let mut pending: Vec<usize> = (0..self.snapshot.links.len())
            .filter(|&i| self.snapshot.links[i].state == LinkState::Active)
            .collect();
        for k in 1..=steps {
            if pending.is_empty() {
                break;
            }
            let tk = t + (k as f64 * step).min(self.sc.refresh_s);
            let pos = self.con.positions(tk);
            pending.retain(|&i| {
                let l = &self.snapshot.links[i];
                if visible(pos[l.a.index()], pos[l.b.index()]) {
                    true
                } else {
                    self.down_at[i] = tk;
                    false
                }
            });
        }
    }

    fn idle_scan(&mut self, t: f64) {
        for n in update_idle(&mut self.tracker, &self.snapshot, t, &self.sc.green) {
            self.low_power[n.index()] = true;
            self.snapshot.set_low_power(n, true);
        }
    }

    fn recompute(&mut self) {
        let cost = &self.sc.cost;
        let active = self.snapshot.links.iter().filter(|l| l.is_active()).count();
        let spf = cost.spf_units(active, self.n);
        let unit = LinkWeights::unit(&self.snapshot);
        let rs = match self.protocol {
            ProtocolKind::Srv6Green => {
                let placement = Placement {
                    prior: self.history.back(),
                    demand_pct: &self.demand_pct,
                };
                let gr = green_routes_with(&self.snapshot, &self.specs, &self.sc.green, placement);
                self.trace.pruning_violations += audit_pruning(&gr.routes, &self.snapshot, &self.sc.green) as u64;
                for n in gr.woken {
                    self.low_power[n.index()] = false;
                    self.tracker.reset(n);
                    self.snapshot.set_low_power(n, false);
                }
                gr.routes
            }
            p => build_routeset(&self.snapshot, p, &self.specs, &unit),
        };
        self.trace.controller_units += rs.spf_runs as f64 * spf;
        if self.protocol.is_hop_by_hop() {
            // every satellite floods and runs its own SPF, sharing its CPU
            // with forwarding until the next refresh
            self.spf_rate = spf / self.sc.refresh_s;
            for i in 0..self.trace.sat_count {
                if !self.low_power[i] {
                    self.units[i] += spf;
                }
            }
        }
        self.history.push_back(rs);
        let keep = if self.protocol.is_hop_by_hop() {
            self.sc.ospf_lag_refreshes as usize + 1
        } else {
            1
        };
        while self.history.len() > keep {
            self.history.pop_front();
        }
        let rs = &self.history[0];
        self.policies = self
            .specs
            .iter()
            .map(|f| match (rs.primary.get(&f.id), rs.backup.get(&f.id)) {
                (Some(p), Some(b)) => Some((Rc::new(p.clone()), Rc::new(b.clone()))),
                _ => None,
            })
            .collect();
        self.mem = (0..self.n).map(|i| self.node_mem(i)).collect();
    }

    /// Routing-state bytes held by node `i`.
    fn node_mem(&self, i: usize) -> f64 {
        let rs = &self.history[0];
        let reach = rs.reachable.get(i).copied().unwrap_or(0) as f64;
        let node = NodeId(i as u16);
        match self.protocol {
            ProtocolKind::Ipv4 => reach * 32.0,
            ProtocolKind::Ipv6 => reach * 60.0,
            ProtocolKind::Mpls => reach * 60.0 + rs.label_entries_at(node) as f64 * 24.0,
            ProtocolKind::Srv6 | ProtocolKind::Srv6Green => {
                // segment lists live at the source that imposes them
                let lists: f64 = self
                    .specs
                    .iter()
                    .filter(|f| f.src == node)
                    .flat_map(|f| [rs.primary.get(&f.id), rs.backup.get(&f.id)])
                    .flatten()
                    .map(|p| 16.0 * p.list.sids.len() as f64 + 24.0)
                    .sum();
                reach * 60.0 + lists
            }
        }
    }

    fn sample(&mut self, t: f64) {
        for i in 0..self.n {
            self.trace.samples.push(Sample {
                t_s: t,
                node_id: i as u16,
                cpu_pct: self.cpu_pct[i],
                mem_bytes: self.mem[i],
            });
        }
    }

    // ---- packets ----

    fn drop_packet(&mut self, flow: u32, reason: DropReason) {
        self.trace.flows[flow as usize].dropped[reason.index()] += 1;
    }

    fn emit(&mut self, t: f64, flow: u32, index: u64) {
        let f = flow as usize;
        let s = self.schedules[f].expect("scheduled flow");
        if s.at(index + 1) < self.sc.duration_s {
            self.push(s.at(index + 1), EventKind::PacketArrival, EventPayload::Emit { flow, index: index + 1 });
        }
        self.trace.flows[f].sent += 1;
        self.next_packet += 1;
        let payload = self.flows[f].payload_bytes;
        let mut pkt = Packet {
            packet_id: self.next_packet,
            flow_id: flow,
            created_s: t,
            header_bytes: self.nominal_header,
            payload_bytes: payload,
            seglist: None,
            policy: None,
            label: None,
            current_node: self.flows[f].src,
            deadline_s: t + self.sc.packet_timeout_s,
            hops: 0,
        };
        if !self.protocol.is_srv6() {
            *self.headers.entry((pkt.header_bytes, payload)).or_default() += 1;
            self.hop(t, pkt);
            return;
        }
        // The source host builds the routing header and falls back to the
        // backup policy when the primary's first link cannot take the packet.
        let Some((primary, backup)) = self.policies[f].clone() else {
            *self.headers.entry((pkt.header_bytes, payload)).or_default() += 1;
            self.drop_packet(flow, DropReason::NoRoute);
            return;
        };
        let mut outcome = DropReason::NoRoute;
        let candidates = if primary.hops() == backup.hops() {
            vec![primary]
        } else {
            vec![primary, backup]
        };
        for pol in candidates {
            pkt.header_bytes = srv6_header_bytes(pol.list.waypoints());
            let src = pkt.current_node;
            let Some(next) = pol.next_hop(0, src) else { continue };
            let bytes = self.batch * (pkt.header_bytes + payload) as f64;
            match self.transmit(src, next, t, bytes) {
                Ok((_, arrive)) => {
                    *self.headers.entry((pkt.header_bytes, payload)).or_default() += 1;
                    pkt.seglist = Some(pol.list.clone());
                    pkt.policy = Some(pol);
                    pkt.current_node = next;
                    pkt.hops = 1;
                    self.push(arrive, EventKind::PacketForward, EventPayload::Packet(pkt));
                    return;
                }
                Err(r) => outcome = r,
            }
        }
        *self.headers.entry((pkt.header_bytes, payload)).or_default() += 1;
        self.drop_packet(flow, outcome);
    }

    fn hop(&mut self, t: f64, mut pkt: Packet) {
        let flow = pkt.flow_id;
        match self.forward(&mut pkt, t) {
            Forwarded::Delivered => self.trace.flows[flow as usize].delivered += 1,
            Forwarded::Dropped(r) => self.drop_packet(flow, r),
            Forwarded::Progressed { next, arrive_s, .. } => {
                pkt.current_node = next;
                pkt.hops += 1;
                self.push(arrive_s, EventKind::PacketForward, EventPayload::Packet(pkt));
            }
        }
    }

    /// Processes `pkt` at its current node at time `t`: route lookup, CPU
    /// service and link admission.
    fn forward(&mut self, pkt: &mut Packet, t: f64) -> Forwarded {
        let u = pkt.current_node;
        if t > pkt.deadline_s {
            return Forwarded::Dropped(DropReason::Deadline);
        }
        if u == self.flows[pkt.flow_id as usize].dst {
            return Forwarded::Delivered;
        }
        if pkt.hops >= MAX_HOPS {
            return Forwarded::Dropped(DropReason::NoRoute);
        }
        if self.low_power[u.index()] {
            return Forwarded::Dropped(DropReason::StaleLink);
        }
        let (next, role) = match self.decide(pkt) {
            Ok(x) => x,
            Err(r) => return Forwarded::Dropped(r),
        };
        let mut ready = t;
        if self.is_sat(u) {
            let units = self.sc.cost.per_packet(self.protocol, role) * self.batch;
            let rate = self.cpu_rate();
            match self.cpu[u.index()].admit(t, units, rate, self.sc.queue_ms / 1000.0) {
                Admission::Admitted { done_s } => {
                    self.units[u.index()] += units;
                    ready = done_s;
                }
                Admission::Dropped(r) => return Forwarded::Dropped(r),
            }
        }
        let bytes = self.batch * (pkt.header_bytes + pkt.payload_bytes) as f64;
        match self.transmit(u, next, ready, bytes) {
            Ok((depart_s, arrive_s)) => Forwarded::Progressed { next, depart_s, arrive_s },
            Err(r) => Forwarded::Dropped(r),
        }
    }

    /// Next hop and processing role at the packet's current node.
    fn decide(&self, pkt: &mut Packet) -> Result<(NodeId, HopRole), DropReason> {
        let u = pkt.current_node;
        let rs = &self.history[0];
        let flow = &self.flows[pkt.flow_id as usize];
        match self.protocol {
            ProtocolKind::Ipv4 | ProtocolKind::Ipv6 => rs.fibs[u.index()]
                .next_hop(flow.dst)
                .map(|n| (n, HopRole::Lookup))
                .ok_or(DropReason::NoRoute),
            ProtocolKind::Mpls => {
                if let Some(label) = pkt.label {
                    return match mpls_forward(&rs.label_maps[u.index()], label) {
                        Ok(LabelAction::Swap { out_label, next_hop }) => {
                            pkt.label = Some(out_label);
                            Ok((next_hop, HopRole::Transit))
                        }
                        Ok(LabelAction::Pop { next_hop }) => {
                            pkt.label = None;
                            Ok((next_hop, HopRole::Transit))
                        }
                        Err(_) => Err(DropReason::NoRoute),
                    };
                }
                let lsp = rs.lsps.get(&flow.flow_id).ok_or(DropReason::NoRoute)?;
                if pkt.hops == 0 {
                    return Ok((lsp.path[1], HopRole::Lookup));
                }
                if lsp.path.get(1) != Some(&u) {
                    return Err(DropReason::NoRoute);
                }
                match lsp.ingress_label {
                    Some(l) => {
                        pkt.label = Some(l);
                        Ok((lsp.path[2], HopRole::Ingress))
                    }
                    None => Ok((lsp.path[2], HopRole::Lookup)),
                }
            }
            ProtocolKind::Srv6 | ProtocolKind::Srv6Green => {
                let (Some(list), Some(policy)) = (pkt.seglist.as_ref(), pkt.policy.as_ref()) else {
                    return Err(DropReason::NoRoute);
                };
                let (_, updated) = srv6_process(list, u).map_err(|_| DropReason::NoRoute)?;
                let role = if updated.segments_left != list.segments_left {
                    HopRole::SegmentEndpoint
                } else {
                    HopRole::Transit
                };
                let next = policy.next_hop(updated.active_index(), u).ok_or(DropReason::NoRoute)?;
                pkt.seglist = Some(updated);
                Ok((next, role))
            }
        }
    }

    /// Puts `bytes` on link `u -> v` once ready; returns departure and
    /// arrival instants.
    fn transmit(&mut self, u: NodeId, v: NodeId, ready: f64, bytes: f64) -> Result<(f64, f64), DropReason> {
        let li = self.link_at[u.index() * self.n + v.index()];
        if li == u32::MAX {
            return Err(DropReason::StaleLink);
        }
        let l = &self.snapshot.links[li as usize];
        if l.state != LinkState::Active || ready >= self.down_at[li as usize] {
            return Err(DropReason::StaleLink);
        }
        let (rate, prop) = (l.capacity_bps, l.length_km / SPEED_OF_LIGHT_KM_S);
        let q = &mut self.tx[u.index() * self.n + v.index()];
        match queue_admit(q, ready, bytes, rate, self.queue_bytes) {
            Admission::Admitted { done_s } => Ok((done_s, done_s + prop)),
            Admission::Dropped(r) => Err(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(duration: f64) -> Scenario {
        Scenario {
            duration_s: duration,
            ..Scenario::default()
        }
    }

    #[test]
    fn event_order() {
        let mk = |t, kind, seq| Event {
            t_s: t,
            kind,
            seq,
            payload: EventPayload::Tick,
        };
        let mut h = BinaryHeap::new();
        h.push(mk(1.0, EventKind::MetricsSample, 1));
        h.push(mk(1.0, EventKind::PacketForward, 5));
        h.push(mk(0.5, EventKind::RouteRecompute, 9));
        h.push(mk(1.0, EventKind::PacketForward, 2));
        h.push(mk(1.0, EventKind::TopologyRefresh, 0));
        let order: Vec<_> = std::iter::from_fn(|| h.pop()).map(|e| (e.kind, e.seq)).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::RouteRecompute, 9),
                (EventKind::PacketForward, 2),
                (EventKind::PacketForward, 5),
                (EventKind::TopologyRefresh, 0),
                (EventKind::MetricsSample, 1),
            ]
        );
    }

    #[test]
    fn cost_defaults() {
        let c = NodeCostModel::default();
        assert!(c.violations().is_empty());
        assert_eq!(c.cpu_pct(0.5 * c.capacity_units_per_s * c.window_s), 50.0);
        assert_eq!(c.cpu_pct(1e9), 100.0);
        assert_eq!(c.per_packet(ProtocolKind::Mpls, HopRole::Ingress), 2.0);
        assert_eq!(c.per_packet(ProtocolKind::Srv6, HopRole::SegmentEndpoint), 0.8);
        assert_eq!(c.per_packet(ProtocolKind::Srv6Green, HopRole::Transit), 0.6);
    }

    #[test]
    fn zero_load_is_vacuous() {
        let t = simulate(&short(60.0), ProtocolKind::Ipv4, 0.0, 1).unwrap();
        let s = aggregate(&t);
        assert_eq!(s.pdr_pct, 100.0);
        assert_eq!(s.sent, 0);
        assert_eq!(t.snapshots, 7);
        assert_eq!(t.samples.len(), 7 * 208);
    }

    #[test]
    fn zero_load_cpu_floor() {
        // without traffic only recomputation separates the protocols
        let sc = short(60.0);
        let idle = 100.0 * sc.cost.idle_units_per_s / sc.cost.capacity_units_per_s;
        let v4 = run(&sc, ProtocolKind::Ipv4, 0.0, 1).unwrap();
        let mpls = run(&sc, ProtocolKind::Mpls, 0.0, 1).unwrap();
        let srv6 = run(&sc, ProtocolKind::Srv6, 0.0, 1).unwrap();
        assert!((mpls.avg_cpu_pct - idle).abs() < 1e-9);
        assert_eq!(mpls.avg_cpu_pct, srv6.avg_cpu_pct);
        // the hop-by-hop excess is the SPF share of the t=0 topology, give or
        // take the churn in active links
        let c = sc.constellation();
        let snap = build_snapshot(&c, 0.0, None, vec![NodeResources::default(); c.node_count()], 20e6);
        let active = snap.links.iter().filter(|l| l.is_active()).count();
        let share = sc.cost.cpu_pct(sc.cost.spf_units(active, c.node_count()) * sc.cost.window_s / sc.refresh_s);
        let excess = v4.avg_cpu_pct - mpls.avg_cpu_pct;
        assert!((excess - share).abs() < 0.1 * share, "excess {excess} share {share}");
    }

    #[test]
    fn invalid_load_rejected() {
        let err = run(&Scenario::default(), ProtocolKind::Ipv4, 1.5, 1).unwrap_err();
        assert!(err.to_string().contains("load"));
    }

    #[test]
    fn short_run_conserves_and_repeats() {
        let sc = short(120.0);
        for p in ProtocolKind::ALL {
            let a = simulate(&sc, p, 0.6, 3).unwrap();
            assert!(a.flows.iter().all(Outcomes::conserved), "{p}");
            assert!(a.outcomes().sent > 0);
            let b = simulate(&sc, p, 0.6, 3).unwrap();
            assert_eq!(a, b, "{p}");
        }
    }
}
