//! Time-evolving network graph: node numbering, the +Grid ISL pattern,
//! ground links and per-refresh snapshots.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constellation::{
    distance_km, ground_visible, isl_visible, runs_to_intervals, AccessInterval, GroundStation,
    OrbitalShell, SatelliteEphemeris, Vec3,
};

pub const DEFAULT_LINK_CAPACITY_BPS: f64 = 20_000_000.0;
pub const DEFAULT_REFRESH_S: f64 = 10.0;

/// Dense node index. Satellites come first (shell by shell, plane-major),
/// then ground stations. Ordering of ids is the tie-breaking order used by
/// route computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Isl,
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Active,
    /// Endpoints lost line of sight.
    Inactive,
    /// An endpoint was put into low-power mode.
    LowPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Smaller endpoint id.
    pub a: NodeId,
    pub b: NodeId,
    pub kind: LinkKind,
    pub capacity_bps: f64,
    pub state: LinkState,
    pub length_km: f64,
}

impl Link {
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn is_active(&self) -> bool {
        self.state == LinkState::Active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResources {
    pub cpu_pct: f64,
    pub mem_bytes: f64,
    pub low_power: bool,
    pub idle_since_s: Option<f64>,
}

impl Default for NodeResources {
    fn default() -> Self {
        Self {
            cpu_pct: 0.0,
            mem_bytes: 0.0,
            low_power: false,
            idle_since_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SatSlot {
    pub shell: usize,
    pub plane: usize,
    pub slot: usize,
}

/// Static description of the network: shells, ground segment, numbering.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub shells: Vec<OrbitalShell>,
    pub ground: Vec<GroundStation>,
    sats: Vec<SatSlot>,
    shell_base: Vec<usize>,
}

impl Constellation {
    pub fn new(shells: Vec<OrbitalShell>, ground: Vec<GroundStation>) -> Self {
        let mut sats = Vec::new();
        let mut shell_base = Vec::new();
        for (si, sh) in shells.iter().enumerate() {
            shell_base.push(sats.len());
            for plane in 0..sh.plane_count {
                for slot in 0..sh.sats_per_plane {
                    sats.push(SatSlot { shell: si, plane, slot });
                }
            }
        }
        Self {
            shells,
            ground,
            sats,
            shell_base,
        }
    }

    pub fn lightspeed() -> Self {
        Self::new(
            vec![OrbitalShell::polar(), OrbitalShell::inclined()],
            crate::constellation::default_ground_stations(),
        )
    }

    pub fn sat_count(&self) -> usize {
        self.sats.len()
    }

    pub fn node_count(&self) -> usize {
        self.sats.len() + self.ground.len()
    }

    pub fn is_satellite(&self, n: NodeId) -> bool {
        n.index() < self.sats.len()
    }

    pub fn ground_node(&self, gs_index: usize) -> NodeId {
        NodeId((self.sats.len() + gs_index) as u16)
    }

    pub fn ground_index(&self, n: NodeId) -> Option<usize> {
        n.index().checked_sub(self.sats.len())
    }

    pub fn sat_slot(&self, n: NodeId) -> SatSlot {
        self.sats[n.index()]
    }

    pub fn sat_node(&self, shell: usize, plane: usize, slot: usize) -> NodeId {
        let sh = &self.shells[shell];
        NodeId((self.shell_base[shell] + plane * sh.sats_per_plane + slot) as u16)
    }

    pub fn is_controller_site(&self, n: NodeId) -> bool {
        self.ground_index(n)
            .map(|g| self.ground[g].is_controller_site)
            .unwrap_or(false)
    }

    pub fn node_name(&self, n: NodeId) -> String {
        match self.ground_index(n) {
            Some(g) => format!("gs-{}", self.ground[g].name),
            None => {
                let s = self.sats[n.index()];
                format!("{}-p{:02}-s{:02}", self.shells[s.shell].shell_id.as_str(), s.plane, s.slot)
            }
        }
    }

    pub fn ephemeris(&self, t: f64) -> Vec<SatelliteEphemeris> {
        let mut out = Vec::with_capacity(self.sats.len());
        for (si, sh) in self.shells.iter().enumerate() {
            out.extend(crate::constellation::propagate(sh, t, self.shell_base[si]));
        }
        out
    }

    /// ECI positions of every node at `t`.
    pub fn positions(&self, t: f64) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.node_count());
        for s in &self.sats {
            out.push(self.shells[s.shell].position(s.plane, s.slot, t));
        }
        for g in &self.ground {
            out.push(g.position(t));
        }
        out
    }

    pub fn position(&self, n: NodeId, t: f64) -> Vec3 {
        match self.ground_index(n) {
            Some(g) => self.ground[g].position(t),
            None => {
                let s = self.sats[n.index()];
                self.shells[s.shell].position(s.plane, s.slot, t)
            }
        }
    }

    /// Inter-plane neighbour planes of `plane`, with the seam of a
    /// Walker-star shell suppressed.
    fn adjacent_planes(&self, shell: usize, plane: usize) -> Vec<usize> {
        let sh = &self.shells[shell];
        let p = sh.plane_count;
        if p < 2 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let prev = (plane + p - 1) % p;
        let next = (plane + 1) % p;
        let seam = sh.has_seam();
        if !(seam && plane == 0) {
            out.push(prev);
        }
        if !(seam && plane == p - 1) && !out.contains(&next) {
            out.push(next);
        }
        out
    }

    fn intra_plane_neighbors(&self, sat: NodeId) -> Vec<NodeId> {
        let s = self.sats[sat.index()];
        let k = self.shells[s.shell].sats_per_plane;
        let mut out = Vec::new();
        if k < 2 {
            return out;
        }
        for slot in [(s.slot + k - 1) % k, (s.slot + 1) % k] {
            let n = self.sat_node(s.shell, s.plane, slot);
            if n != sat && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }

    /// +Grid neighbours of a satellite: the previous and next slot in its
    /// plane, plus the same slot in each adjacent plane when visible in
    /// `positions`.
    pub fn grid_isl_neighbors(&self, sat: &SatelliteEphemeris, positions: &[Vec3]) -> Vec<NodeId> {
        let me = NodeId(sat.node_id as u16);
        let s = self.sats[me.index()];
        let mut out = self.intra_plane_neighbors(me);
        for plane in self.adjacent_planes(s.shell, s.plane) {
            let n = self.sat_node(s.shell, plane, s.slot);
            if isl_visible(positions[me.index()], positions[n.index()]) {
                out.push(n);
            }
        }
        out
    }

    /// Every ISL the grid policy could ever create, as (smaller, larger).
    pub fn isl_candidates(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for i in 0..self.sats.len() {
            let me = NodeId(i as u16);
            let s = self.sats[i];
            let mut ns = self.intra_plane_neighbors(me);
            for plane in self.adjacent_planes(s.shell, s.plane) {
                ns.push(self.sat_node(s.shell, plane, s.slot));
            }
            for n in ns {
                if me < n {
                    out.push((me, n));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Every satellite/ground-station pair, (satellite, station).
    pub fn ground_candidates(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.sats.len() * self.ground.len());
        for g in 0..self.ground.len() {
            for s in 0..self.sats.len() {
                out.push((NodeId(s as u16), self.ground_node(g)));
            }
        }
        out
    }

    /// Whether the candidate pair `(a, b)` has line of sight in `positions`.
    pub fn pair_visible(&self, a: NodeId, b: NodeId, positions: &[Vec3]) -> bool {
        match (self.is_satellite(a), self.is_satellite(b)) {
            (true, true) => isl_visible(positions[a.index()], positions[b.index()]),
            (true, false) => ground_visible(positions[b.index()], positions[a.index()]),
            (false, true) => ground_visible(positions[a.index()], positions[b.index()]),
            (false, false) => false,
        }
    }

    /// Maximal sampled visibility runs for every candidate pair.
    pub fn compute_access_intervals(&self, duration_s: f64, step_s: f64) -> Vec<AccessInterval> {
        assert!(duration_s > 0.0 && step_s > 0.0);
        let n_steps = (duration_s / step_s).floor() as usize + 1;
        let mut pairs = self.isl_candidates();
        pairs.extend(self.ground_candidates());
        let mut series = vec![Vec::with_capacity(n_steps); pairs.len()];
        for i in 0..n_steps {
            let pos = self.positions(i as f64 * step_s);
            for (k, &(a, b)) in pairs.iter().enumerate() {
                series[k].push(self.pair_visible(a, b, &pos));
            }
        }
        let mut out = Vec::new();
        for (k, &(a, b)) in pairs.iter().enumerate() {
            out.extend(runs_to_intervals(a.index(), b.index(), &series[k], step_s, duration_s));
        }
        out
    }

    pub fn check(&self) -> Result<(), String> {
        for s in &self.shells {
            s.check()?;
        }
        if self.node_count() > u16::MAX as usize {
            return Err("too many nodes".into());
        }
        Ok(())
    }
}

/// The network frozen at one refresh instant.
#[derive(Debug, Clone)]
pub struct TopologySnapshot {
    pub t_s: f64,
    pub node_count: usize,
    pub sat_count: usize,
    pub links: Vec<Link>,
    pub resources: Vec<NodeResources>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl TopologySnapshot {
    /// Assembles a snapshot from explicit links. Link states are derived
    /// from `resources` where an endpoint is in low-power mode.
    pub fn from_links(
        t_s: f64,
        node_count: usize,
        sat_count: usize,
        mut links: Vec<Link>,
        resources: Vec<NodeResources>,
    ) -> Self {
        assert_eq!(resources.len(), node_count);
        for l in &mut links {
            if l.a > l.b {
                std::mem::swap(&mut l.a, &mut l.b);
            }
            if l.state != LinkState::Inactive
                && (resources[l.a.index()].low_power || resources[l.b.index()].low_power)
            {
                l.state = LinkState::LowPower;
            }
        }
        links.sort_by_key(|l| (l.a, l.b));
        let mut adjacency = vec![Vec::new(); node_count];
        let mut index = HashMap::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            index.insert((l.a, l.b), i);
            adjacency[l.a.index()].push((l.b, i));
            adjacency[l.b.index()].push((l.a, i));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        Self {
            t_s,
            node_count,
            sat_count,
            links,
            resources,
            adjacency,
            index,
        }
    }

    /// Neighbours of `n` with the index of the connecting link, sorted by
    /// neighbour id. Includes non-active links.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[n.index()]
    }

    pub fn link_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.index.get(&key).copied()
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.link_index(a, b).map(|i| &self.links[i])
    }

    pub fn is_satellite(&self, n: NodeId) -> bool {
        n.index() < self.sat_count
    }

    pub fn cpu(&self, n: NodeId) -> f64 {
        self.resources[n.index()].cpu_pct
    }

    /// Sets the low-power flag of `node` and re-derives its link states.
    pub fn set_low_power(&mut self, node: NodeId, low_power: bool) {
        self.resources[node.index()].low_power = low_power;
        let adj = self.adjacency[node.index()].clone();
        for (_, li) in adj {
            let l = &mut self.links[li];
            if l.state == LinkState::Inactive {
                continue;
            }
            let sleeping =
                self.resources[l.a.index()].low_power || self.resources[l.b.index()].low_power;
            l.state = if sleeping { LinkState::LowPower } else { LinkState::Active };
        }
    }

    /// Copy in which every low-power link is usable again, as if all
    /// sleeping nodes were woken.
    pub fn woken(&self) -> TopologySnapshot {
        let mut s = self.clone();
        for r in &mut s.resources {
            r.low_power = false;
        }
        for l in &mut s.links {
            if l.state == LinkState::LowPower {
                l.state = LinkState::Active;
            }
        }
        s
    }

    /// Link-state export: one `t a b kind state` line per link.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        for l in &self.links {
            let kind = match l.kind {
                LinkKind::Isl => "isl",
                LinkKind::Ground => "ground",
            };
            let state = match l.state {
                LinkState::Active => "active",
                LinkState::Inactive => "inactive",
                LinkState::LowPower => "lowpower",
            };
            let _ = writeln!(s, "{} {} {} {} {}", self.t_s, l.a.0, l.b.0, kind, state);
        }
        s
    }
}

/// Builds the snapshot at `t`: visible grid ISLs and ground links, with
/// links lost since `prior` kept as `Inactive`.
pub fn build_snapshot(
    c: &Constellation,
    t: f64,
    prior: Option<&TopologySnapshot>,
    resources: Vec<NodeResources>,
    capacity_bps: f64,
) -> TopologySnapshot {
    let pos = c.positions(t);
    let mut links = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut push = |a: NodeId, b: NodeId, kind: LinkKind, visible: bool, links: &mut Vec<Link>| {
        let state = if visible { LinkState::Active } else { LinkState::Inactive };
        seen.insert((a, b));
        links.push(Link {
            a,
            b,
            kind,
            capacity_bps,
            state,
            length_km: distance_km(pos[a.index()], pos[b.index()]),
        });
    };
    for (a, b) in c.isl_candidates() {
        let v = c.pair_visible(a, b, &pos);
        let was = prior.and_then(|p| p.link(a, b)).is_some();
        if v || was {
            push(a, b, LinkKind::Isl, v, &mut links);
        }
    }
    for (s, g) in c.ground_candidates() {
        let v = c.pair_visible(s, g, &pos);
        let was = prior
            .and_then(|p| p.link(s, g))
            .map(|l| l.state != LinkState::Inactive)
            .unwrap_or(false);
        if v || was {
            push(s, g, LinkKind::Ground, v, &mut links);
        }
    }
    TopologySnapshot::from_links(t, c.node_count(), c.sat_count(), links, resources)
}
