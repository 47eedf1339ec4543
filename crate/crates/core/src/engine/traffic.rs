//! Constant-bit-rate flows between random ground-station pairs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::routing::FlowSpec;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub flow_id: u32,
    pub src_gs: usize,
    pub dst_gs: usize,
    pub src: NodeId,
    pub dst: NodeId,
    /// Wire rate including the nominal header.
    pub rate_bps: f64,
    pub payload_bytes: u32,
}

impl Flow {
    pub fn spec(&self) -> FlowSpec {
        FlowSpec {
            id: self.flow_id,
            src: self.src,
            dst: self.dst,
        }
    }
}

/// Emission schedule of one flow: packet `i` leaves at `first_s + i * gap_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrSchedule {
    pub first_s: f64,
    pub gap_s: f64,
}

impl CbrSchedule {
    pub fn at(&self, i: u64) -> f64 {
        self.first_s + i as f64 * self.gap_s
    }
}

/// Uniformly random ordered pairs of distinct stations.
pub fn draw_pairs(station_count: usize, flow_count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    assert!(station_count >= 2);
    (0..flow_count)
        .map(|_| {
            let a = rng.gen_range(0..station_count);
            let mut b = rng.gen_range(0..station_count - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect()
}

/// Largest number of flows crossing one directed ground link, given each
/// flow's hop sequence. At least 1.
pub fn busiest_ground_share(paths: &[Vec<NodeId>], is_ground_link: impl Fn(NodeId, NodeId) -> bool) -> usize {
    let mut counts: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for p in paths {
        for w in p.windows(2) {
            if is_ground_link(w[0], w[1]) {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
        }
    }
    counts.into_values().max().unwrap_or(1).max(1)
}

/// Equal-rate flows scaled so a ground link shared by `busiest` flows
/// carries `load_fraction` of `capacity_bps`.
pub fn make_flows(
    pairs: &[(usize, usize)],
    ground_node: impl Fn(usize) -> NodeId,
    busiest: usize,
    load_fraction: f64,
    capacity_bps: f64,
    payload_bytes: u32,
) -> Vec<Flow> {
    let rate = load_fraction * capacity_bps / busiest.max(1) as f64;
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Flow {
            flow_id: i as u32,
            src_gs: a,
            dst_gs: b,
            src: ground_node(a),
            dst: ground_node(b),
            rate_bps: rate,
            payload_bytes,
        })
        .collect()
}

/// CBR schedules with start phases drawn uniformly within one gap.
/// `packet_bits` is the wire size of one simulated packet.
pub fn schedules(flows: &[Flow], packet_bits: f64, rng: &mut ChaCha8Rng) -> Vec<Option<CbrSchedule>> {
    flows
        .iter()
        .map(|f| {
            if f.rate_bps <= 0.0 {
                return None;
            }
            let gap_s = packet_bits / f.rate_bps;
            Some(CbrSchedule {
                first_s: rng.gen::<f64>() * gap_s,
                gap_s,
            })
        })
        .collect()
}

/// Every `(time, flow_id)` emission before `until_s`, in time order.
pub fn generate_traffic(
    flows: &[Flow],
    packet_bits: f64,
    seed: u64,
    until_s: f64,
) -> Vec<(f64, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (f, s) in flows.iter().zip(schedules(flows, packet_bits, &mut rng)) {
        let Some(s) = s else { continue };
        let mut i = 0;
        while s.at(i) < until_s {
            out.push((s.at(i), f.flow_id));
            i += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}
