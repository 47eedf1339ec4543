//! Fixtures shared by the benchmarks.

use leosim::topology::{build_snapshot, Constellation, NodeResources, TopologySnapshot};

/// Default constellation at `t` with a deterministic CPU pattern.
pub fn loaded_snapshot(t: f64) -> TopologySnapshot {
    let c = Constellation::lightspeed();
    let res = (0..c.node_count())
        .map(|i| NodeResources {
            cpu_pct: if c.is_satellite(leosim::NodeId(i as u16)) {
                ((i * 37) % 97) as f64
            } else {
                0.0
            },
            ..Default::default()
        })
        .collect();
    build_snapshot(&c, t, None, res, 20e6)
}
