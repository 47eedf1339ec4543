//! Header byte model per protocol.

use super::{ProtocolKind, SegmentList};

pub const IPV4_HEADER_BYTES: u32 = 20;
pub const IPV6_HEADER_BYTES: u32 = 40;
pub const MPLS_LABEL_BYTES: u32 = 4;
pub const SRH_BASE_BYTES: u32 = 8;
pub const SID_BYTES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderModel {
    pub header_bytes: u32,
    pub payload_bytes: u32,
}

impl HeaderModel {
    pub fn total_bytes(&self) -> u32 {
        self.header_bytes + self.payload_bytes
    }

    pub fn overhead_ratio(&self) -> f64 {
        self.header_bytes as f64 / self.total_bytes() as f64
    }
}

/// SRv6 header: IPv6 base, routing header base and one SID per waypoint
/// (the egress travels in the destination address).
pub fn srv6_header_bytes(waypoints: usize) -> u32 {
    IPV6_HEADER_BYTES + SRH_BASE_BYTES + SID_BYTES * waypoints as u32
}

/// Header bytes for a packet of `protocol`. For the SRv6 variants
/// `seglist` is the list in use; without one a single waypoint is assumed,
/// and `backup_engaged` adds one more.
pub fn encapsulate(
    protocol: ProtocolKind,
    payload_bytes: u32,
    seglist: Option<&SegmentList>,
    backup_engaged: bool,
) -> HeaderModel {
    assert!(payload_bytes > 0);
    let header_bytes = match protocol {
        ProtocolKind::Ipv4 => IPV4_HEADER_BYTES,
        ProtocolKind::Ipv6 => IPV6_HEADER_BYTES,
        ProtocolKind::Mpls => IPV6_HEADER_BYTES + MPLS_LABEL_BYTES,
        ProtocolKind::Srv6 | ProtocolKind::Srv6Green => match seglist {
            Some(l) => srv6_header_bytes(l.waypoints()),
            None => srv6_header_bytes(1 + usize::from(backup_engaged)),
        },
    };
    HeaderModel {
        header_bytes,
        payload_bytes,
    }
}
