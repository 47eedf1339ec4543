//! Packet-level simulator of an SDN-controlled two-shell LEO constellation.
//!
//! Five routing modes are compared on the same traffic: hop-by-hop IPv4 and
//! IPv6 (OSPF style), MPLS label switching, SRv6 source routing and SRv6
//! over CPU-aware green weights.

pub mod constellation;
pub mod engine;
pub mod green;
pub mod metrics;
pub mod routing;
pub mod scenario;
pub mod sweep;
pub mod topology;

pub use engine::{run, simulate, EngineError};
pub use metrics::{aggregate, RunSummary, Trace};
pub use routing::ProtocolKind;
pub use scenario::{Scenario, ScenarioInvalid};
pub use topology::{NodeId, TopologySnapshot};
