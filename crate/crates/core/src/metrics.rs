//! Run traces, headline metrics and their file formats.
//!
//! A [`Trace`] is everything a run records; [`aggregate`] turns it into a
//! [`RunSummary`] and is the only place metrics are derived, so a trace
//! exported to JSON and read back yields the same summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::encap::encapsulate;
use crate::routing::ProtocolKind;

pub const SUMMARY_SCHEMA: &str = "v1";
pub const SERIES_HEADER: &str = "t_s,node_id,cpu_pct,mem_bytes";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("overhead of an empty packet stream is undefined")]
    EmptyStream,
    #[error("io failure on {path}: {message}")]
    IoFailure { path: String, message: String },
}

impl MetricsError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        MetricsError::IoFailure {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropReason {
    NoRoute,
    StaleLink,
    QueueOverflow,
    Deadline,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::NoRoute,
        DropReason::StaleLink,
        DropReason::QueueOverflow,
        DropReason::Deadline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::StaleLink => "stale_link",
            DropReason::QueueOverflow => "queue_overflow",
            DropReason::Deadline => "deadline",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One node's readings for the window ending at `t_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_s: f64,
    pub node_id: u16,
    pub cpu_pct: f64,
    pub mem_bytes: f64,
}

/// Packet outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcomes {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: [u64; 4],
    pub in_flight: u64,
}

impl Outcomes {
    pub fn dropped_total(&self) -> u64 {
        self.dropped.iter().sum()
    }

    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped_total() + self.in_flight
    }

    pub fn add(&mut self, o: &Outcomes) {
        self.sent += o.sent;
        self.delivered += o.delivered;
        self.in_flight += o.in_flight;
        for (a, b) in self.dropped.iter_mut().zip(o.dropped) {
            *a += b;
        }
    }
}

/// Sent packets of one header/payload size combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderCount {
    pub header_bytes: u32,
    pub payload_bytes: u32,
    pub packets: u64,
}

/// Complete record of one run. Packet counts are simulated packets, each
/// standing for `batch` real ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub protocol: ProtocolKind,
    pub load_fraction: f64,
    pub seed: u64,
    pub payload_bytes: u32,
    pub batch: u32,
    pub node_count: usize,
    pub sat_count: usize,
    pub snapshots: u32,
    pub samples: Vec<Sample>,
    pub flows: Vec<Outcomes>,
    pub headers: Vec<HeaderCount>,
    pub low_power_node_seconds: f64,
    pub controller_units: f64,
    /// Units the controllers could have executed over the run.
    pub controller_capacity_units: f64,
    pub pruning_violations: u64,
}

impl Trace {
    pub fn outcomes(&self) -> Outcomes {
        let mut total = Outcomes::default();
        for f in &self.flows {
            total.add(f);
        }
        total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub protocol: ProtocolKind,
    pub load_fraction: f64,
    pub seed: u64,
    pub pdr_pct: f64,
    pub peak_cpu_pct: f64,
    pub avg_cpu_pct: f64,
    pub avg_mem_bytes: f64,
    pub overhead_pct: f64,
    pub sent: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub drops_no_route: u64,
    pub drops_stale_link: u64,
    pub drops_queue_overflow: u64,
    pub drops_deadline: u64,
    pub low_power_node_seconds: f64,
    pub controller_cpu_pct: f64,
    pub pruning_violations: u64,
    pub snapshots: u32,
    pub samples: u64,
    pub batch: u32,
}

impl RunSummary {
    pub fn drops_by_reason(&self) -> BTreeMap<DropReason, u64> {
        BTreeMap::from([
            (DropReason::NoRoute, self.drops_no_route),
            (DropReason::StaleLink, self.drops_stale_link),
            (DropReason::QueueOverflow, self.drops_queue_overflow),
            (DropReason::Deadline, self.drops_deadline),
        ])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Delivery ratio in percent; an empty run counts as fully delivered.
pub fn pdr(sent: u64, delivered: u64) -> f64 {
    assert!(delivered <= sent, "delivered {delivered} > sent {sent}");
    if sent == 0 {
        100.0
    } else {
        100.0 * delivered as f64 / sent as f64
    }
}

/// Per-packet mean of header / (header + payload), in percent.
pub fn overhead_pct(stream: &[HeaderCount]) -> Result<f64, MetricsError> {
    let n: u64 = stream.iter().map(|h| h.packets).sum();
    if n == 0 {
        return Err(MetricsError::EmptyStream);
    }
    let sum: f64 = stream
        .iter()
        .map(|h| h.packets as f64 * h.header_bytes as f64 / (h.header_bytes + h.payload_bytes) as f64)
        .sum();
    Ok(100.0 * sum / n as f64)
}

/// Derives the summary. Averages run over satellites and the windows after
/// the cold-start sample; the peak covers every satellite sample.
pub fn aggregate(trace: &Trace) -> RunSummary {
    let mut peak: f64 = 0.0;
    let (mut cpu_sum, mut mem_sum, mut n) = (0.0, 0.0, 0u64);
    for s in &trace.samples {
        if (s.node_id as usize) >= trace.sat_count {
            continue;
        }
        peak = peak.max(s.cpu_pct);
        if s.t_s > 0.0 {
            cpu_sum += s.cpu_pct;
            mem_sum += s.mem_bytes;
            n += 1;
        }
    }
    let (avg_cpu, avg_mem) = if n == 0 {
        (0.0, 0.0)
    } else {
        (cpu_sum / n as f64, mem_sum / n as f64)
    };
    let o = trace.outcomes();
    let overhead = overhead_pct(&trace.headers).unwrap_or_else(|_| {
        100.0 * encapsulate(trace.protocol, trace.payload_bytes.max(1), None, false).overhead_ratio()
    });
    let controller = if trace.controller_capacity_units > 0.0 {
        (100.0 * trace.controller_units / trace.controller_capacity_units).min(100.0)
    } else {
        0.0
    };
    RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        protocol: trace.protocol,
        load_fraction: trace.load_fraction,
        seed: trace.seed,
        pdr_pct: pdr(o.sent, o.delivered),
        peak_cpu_pct: peak,
        avg_cpu_pct: avg_cpu.min(peak),
        avg_mem_bytes: avg_mem,
        overhead_pct: overhead,
        sent: o.sent,
        delivered: o.delivered,
        in_flight: o.in_flight,
        drops_no_route: o.dropped[DropReason::NoRoute.index()],
        drops_stale_link: o.dropped[DropReason::StaleLink.index()],
        drops_queue_overflow: o.dropped[DropReason::QueueOverflow.index()],
        drops_deadline: o.dropped[DropReason::Deadline.index()],
        low_power_node_seconds: trace.low_power_node_seconds,
        controller_cpu_pct: controller,
        pruning_violations: trace.pruning_violations,
        snapshots: trace.snapshots,
        samples: trace.samples.len() as u64,
        batch: trace.batch,
    }
}

/// Series CSV: header row, LF endings, percents with two decimals.
pub fn series_csv(samples: &[Sample]) -> String {
    let mut s = String::with_capacity(samples.len() * 24 + 32);
    s.push_str(SERIES_HEADER);
    s.push('\n');
    for x in samples {
        let _ = writeln!(s, "{},{},{:.2},{:.0}", x.t_s, x.node_id, x.cpu_pct, x.mem_bytes);
    }
    s
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), MetricsError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| MetricsError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| MetricsError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| MetricsError::io(&tmp, e))?;
    f.sync_all().map_err(|e| MetricsError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| MetricsError::io(path, e))
}

pub fn export_summary(summary: &RunSummary, path: &Path) -> Result<(), MetricsError> {
    write_atomic(path, summary.to_json().as_bytes())
}

pub fn export_series(samples: &[Sample], path: &Path) -> Result<(), MetricsError> {
    write_atomic(path, series_csv(samples).as_bytes())
}

pub fn import_summary(path: &Path) -> Result<RunSummary, MetricsError> {
    let text = fs::read_to_string(path).map_err(|e| MetricsError::io(path, e))?;
    RunSummary::from_json(&text).map_err(|e| MetricsError::io(path, e))
}
