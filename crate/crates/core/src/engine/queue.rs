//! FIFO servers for links and satellite CPUs.
//!
//! Both are deterministic: the server state is the instant it next becomes
//! free, and an arrival is accepted when the work already queued ahead of
//! it fits in the buffer.

use crate::metrics::DropReason;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission {
    /// Accepted; service completes at `done_s`.
    Admitted { done_s: f64 },
    Dropped(DropReason),
}

/// Transmit side of one directed link.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkQueue {
    pub free_at: f64,
}

impl LinkQueue {
    /// Bytes queued ahead of an arrival at `t`.
    pub fn backlog_bytes(&self, t: f64, rate_bps: f64) -> f64 {
        (self.free_at - t).max(0.0) * rate_bps / 8.0
    }
}

/// Byte-limited FIFO admission for `bytes` ready at `ready_s`.
pub fn queue_admit(
    q: &mut LinkQueue,
    ready_s: f64,
    bytes: f64,
    rate_bps: f64,
    capacity_bytes: f64,
) -> Admission {
    // tolerance absorbs round-off in the time/bytes conversion
    if q.backlog_bytes(ready_s, rate_bps) + bytes > capacity_bytes * (1.0 + 1e-9) {
        return Admission::Dropped(DropReason::QueueOverflow);
    }
    let done_s = q.free_at.max(ready_s) + bytes * 8.0 / rate_bps;
    q.free_at = done_s;
    Admission::Admitted { done_s }
}

/// Processing side of one satellite; the buffer is expressed as seconds of
/// queued work.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CpuServer {
    pub free_at: f64,
}

impl CpuServer {
    pub fn admit(&mut self, t: f64, units: f64, rate_units_per_s: f64, max_wait_s: f64) -> Admission {
        if self.free_at - t > max_wait_s {
            return Admission::Dropped(DropReason::QueueOverflow);
        }
        let done_s = self.free_at.max(t) + units / rate_units_per_s;
        self.free_at = done_s;
        Admission::Admitted { done_s }
    }

    /// Work that bypasses the buffer limit, such as route computation.
    pub fn occupy(&mut self, t: f64, units: f64, rate_units_per_s: f64) {
        self.free_at = self.free_at.max(t) + units / rate_units_per_s;
    }
}
