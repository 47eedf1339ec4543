//! Protocol x load x seed grids and the orderings checked over them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::{run, EngineError};
use crate::metrics::RunSummary;
use crate::routing::ProtocolKind;
use crate::scenario::Scenario;

pub const GRID_HEADER: &str = "protocol,load,seed,pdr_pct,peak_cpu_pct,avg_cpu_pct,avg_mem_bytes,overhead_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub protocols: Vec<ProtocolKind>,
    pub loads: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    /// Every protocol at loads 0.1..=1.0 over seeds 1..=3.
    fn default() -> Self {
        Self {
            protocols: ProtocolKind::ALL.to_vec(),
            loads: (1..=10).map(|i| i as f64 / 10.0).collect(),
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub protocol: ProtocolKind,
    pub load: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            for &load in &self.loads {
                for &seed in &self.seeds {
                    out.push(Cell { protocol, load, seed });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub protocol: ProtocolKind,
    pub load: f64,
    pub seed: u64,
    pub pdr_pct: f64,
    pub peak_cpu_pct: f64,
    pub avg_cpu_pct: f64,
    pub avg_mem_bytes: f64,
    pub overhead_pct: f64,
}

impl GridRow {
    pub fn from_summary(s: &RunSummary) -> Self {
        Self {
            protocol: s.protocol,
            load: s.load_fraction,
            seed: s.seed,
            pdr_pct: s.pdr_pct,
            peak_cpu_pct: s.peak_cpu_pct,
            avg_cpu_pct: s.avg_cpu_pct,
            avg_mem_bytes: s.avg_mem_bytes,
            overhead_pct: s.overhead_pct,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell {
            protocol: self.protocol,
            load: self.load,
            seed: self.seed,
        }
    }

    fn key(&self) -> (ProtocolKind, u64, u64) {
        (self.protocol, load_key(self.load), self.seed)
    }
}

/// Loads compared at the precision they are written with.
pub fn load_key(load: f64) -> u64 {
    (load * 1e6).round() as u64
}

pub fn run_cell(scenario: &Scenario, cell: Cell) -> Result<GridRow, EngineError> {
    Ok(GridRow::from_summary(&run(scenario, cell.protocol, cell.load, cell.seed)?))
}

/// Cells of `spec` not yet present in `done`.
pub fn pending(spec: &GridSpec, done: &[GridRow]) -> Vec<Cell> {
    let have: std::collections::BTreeSet<_> = done.iter().map(GridRow::key).collect();
    spec.cells()
        .into_iter()
        .filter(|c| !have.contains(&(c.protocol, load_key(c.load), c.seed)))
        .collect()
}

/// Runs every cell in order on the calling thread.
pub fn run_grid(scenario: &Scenario, spec: &GridSpec) -> Result<Vec<GridRow>, EngineError> {
    let mut rows = spec.cells().into_iter().map(|c| run_cell(scenario, c)).collect::<Result<Vec<_>, _>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [GridRow]) {
    rows.sort_by_key(GridRow::key);
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut s = String::from(GRID_HEADER);
    s.push('\n');
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.2},{:.2},{:.2},{:.0},{:.2}",
            r.protocol, r.load, r.seed, r.pdr_pct, r.peak_cpu_pct, r.avg_cpu_pct, r.avg_mem_bytes, r.overhead_pct
        );
    }
    s
}

#[derive(Debug, Error, PartialEq)]
#[error("grid.csv line {line}: {message}")]
pub struct GridParseError {
    pub line: usize,
    pub message: String,
}

pub fn parse_grid_csv(text: &str) -> Result<Vec<GridRow>, GridParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == GRID_HEADER => {}
        _ => {
            return Err(GridParseError {
                line: 1,
                message: format!("expected header '{GRID_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| GridParseError { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        rows.push(GridRow {
            protocol: f[0].trim().parse().map_err(err)?,
            load: num(1)?,
            seed: f[2].trim().parse().map_err(|e| err(format!("field 3: {e}")))?,
            pdr_pct: num(3)?,
            peak_cpu_pct: num(4)?,
            avg_cpu_pct: num(5)?,
            avg_mem_bytes: num(6)?,
            overhead_pct: num(7)?,
        });
    }
    Ok(rows)
}

/// Seed-averaged metrics of one protocol at one load.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellMean {
    pub pdr_pct: f64,
    pub peak_cpu_pct: f64,
    pub avg_cpu_pct: f64,
    pub avg_mem_bytes: f64,
    pub seeds: usize,
}

pub fn seed_means(rows: &[GridRow]) -> BTreeMap<(ProtocolKind, u64), CellMean> {
    let mut m: BTreeMap<(ProtocolKind, u64), CellMean> = BTreeMap::new();
    for r in rows {
        let e = m.entry((r.protocol, load_key(r.load))).or_default();
        e.pdr_pct += r.pdr_pct;
        e.peak_cpu_pct += r.peak_cpu_pct;
        e.avg_cpu_pct += r.avg_cpu_pct;
        e.avg_mem_bytes += r.avg_mem_bytes;
        e.seeds += 1;
    }
    for e in m.values_mut() {
        let n = e.seeds as f64;
        e.pdr_pct /= n;
        e.peak_cpu_pct /= n;
        e.avg_cpu_pct /= n;
        e.avg_mem_bytes /= n;
    }
    m
}

/// Outcome of one ordering check; `failures` is empty when it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn loads_of(means: &BTreeMap<(ProtocolKind, u64), CellMean>) -> Vec<u64> {
    let mut l: Vec<u64> = means.keys().map(|k| k.1).collect();
    l.sort_unstable();
    l.dedup();
    l
}

fn load_of(key: u64) -> f64 {
    key as f64 / 1e6
}

/// PDR shape on seed means: non-increasing in load for every protocol,
/// IPv4 below 70% at full load, green at least 10 points above IPv4 there.
pub fn check_pdr(rows: &[GridRow]) -> Check {
    let mut failures = Vec::new();
    let means = seed_means(rows);
    let mut series: BTreeMap<ProtocolKind, Vec<(u64, f64)>> = BTreeMap::new();
    for (&(p, l), m) in &means {
        series.entry(p).or_default().push((l, m.pdr_pct));
    }
    for (p, s) in series {
        for w in s.windows(2) {
            if w[1].1 > w[0].1 {
                failures.push(format!(
                    "{p}: mean pdr rises from {:.2} at load {} to {:.2} at load {}",
                    w[0].1,
                    load_of(w[0].0),
                    w[1].1,
                    load_of(w[1].0)
                ));
            }
        }
    }
    let full = load_key(1.0);
    match (means.get(&(ProtocolKind::Ipv4, full)), means.get(&(ProtocolKind::Srv6Green, full))) {
        (Some(v4), Some(g)) => {
            if !(v4.pdr_pct < 70.0) {
                failures.push(format!("ipv4 pdr {:.2} at load 1.0 is not below 70", v4.pdr_pct));
            }
            if !(g.pdr_pct >= v4.pdr_pct + 10.0) {
                failures.push(format!(
                    "srv6-green pdr {:.2} is not 10 points above ipv4 {:.2} at load 1.0",
                    g.pdr_pct, v4.pdr_pct
                ));
            }
        }
        _ => failures.push("grid lacks ipv4 or srv6-green at load 1.0".into()),
    }
    Check { name: "pdr shape", failures }
}

/// CPU ordering at every load of at least 0.5, on seed means.
pub fn check_cpu(rows: &[GridRow]) -> Check {
    use ProtocolKind::*;
    let mut failures = Vec::new();
    let means = seed_means(rows);
    let mut seen = false;
    for l in loads_of(&means).into_iter().filter(|&l| l >= load_key(0.5)) {
        let get = |p| means.get(&(p, l)).copied();
        let (Some(v4), Some(v6), Some(mp), Some(sr), Some(g)) =
            (get(Ipv4), get(Ipv6), get(Mpls), get(Srv6), get(Srv6Green))
        else {
            failures.push(format!("load {}: missing protocols", load_of(l)));
            continue;
        };
        seen = true;
        let at = load_of(l);
        if !(g.avg_cpu_pct < sr.avg_cpu_pct) {
            failures.push(format!("load {at}: avg srv6-green {:.2} >= srv6 {:.2}", g.avg_cpu_pct, sr.avg_cpu_pct));
        }
        if !(sr.avg_cpu_pct < mp.avg_cpu_pct) {
            failures.push(format!("load {at}: avg srv6 {:.2} >= mpls {:.2}", sr.avg_cpu_pct, mp.avg_cpu_pct));
        }
        let hop = v4.avg_cpu_pct.min(v6.avg_cpu_pct);
        if !(mp.avg_cpu_pct < hop) {
            failures.push(format!("load {at}: avg mpls {:.2} >= min(ipv4, ipv6) {:.2}", mp.avg_cpu_pct, hop));
        }
        if !((v4.avg_cpu_pct - v6.avg_cpu_pct).abs() < 5.0) {
            failures.push(format!(
                "load {at}: avg ipv4 {:.2} and ipv6 {:.2} differ by 5 or more",
                v4.avg_cpu_pct, v6.avg_cpu_pct
            ));
        }
        if !(g.peak_cpu_pct >= sr.peak_cpu_pct) {
            failures.push(format!("load {at}: peak srv6-green {:.2} < srv6 {:.2}", g.peak_cpu_pct, sr.peak_cpu_pct));
        }
    }
    if !seen {
        failures.push("grid has no load >= 0.5".into());
    }
    Check { name: "cpu ordering", failures }
}

/// Memory ordering at full load: MPLS highest, green at least SRv6.
pub fn check_memory(rows: &[GridRow]) -> Check {
    let mut failures = Vec::new();
    let means = seed_means(rows);
    let full = load_key(1.0);
    let get = |p| means.get(&(p, full)).map(|m| m.avg_mem_bytes);
    match get(ProtocolKind::Mpls) {
        Some(mpls) => {
            for p in ProtocolKind::ALL {
                if let Some(m) = get(p) {
                    if p != ProtocolKind::Mpls && !(m < mpls) {
                        failures.push(format!("avg mem {p} {m:.0} is not below mpls {mpls:.0}"));
                    }
                }
            }
        }
        None => failures.push("grid lacks mpls at load 1.0".into()),
    }
    match (get(ProtocolKind::Srv6Green), get(ProtocolKind::Srv6)) {
        (Some(g), Some(s)) if g < s => failures.push(format!("avg mem srv6-green {g:.0} < srv6 {s:.0}")),
        (Some(_), Some(_)) => {}
        _ => failures.push("grid lacks srv6 variants at load 1.0".into()),
    }
    Check { name: "memory ordering", failures }
}

pub fn check_orderings(rows: &[GridRow]) -> Vec<Check> {
    vec![check_pdr(rows), check_cpu(rows), check_memory(rows)]
}
