//! Scenario files: flat `key = value` lines, `#` comments, dotted keys.
//!
//! Every tunable has a default; an empty file is a complete scenario.
//! Unknown keys are violations. [`Scenario::echo`] prints the effective
//! configuration in the same format, so an echo parses back to an equal
//! scenario.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::constellation::{default_ground_stations, GroundStation, OrbitalShell, ShellId};
use crate::engine::NodeCostModel;
use crate::green::GreenParams;
use crate::topology::{Constellation, DEFAULT_LINK_CAPACITY_BPS, DEFAULT_REFRESH_S};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario invalid ({} violation(s)): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ScenarioInvalid(pub Vec<Violation>);

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub payload_bytes: u32,
    /// Number of random ground-station pairs when `pairs` is empty.
    pub flow_count: usize,
    /// Real packets represented by one simulated packet.
    pub batch: u32,
    /// Explicit (source, destination) station names.
    pub pairs: Vec<(String, String)>,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            payload_bytes: 512,
            flow_count: 100,
            batch: 64,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub polar: OrbitalShell,
    pub inclined: OrbitalShell,
    pub ground_stations: Vec<GroundStation>,
    pub allow_nonstandard: bool,
    pub green: GreenParams,
    pub cost: NodeCostModel,
    pub duration_s: f64,
    pub refresh_s: f64,
    pub queue_ms: f64,
    pub packet_timeout_s: f64,
    /// Resolution at which links are re-checked for loss of sight between
    /// refreshes.
    pub vanish_step_s: f64,
    /// Refresh periods by which hop-by-hop FIBs trail the topology.
    pub ospf_lag_refreshes: u32,
    pub link_capacity_bps: f64,
    pub traffic: TrafficSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            polar: OrbitalShell::polar(),
            inclined: OrbitalShell::inclined(),
            ground_stations: default_ground_stations(),
            allow_nonstandard: false,
            green: GreenParams::default(),
            cost: NodeCostModel::default(),
            duration_s: 3600.0,
            refresh_s: DEFAULT_REFRESH_S,
            queue_ms: 250.0,
            packet_timeout_s: 1.0,
            vanish_step_s: 1.0,
            ospf_lag_refreshes: 1,
            link_capacity_bps: DEFAULT_LINK_CAPACITY_BPS,
            traffic: TrafficSpec::default(),
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| format!("'{}' is not a number", v.trim()))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| format!("'{}' is not a non-negative integer", v.trim()))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        o => Err(format!("'{o}' is not a boolean")),
    }
}

impl Scenario {
    pub fn constellation(&self) -> Constellation {
        Constellation::new(
            vec![self.polar.clone(), self.inclined.clone()],
            self.ground_stations.clone(),
        )
    }

    /// Parses and validates; every problem is reported, not just the first.
    pub fn parse(text: &str) -> Result<Self, ScenarioInvalid> {
        let mut sc = Scenario::default();
        let mut violations = Vec::new();
        let mut ground: Vec<GroundStation> = Vec::new();
        let mut set_at: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                violations.push(Violation {
                    line: Some(line_no),
                    key: line.to_string(),
                    message: "expected 'key = value'".into(),
                });
                continue;
            };
            let key = key.trim();
            set_at.push((key.to_string(), line_no));
            if let Err(message) = sc.apply(key, value.trim(), &mut ground) {
                violations.push(Violation {
                    line: Some(line_no),
                    key: key.to_string(),
                    message,
                });
            }
        }
        if !ground.is_empty() {
            sc.ground_stations = ground;
        }
        // semantic problems point at the line that last set the value
        violations.extend(sc.violations().into_iter().map(|mut v| {
            v.line = set_at
                .iter()
                .rev()
                .find(|(k, _)| *k == v.key || v.message.starts_with(&format!("{k} ")))
                .map(|&(_, l)| l);
            v
        }));
        if violations.is_empty() {
            Ok(sc)
        } else {
            Err(ScenarioInvalid(violations))
        }
    }

    fn apply(&mut self, key: &str, v: &str, ground: &mut Vec<GroundStation>) -> Result<(), String> {
        if let Some(name) = key.strip_prefix("ground.") {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() < 2 || parts.len() > 3 {
                return Err("expected 'lat, lon[, controller]'".into());
            }
            let controller = match parts.get(2) {
                None | Some(&"-") => false,
                Some(&"controller") => true,
                Some(o) => return Err(format!("unknown station flag '{o}'")),
            };
            ground.push(GroundStation::new(name, parse_f64(parts[0])?, parse_f64(parts[1])?, controller));
            return Ok(());
        }
        for (prefix, shell) in [("polar.", &mut self.polar), ("inclined.", &mut self.inclined)] {
            if let Some(field) = key.strip_prefix(prefix) {
                match field {
                    "planes" => shell.plane_count = parse_usize(v)?,
                    "sats_per_plane" => shell.sats_per_plane = parse_usize(v)?,
                    "altitude_km" => shell.altitude_km = parse_f64(v)?,
                    "inclination_deg" => shell.inclination_deg = parse_f64(v)?,
                    "phasing_offset_deg" => shell.phasing_offset_deg = parse_f64(v)?,
                    "raan_spread_deg" => shell.raan_spread_deg = parse_f64(v)?,
                    _ => return Err("unknown key".into()),
                }
                shell.sat_count = shell.plane_count * shell.sats_per_plane;
                return Ok(());
            }
        }
        let c = &mut self.cost;
        match key {
            "allow_nonstandard" => self.allow_nonstandard = parse_bool(v)?,
            "green.cpu_th_pct" => self.green.cpu_th_pct = parse_f64(v)?,
            "green.idle_cpu_pct" => self.green.idle_cpu_pct = parse_f64(v)?,
            "green.idle_time_s" => self.green.idle_time_s = parse_f64(v)?,
            "green.baseline" => self.green.baseline = parse_f64(v)?,
            "green.placement_gain" => self.green.placement_gain = parse_f64(v)?,
            "cost.c_lookup_v4" => c.c_lookup_v4 = parse_f64(v)?,
            "cost.c_lookup_v6" => c.c_lookup_v6 = parse_f64(v)?,
            "cost.c_mpls_swap" => c.c_mpls_swap = parse_f64(v)?,
            "cost.c_srv6_end" => c.c_srv6_end = parse_f64(v)?,
            "cost.c_srv6_transit" => c.c_srv6_transit = parse_f64(v)?,
            "cost.c_encap" => c.c_encap = parse_f64(v)?,
            "cost.c_spf_per_unit" => c.c_spf_per_unit = parse_f64(v)?,
            "cost.capacity_units_per_s" => c.capacity_units_per_s = parse_f64(v)?,
            "cost.window_s" => c.window_s = parse_f64(v)?,
            "cost.idle_units_per_s" => c.idle_units_per_s = parse_f64(v)?,
            "cost.controller_units_per_s" => c.controller_units_per_s = parse_f64(v)?,
            "sim.duration_s" => self.duration_s = parse_f64(v)?,
            "sim.refresh_s" => self.refresh_s = parse_f64(v)?,
            "sim.queue_ms" => self.queue_ms = parse_f64(v)?,
            "sim.packet_timeout_s" => self.packet_timeout_s = parse_f64(v)?,
            "sim.vanish_step_s" => self.vanish_step_s = parse_f64(v)?,
            "sim.ospf_lag_refreshes" => self.ospf_lag_refreshes = parse_usize(v)? as u32,
            "link.capacity_bps" => self.link_capacity_bps = parse_f64(v)?,
            "traffic.payload_bytes" => self.traffic.payload_bytes = parse_usize(v)? as u32,
            "traffic.flow_count" => self.traffic.flow_count = parse_usize(v)?,
            "traffic.batch" => self.traffic.batch = parse_usize(v)? as u32,
            "traffic.pairs" => {
                self.traffic.pairs.clear();
                for p in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (a, b) = p
                        .split_once(':')
                        .ok_or_else(|| format!("pair '{p}' is not 'src:dst'"))?;
                    self.traffic.pairs.push((a.trim().to_string(), b.trim().to_string()));
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Semantic checks of an assembled scenario.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |key: &str, message: String| {
            out.push(Violation {
                line: None,
                key: key.to_string(),
                message,
            })
        };
        for (name, shell, count, alt) in [
            ("polar", &self.polar, 78usize, 1015.0),
            ("inclined", &self.inclined, 120usize, 1325.0),
        ] {
            if let Err(e) = shell.check() {
                bad(name, e);
            }
            if !self.allow_nonstandard {
                if shell.sat_count != count {
                    bad(name, format!("satellite count {} != {count}", shell.sat_count));
                }
                if shell.altitude_km != alt {
                    bad(name, format!("altitude {} km != {alt} km", shell.altitude_km));
                }
            }
        }
        let gs = &self.ground_stations;
        if !self.allow_nonstandard && gs.len() != 10 {
            bad("ground", format!("ground station count != 10 (got {})", gs.len()));
        }
        let controllers = gs.iter().filter(|g| g.is_controller_site).count();
        if !self.allow_nonstandard && controllers != 2 {
            bad("ground", format!("controller site count != 2 (got {controllers})"));
        }
        if gs.len() < 2 {
            bad("ground", "at least two ground stations are required".into());
        }
        for g in gs {
            if !(-90.0..=90.0).contains(&g.latitude_deg) || !(-180.0..=360.0).contains(&g.longitude_deg) {
                bad(&format!("ground.{}", g.name), "latitude/longitude out of range".into());
            }
        }
        for v in self.green.violations() {
            bad("green", v);
        }
        for v in self.cost.violations() {
            bad("cost", v);
        }
        let positive = [
            ("sim.duration_s", self.duration_s),
            ("sim.refresh_s", self.refresh_s),
            ("sim.queue_ms", self.queue_ms),
            ("sim.packet_timeout_s", self.packet_timeout_s),
            ("sim.vanish_step_s", self.vanish_step_s),
            ("link.capacity_bps", self.link_capacity_bps),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                bad(k, format!("{v} must be positive"));
            }
        }
        if self.traffic.payload_bytes == 0 {
            bad("traffic.payload_bytes", "must be positive".into());
        }
        if self.traffic.batch == 0 {
            bad("traffic.batch", "must be positive".into());
        }
        if self.traffic.pairs.is_empty() && self.traffic.flow_count == 0 {
            bad("traffic.flow_count", "must be positive".into());
        }
        for (a, b) in &self.traffic.pairs {
            for n in [a, b] {
                if !gs.iter().any(|g| &g.name == n) {
                    bad("traffic.pairs", format!("unknown ground station '{n}'"));
                }
            }
            if a == b {
                bad("traffic.pairs", format!("pair '{a}:{b}' has identical endpoints"));
            }
        }
        let mut names: Vec<&str> = gs.iter().map(|g| g.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != gs.len() {
            bad("ground", "duplicate station names".into());
        }
        out
    }

    /// Effective configuration, one `key = value` per tunable.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "allow_nonstandard = {}", self.allow_nonstandard);
        for (p, sh) in [("polar", &self.polar), ("inclined", &self.inclined)] {
            debug_assert!(matches!(sh.shell_id, ShellId::Polar | ShellId::Inclined));
            let _ = writeln!(s, "{p}.planes = {}", sh.plane_count);
            let _ = writeln!(s, "{p}.sats_per_plane = {}", sh.sats_per_plane);
            let _ = writeln!(s, "{p}.altitude_km = {}", sh.altitude_km);
            let _ = writeln!(s, "{p}.inclination_deg = {}", sh.inclination_deg);
            let _ = writeln!(s, "{p}.phasing_offset_deg = {}", sh.phasing_offset_deg);
            let _ = writeln!(s, "{p}.raan_spread_deg = {}", sh.raan_spread_deg);
        }
        for g in &self.ground_stations {
            let flag = if g.is_controller_site { "controller" } else { "-" };
            let _ = writeln!(s, "ground.{} = {}, {}, {flag}", g.name, g.latitude_deg, g.longitude_deg);
        }
        let gp = &self.green;
        let _ = writeln!(s, "green.cpu_th_pct = {}", gp.cpu_th_pct);
        let _ = writeln!(s, "green.idle_cpu_pct = {}", gp.idle_cpu_pct);
        let _ = writeln!(s, "green.idle_time_s = {}", gp.idle_time_s);
        let _ = writeln!(s, "green.baseline = {}", gp.baseline);
        let _ = writeln!(s, "green.placement_gain = {}", gp.placement_gain);
        let c = &self.cost;
        for (k, v) in [
            ("c_lookup_v4", c.c_lookup_v4),
            ("c_lookup_v6", c.c_lookup_v6),
            ("c_mpls_swap", c.c_mpls_swap),
            ("c_srv6_end", c.c_srv6_end),
            ("c_srv6_transit", c.c_srv6_transit),
            ("c_encap", c.c_encap),
            ("c_spf_per_unit", c.c_spf_per_unit),
            ("capacity_units_per_s", c.capacity_units_per_s),
            ("window_s", c.window_s),
            ("idle_units_per_s", c.idle_units_per_s),
            ("controller_units_per_s", c.controller_units_per_s),
        ] {
            let _ = writeln!(s, "cost.{k} = {v}");
        }
        let _ = writeln!(s, "sim.duration_s = {}", self.duration_s);
        let _ = writeln!(s, "sim.refresh_s = {}", self.refresh_s);
        let _ = writeln!(s, "sim.queue_ms = {}", self.queue_ms);
        let _ = writeln!(s, "sim.packet_timeout_s = {}", self.packet_timeout_s);
        let _ = writeln!(s, "sim.vanish_step_s = {}", self.vanish_step_s);
        let _ = writeln!(s, "sim.ospf_lag_refreshes = {}", self.ospf_lag_refreshes);
        let _ = writeln!(s, "link.capacity_bps = {}", self.link_capacity_bps);
        let t = &self.traffic;
        let _ = writeln!(s, "traffic.payload_bytes = {}", t.payload_bytes);
        let _ = writeln!(s, "traffic.flow_count = {}", t.flow_count);
        let _ = writeln!(s, "traffic.batch = {}", t.batch);
        let pairs: Vec<String> = t.pairs.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let _ = writeln!(s, "traffic.pairs = {}", pairs.join(", "));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let sc = Scenario::parse("").unwrap();
        assert_eq!(sc, Scenario::default());
        assert_eq!(sc.polar.sat_count + sc.inclined.sat_count, 198);
        assert_eq!(sc.ground_stations.len(), 10);
        assert_eq!(sc.link_capacity_bps, 20e6);
        assert_eq!(sc.refresh_s, 10.0);
        assert_eq!(sc.traffic.payload_bytes, 512);
        assert_eq!(sc.green.cpu_th_pct, 80.0);
        assert_eq!(sc.packet_timeout_s, 1.0);
    }

    #[test]
    fn echo_round_trips() {
        let sc = Scenario::default();
        assert_eq!(Scenario::parse(&sc.echo()).unwrap(), sc);
        let mut sc2 = sc.clone();
        sc2.traffic.pairs = vec![("ottawa".into(), "tokyo".into())];
        sc2.green.cpu_th_pct = 70.0;
        assert_eq!(Scenario::parse(&sc2.echo()).unwrap(), sc2);
    }

    #[test]
    fn nine_stations_rejected_unless_allowed() {
        let mut text = String::new();
        for i in 0..9 {
            let flag = if i < 2 { "controller" } else { "-" };
            text.push_str(&format!("ground.g{i} = {}, 10, {flag}\n", i * 5));
        }
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.0.iter().any(|v| v.message.contains("ground station count != 10")));
        text.push_str("allow_nonstandard = true\n");
        assert!(Scenario::parse(&text).is_ok());
    }

    #[test]
    fn all_violations_reported() {
        let err = Scenario::parse("green.cpu_th_pct = 105\nbogus = 1\nsim.queue_ms = -3\n").unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
        let lines: Vec<Option<usize>> = err.0.iter().map(|v| v.line).collect();
        assert!(lines.contains(&Some(1)) && lines.contains(&Some(2)) && lines.contains(&Some(3)), "{err}");
        assert!(err.0.iter().any(|v| v.message.contains("out of range")));
    }

    #[test]
    fn comments_and_spacing() {
        let sc = Scenario::parse("# hi\n  green.cpu_th_pct=70 # inline\n\n").unwrap();
        assert_eq!(sc.green.cpu_th_pct, 70.0);
    }
}
