//! Two-shell circular-orbit propagation, ground stations and line-of-sight
//! visibility.
//!
//! Satellites follow circular two-body orbits. Ground stations sit on a
//! spherical Earth rotating at [`EARTH_ROTATION_RAD_S`]. Positions are in an
//! Earth-centred inertial frame, kilometres.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6378.137;
pub const MU_KM3_S2: f64 = 398_600.4418;
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// Atmosphere margin added to the Earth radius when testing ISL chords.
pub const ISL_ATMOSPHERE_MARGIN_KM: f64 = 80.0;
pub const ELEVATION_MASK_DEG: f64 = 10.0;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance_km(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShellId {
    Polar,
    Inclined,
}

impl ShellId {
    pub fn as_str(self) -> &'static str {
        match self {
            ShellId::Polar => "polar",
            ShellId::Inclined => "inclined",
        }
    }
}

/// One orbital shell.
///
/// `raan_spread_deg` is 180 for a Walker-star arrangement (the polar shell,
/// which has a counter-rotating seam between its last and first plane) and
/// 360 for a Walker-delta arrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalShell {
    pub shell_id: ShellId,
    pub sat_count: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub plane_count: usize,
    pub sats_per_plane: usize,
    /// In-plane phase shift between adjacent planes.
    pub phasing_offset_deg: f64,
    pub raan_spread_deg: f64,
}

impl OrbitalShell {
    pub fn polar() -> Self {
        Self {
            shell_id: ShellId::Polar,
            sat_count: 78,
            altitude_km: 1015.0,
            inclination_deg: 99.5,
            plane_count: 6,
            sats_per_plane: 13,
            phasing_offset_deg: 360.0 / 13.0 / 2.0,
            raan_spread_deg: 180.0,
        }
    }

    pub fn inclined() -> Self {
        Self {
            shell_id: ShellId::Inclined,
            sat_count: 120,
            altitude_km: 1325.0,
            inclination_deg: 50.88,
            plane_count: 20,
            sats_per_plane: 6,
            // Walker-delta 120/20/1
            phasing_offset_deg: 360.0 / 120.0,
            raan_spread_deg: 360.0,
        }
    }

    pub fn radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self) -> f64 {
        (MU_KM3_S2 / self.radius_km().powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    /// True when the shell has a counter-rotating seam between the last and
    /// the first plane.
    pub fn has_seam(&self) -> bool {
        self.raan_spread_deg < 359.0
    }

    pub fn check(&self) -> Result<(), String> {
        if self.plane_count == 0 || self.sats_per_plane == 0 {
            return Err(format!("{}: plane and slot counts must be positive", self.shell_id.as_str()));
        }
        if self.plane_count * self.sats_per_plane != self.sat_count {
            return Err(format!(
                "{}: plane_count x sats_per_plane = {} != sat_count {}",
                self.shell_id.as_str(),
                self.plane_count * self.sats_per_plane,
                self.sat_count
            ));
        }
        if !(self.altitude_km > 0.0) {
            return Err(format!("{}: altitude must be positive", self.shell_id.as_str()));
        }
        Ok(())
    }

    /// ECI position of (plane, slot) at time `t`.
    pub fn position(&self, plane: usize, slot: usize, t: f64) -> Vec3 {
        let r = self.radius_km();
        let inc = self.inclination_deg.to_radians();
        let raan = (plane as f64 * self.raan_spread_deg / self.plane_count as f64).to_radians();
        let u0 = (slot as f64 * 360.0 / self.sats_per_plane as f64
            + plane as f64 * self.phasing_offset_deg)
            .to_radians();
        let u = u0 + self.mean_motion() * t;
        let (su, cu) = u.sin_cos();
        let (so, co) = raan.sin_cos();
        let (si, ci) = inc.sin_cos();
        [
            r * (co * cu - so * su * ci),
            r * (so * cu + co * su * ci),
            r * su * si,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteEphemeris {
    pub node_id: usize,
    pub shell_id: ShellId,
    pub plane_index: usize,
    pub slot_index: usize,
    pub position_eci: Vec3,
    pub epoch_s: f64,
}

/// Positions of every satellite of `shell` at `t`, numbered from
/// `first_node_id` in plane-major order.
pub fn propagate(shell: &OrbitalShell, t: f64, first_node_id: usize) -> Vec<SatelliteEphemeris> {
    let mut out = Vec::with_capacity(shell.sat_count);
    for plane in 0..shell.plane_count {
        for slot in 0..shell.sats_per_plane {
            out.push(SatelliteEphemeris {
                node_id: first_node_id + plane * shell.sats_per_plane + slot,
                shell_id: shell.shell_id,
                plane_index: plane,
                slot_index: slot,
                position_eci: shell.position(plane, slot, t),
                epoch_s: t,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub is_controller_site: bool,
}

impl GroundStation {
    pub fn new(name: &str, lat: f64, lon: f64, controller: bool) -> Self {
        Self {
            name: name.to_string(),
            latitude_deg: lat,
            longitude_deg: lon,
            is_controller_site: controller,
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let lat = self.latitude_deg.to_radians();
        let lon = self.longitude_deg.to_radians() + EARTH_ROTATION_RAD_S * t;
        [
            EARTH_RADIUS_KM * lat.cos() * lon.cos(),
            EARTH_RADIUS_KM * lat.cos() * lon.sin(),
            EARTH_RADIUS_KM * lat.sin(),
        ]
    }
}

/// Default ground segment: ten sites across latitudes, one polar, two of
/// them hosting the SDN controllers.
pub fn default_ground_stations() -> Vec<GroundStation> {
    vec![
        GroundStation::new("ottawa", 45.42, -75.70, true),
        GroundStation::new("vancouver", 49.28, -123.12, false),
        GroundStation::new("iqaluit", 63.75, -68.52, false),
        GroundStation::new("svalbard", 78.23, 15.41, false),
        GroundStation::new("london", 51.51, -0.13, true),
        GroundStation::new("madrid", 40.42, -3.70, false),
        GroundStation::new("saopaulo", -23.55, -46.63, false),
        GroundStation::new("johannesburg", -26.20, 28.05, false),
        GroundStation::new("tokyo", 35.68, 139.69, false),
        GroundStation::new("sydney", -33.87, 151.21, false),
    ]
}

/// Line of sight between two satellites: the chord must clear the Earth
/// plus the atmosphere margin.
pub fn isl_visible(a: Vec3, b: Vec3) -> bool {
    segment_clears_sphere(a, b, EARTH_RADIUS_KM + ISL_ATMOSPHERE_MARGIN_KM)
}

/// Elevation of `sat` seen from ground point `gs`, degrees.
pub fn elevation_deg(gs: Vec3, sat: Vec3) -> f64 {
    let los = sub(sat, gs);
    let d = norm(los);
    if d == 0.0 {
        return 90.0;
    }
    (dot(los, gs) / (d * norm(gs))).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Ground-to-satellite visibility under the elevation mask.
pub fn ground_visible(gs: Vec3, sat: Vec3) -> bool {
    elevation_deg(gs, sat) >= ELEVATION_MASK_DEG
}

/// Visibility between two endpoints; a point on the Earth surface is treated
/// as a ground station.
pub fn visible(a: Vec3, b: Vec3) -> bool {
    let on_ground = |p: Vec3| norm(p) <= EARTH_RADIUS_KM + 1e-6;
    match (on_ground(a), on_ground(b)) {
        (true, false) => ground_visible(a, b),
        (false, true) => ground_visible(b, a),
        (true, true) => false,
        (false, false) => isl_visible(a, b),
    }
}

fn segment_clears_sphere(a: Vec3, b: Vec3, radius: f64) -> bool {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-dot(a, ab) / len2).clamp(0.0, 1.0)
    };
    let closest = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    norm(closest) > radius
}

/// Closed-open visibility window of a node pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessInterval {
    pub endpoint_a: usize,
    pub endpoint_b: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Turns a sampled visibility series into maximal runs. Sample `i` is at
/// `i * step_s`; a run ends one step after its last visible sample, capped
/// at `duration_s`. Zero-length runs are dropped.
pub fn runs_to_intervals(
    a: usize,
    b: usize,
    samples: &[bool],
    step_s: f64,
    duration_s: f64,
) -> Vec<AccessInterval> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in samples.iter().chain(std::iter::once(&false)).enumerate() {
        match (v, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let end = (i as f64 * step_s).min(duration_s);
                let st = s as f64 * step_s;
                if st < end {
                    out.push(AccessInterval {
                        endpoint_a: a,
                        endpoint_b: b,
                        start_s: st,
                        end_s: end,
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}
