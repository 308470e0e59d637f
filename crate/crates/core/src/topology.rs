//! Node placement, 3D random-walk mobility and the time-varying UAV graph.
//!
//! Ground devices (SDs) and base stations (BSs) never move. UAVs redraw
//! speed, azimuth and elevation at the start of every slot, move in a
//! straight line for the slot, and are reflected at the edges of the
//! deployment area and altitude band.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        euclidean_distance(self, other)
    }

    /// Horizontal (ground-plane) distance.
    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Straight-line distance between two points in meters.
pub fn euclidean_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    SensorDevice,
    Uav,
    BaseStation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UavClass {
    Collect,
    Relay,
    Downlink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Only set for UAVs.
    pub class: Option<UavClass>,
    pub position: Point3,
    /// CPU cycles per second available for consensus work.
    pub compute_hz: f64,
    /// Ledger storage capacity in bytes.
    pub storage_bytes: f64,
}

impl Node {
    pub fn is_uav(&self) -> bool {
        self.kind == NodeKind::Uav
    }
}

/// Per-slot kinematic state of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    /// m/s
    pub speed: f64,
    /// radians in [0, 2π)
    pub azimuth: f64,
    /// radians in [-π/2, π/2]
    pub elevation: f64,
}

impl MobilityState {
    pub fn velocity(&self) -> Point3 {
        let horizontal = self.speed * self.elevation.cos();
        Point3 {
            x: horizontal * self.azimuth.cos(),
            y: horizontal * self.azimuth.sin(),
            z: self.speed * self.elevation.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub area_x_m: f64,
    pub area_y_m: f64,
    pub altitude_min_m: f64,
    pub altitude_max_m: f64,
    pub d_min_m: f64,
    /// Maximum UAV communication range; also used for SD uplinks and BS downlinks.
    pub d_max_m: f64,
    pub n_sds: usize,
    pub n_uavs: usize,
    pub n_bss: usize,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub slot_length_s: f64,
    /// Probability that a UAV keeps last slot's heading instead of resampling.
    pub persistence: f64,
    pub compute_min_hz: f64,
    pub compute_max_hz: f64,
    pub storage_min_bytes: f64,
    pub storage_max_bytes: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            area_x_m: 15_000.0,
            area_y_m: 5_000.0,
            altitude_min_m: 200.0,
            altitude_max_m: 400.0,
            d_min_m: 10.0,
            d_max_m: 6_000.0,
            n_sds: 3,
            n_uavs: 8,
            n_bss: 1,
            speed_min_mps: 3.0,
            speed_max_mps: 5.0,
            slot_length_s: 0.5,
            persistence: 0.0,
            compute_min_hz: 2.0e9,
            compute_max_hz: 4.0e9,
            storage_min_bytes: 1.0e9,
            storage_max_bytes: 4.0e9,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if !(self.area_x_m > 0.0 && self.area_y_m > 0.0) {
            bad("area_x_m/area_y_m", "area must be positive");
        }
        if !(self.altitude_min_m > 0.0) {
            bad("altitude_min_m", "must be > 0");
        }
        if self.altitude_max_m < self.altitude_min_m {
            bad("altitude_max_m", "must be >= altitude_min_m");
        }
        if !(self.d_min_m < self.d_max_m) {
            bad("d_min_m", "must be < d_max_m");
        }
        if self.n_uavs == 0 {
            bad("n_uavs", "at least one UAV is required");
        }
        if !(self.speed_min_mps >= 0.0 && self.speed_min_mps <= self.speed_max_mps) {
            bad("speed_min_mps", "need 0 <= speed_min_mps <= speed_max_mps");
        }
        if !(self.slot_length_s > 0.0) {
            bad("slot_length_s", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            bad("persistence", "must be a probability");
        }
        if !(self.compute_min_hz > 0.0 && self.compute_min_hz <= self.compute_max_hz) {
            bad("compute_min_hz", "need 0 < compute_min_hz <= compute_max_hz");
        }
        if !(self.storage_min_bytes > 0.0 && self.storage_min_bytes <= self.storage_max_bytes) {
            bad("storage_min_bytes", "need 0 < storage_min_bytes <= storage_max_bytes");
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            x_max: self.area_x_m,
            y_max: self.area_y_m,
            z_min: self.altitude_min_m,
            z_max: self.altitude_max_m,
        }
    }
}

/// Axis-aligned box UAVs must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_max: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Bounds {
    pub fn contains(&self, p: &Point3) -> bool {
        (0.0..=self.x_max).contains(&p.x)
            && (0.0..=self.y_max).contains(&p.y)
            && (self.z_min..=self.z_max).contains(&p.z)
    }
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let span = hi - lo;
    // fold onto [0, 2*span) then mirror the upper half
    let mut t = (v - lo).rem_euclid(2.0 * span);
    if t > span {
        t = 2.0 * span - t;
    }
    lo + t
}

/// Advance one UAV by one slot with the given kinematics, reflecting at the bounds.
pub fn step_mobility(
    node: &Node,
    state: &MobilityState,
    bounds: &Bounds,
    slot_length_s: f64,
) -> Result<Node> {
    if !node.is_uav() {
        return Err(Error::NotAUav(node.id));
    }
    let v = state.velocity();
    let p = node.position;
    let moved = Point3 {
        x: reflect(p.x + v.x * slot_length_s, 0.0, bounds.x_max),
        y: reflect(p.y + v.y * slot_length_s, 0.0, bounds.y_max),
        z: reflect(p.z + v.z * slot_length_s, bounds.z_min, bounds.z_max),
    };
    Ok(Node {
        position: moved,
        ..node.clone()
    })
}

/// Draw a fresh (speed, azimuth, elevation) triple uniformly from the configured ranges.
pub fn sample_mobility<R: Rng + ?Sized>(cfg: &TopologyConfig, rng: &mut R) -> MobilityState {
    use std::f64::consts::{FRAC_PI_2, TAU};
    let speed = if cfg.speed_max_mps > cfg.speed_min_mps {
        rng.random_range(cfg.speed_min_mps..=cfg.speed_max_mps)
    } else {
        cfg.speed_min_mps
    };
    MobilityState {
        speed,
        azimuth: rng.random_range(0.0..TAU),
        elevation: rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborScan {
    /// UAV ids within range, ascending.
    pub neighbors: Vec<NodeId>,
    /// UAV ids closer than the safety distance.
    pub violations: Vec<NodeId>,
}

/// UAVs reachable from `u` (inclusive range check) plus any minimum-separation violations.
pub fn neighbor_set(u: &Node, nodes: &[Node], d_max: f64, d_min: f64) -> Result<NeighborScan> {
    if !u.is_uav() {
        return Err(Error::NotAUav(u.id));
    }
    let mut scan = NeighborScan::default();
    for other in nodes.iter().filter(|n| n.is_uav() && n.id != u.id) {
        let d = u.position.distance(&other.position);
        if d <= d_max {
            scan.neighbors.push(other.id);
        }
        if d < d_min {
            scan.violations.push(other.id);
        }
    }
    scan.neighbors.sort_unstable();
    scan.violations.sort_unstable();
    Ok(scan)
}

/// Rows of the optional position trace: (slot, node_id, x, y, z).
pub type TraceRow = (u64, NodeId, f64, f64, f64);

/// The full node set with per-UAV kinematics.
#[derive(Debug, Clone)]
pub struct Topology {
    pub config: TopologyConfig,
    nodes: Vec<Node>,
    active: Vec<bool>,
    kinematics: Vec<Option<MobilityState>>,
    /// Total number of d_min violations observed so far (each unordered pair once per slot).
    pub separation_violations: u64,
}

impl Topology {
    /// Place SDs near the left edge, BSs near the right edge and UAVs stratified
    /// into thirds of the x-axis (collect, relay, downlink).
    pub fn generate<R: Rng + ?Sized>(config: &TopologyConfig, rng: &mut R) -> Result<Self> {
        let mut errors = Vec::new();
        config.validate("topology", &mut errors);
        if !errors.is_empty() {
            return Err(Error::InvalidConfig(errors));
        }
        let c = config;
        let mut nodes = Vec::with_capacity(c.n_sds + c.n_uavs + c.n_bss);
        let edge = c.area_x_m / 15.0;
        for _ in 0..c.n_sds {
            let id = nodes.len();
            nodes.push(Node {
                id,
                kind: NodeKind::SensorDevice,
                class: None,
                position: Point3::new(
                    rng.random_range(0.0..=edge),
                    rng.random_range(0.0..=c.area_y_m),
                    0.0,
                ),
                compute_hz: 0.0,
                storage_bytes: 0.0,
            });
        }
        let third = c.area_x_m / 3.0;
        for k in 0..c.n_uavs {
            let id = nodes.len();
            // round-robin over bands keeps every band populated when U >= 3
            let band = k % 3;
            let class = match band {
                0 => UavClass::Collect,
                1 => UavClass::Relay,
                _ => UavClass::Downlink,
            };
            let x0 = third * band as f64;
            nodes.push(Node {
                id,
                kind: NodeKind::Uav,
                class: Some(class),
                position: Point3::new(
                    rng.random_range(x0..=x0 + third),
                    rng.random_range(0.0..=c.area_y_m),
                    rng.random_range(c.altitude_min_m..=c.altitude_max_m),
                ),
                compute_hz: rng.random_range(c.compute_min_hz..=c.compute_max_hz),
                storage_bytes: rng.random_range(c.storage_min_bytes..=c.storage_max_bytes),
            });
        }
        for _ in 0..c.n_bss {
            let id = nodes.len();
            nodes.push(Node {
                id,
                kind: NodeKind::BaseStation,
                class: None,
                position: Point3::new(
                    rng.random_range(c.area_x_m - edge..=c.area_x_m),
                    rng.random_range(0.0..=c.area_y_m),
                    0.0,
                ),
                compute_hz: 0.0,
                storage_bytes: 0.0,
            });
        }
        Ok(Self::from_nodes(config.clone(), nodes))
    }

    pub fn from_nodes(config: TopologyConfig, nodes: Vec<Node>) -> Self {
        debug_assert!(nodes.iter().enumerate().all(|(i, n)| n.id == i));
        let n = nodes.len();
        Self {
            config,
            nodes,
            active: vec![true; n],
            kinematics: vec![None; n],
            separation_violations: 0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn is_active(&self, id: NodeId) -> bool {
        self.active.get(id).copied().unwrap_or(false)
    }

    pub fn position(&self, id: NodeId) -> Point3 {
        self.nodes[id].position
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.nodes[a].position.distance(&self.nodes[b].position)
    }

    fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.kind == kind)
            .map(|n| n.id)
            .filter(|&id| self.active[id])
    }

    pub fn uav_ids(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Uav).collect()
    }

    pub fn sd_ids(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::SensorDevice).collect()
    }

    pub fn bs_ids(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::BaseStation).collect()
    }

    /// Add a UAV at runtime (membership join). Returns its new id.
    pub fn add_uav(&mut self, mut node: Node) -> NodeId {
        let id = self.nodes.len();
        node.id = id;
        node.kind = NodeKind::Uav;
        self.nodes.push(node);
        self.active.push(true);
        self.kinematics.push(None);
        id
    }

    pub fn deactivate(&mut self, id: NodeId) {
        if let Some(a) = self.active.get_mut(id) {
            *a = false;
        }
    }

    /// Active UAVs within `d_max` of UAV `u`, ascending by id.
    pub fn neighbors(&self, u: NodeId) -> Result<Vec<NodeId>> {
        let node = self.node(u)?;
        if !node.is_uav() {
            return Err(Error::NotAUav(u));
        }
        let d_max = self.config.d_max_m;
        Ok(self
            .uav_ids()
            .into_iter()
            .filter(|&k| k != u && self.distance(u, k) <= d_max)
            .collect())
    }

    /// Count unordered UAV pairs currently closer than d_min.
    pub fn count_violations(&self) -> u64 {
        let uavs = self.uav_ids();
        let mut n = 0;
        for (i, &a) in uavs.iter().enumerate() {
            for &b in &uavs[i + 1..] {
                if self.distance(a, b) < self.config.d_min_m {
                    n += 1;
                }
            }
        }
        n
    }

    /// One mobility slot for every active UAV, in ascending id order.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bounds = self.config.bounds();
        let tau = self.config.slot_length_s;
        for id in self.uav_ids() {
            let keep = self.config.persistence > 0.0 && rng.random_bool(self.config.persistence);
            let state = match (keep, self.kinematics[id]) {
                (true, Some(s)) => s,
                _ => sample_mobility(&self.config, rng),
            };
            self.kinematics[id] = Some(state);
            // step_mobility only fails for non-UAVs, which uav_ids excludes
            if let Ok(moved) = step_mobility(&self.nodes[id], &state, &bounds, tau) {
                self.nodes[id] = moved;
            }
        }
        self.separation_violations += self.count_violations();
    }

    pub fn trace_rows(&self, slot: u64) -> Vec<TraceRow> {
        self.nodes
            .iter()
            .filter(|n| self.active[n.id])
            .map(|n| (slot, n.id, n.position.x, n.position.y, n.position.z))
            .collect()
    }
}
