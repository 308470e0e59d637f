//! Multi-agent routing environment. Demands travel from ground devices
//! through the UAV swarm to base stations; every slot each UAV picks a next
//! hop for each demand it holds, the channel model prices the hop, and the
//! trust model and ledger react to what happened.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, LinkKind};
use crate::error::{Error, Result};
use crate::ledger::{
    self, Candidate, Ledger, LedgerParams, MembershipRequest, RoleAssignment, RoundOutcome,
};
use crate::seed::{self, Stream};
use crate::topology::{Node, NodeId, NodeKind, Topology, TopologyConfig, TraceRow, UavClass};
use crate::trust::{self, BehaviorProfile, TrustParams, TrustRecord};

/// Features per observed node: present, dx, dy, dz, distance to destination,
/// queue fill, committed credit.
pub const NODE_FEATURES: usize = 7;
/// Demand features: size, deadline used, destination dx, dy, reachable flag.
pub const DEMAND_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub topology: TopologyConfig,
    pub channel: ChannelParams,
    pub trust: TrustParams,
    pub ledger: LedgerParams,
    pub n_demands: usize,
    pub n_malicious: usize,
    /// (p_forward, p_trusted_interact, p_probe_ack) for malicious UAVs.
    pub malicious_profile: [f64; 3],
    pub demand_size_min_bits: f64,
    pub demand_size_max_bits: f64,
    /// Deadline in slots; the deadline in seconds is this times the slot length.
    pub deadline_slots: f64,
    pub queue_capacity: usize,
    pub k_max: usize,
    pub iota: f64,
    pub varsigma: f64,
    pub horizon_slots: u64,
    /// Mean background trust interactions per UAV per slot.
    pub interaction_rate: f64,
    pub probes_per_slot: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            channel: ChannelParams::default(),
            trust: TrustParams::default(),
            ledger: LedgerParams::default(),
            n_demands: 25,
            n_malicious: 2,
            malicious_profile: [0.6, 0.6, 0.6],
            demand_size_min_bits: 400e3,
            demand_size_max_bits: 600e3,
            deadline_slots: 10.0,
            queue_capacity: 10,
            k_max: 6,
            iota: 10.0,
            varsigma: 0.2,
            horizon_slots: 1000,
            interaction_rate: 0.5,
            probes_per_slot: 1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        self.topology.validate(&format!("{prefix}.topology"), errors);
        self.channel.validate(&format!("{prefix}.channel"), errors);
        self.trust.validate(&format!("{prefix}.trust"), errors);
        self.ledger.validate(&format!("{prefix}.ledger"), errors);
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if self.n_malicious > self.topology.n_uavs {
            bad("n_malicious", "cannot exceed topology.n_uavs");
        }
        if self.malicious_profile.iter().any(|p| !(0.0..=1.0).contains(p)) {
            bad("malicious_profile", "probabilities must lie in [0, 1]");
        }
        if !(self.demand_size_min_bits > 0.0 && self.demand_size_min_bits <= self.demand_size_max_bits) {
            bad("demand_size_min_bits", "need 0 < min <= max");
        }
        if !(self.deadline_slots > 0.0) {
            bad("deadline_slots", "must be > 0");
        }
        if self.queue_capacity == 0 {
            bad("queue_capacity", "must be > 0");
        }
        if self.k_max == 0 {
            bad("k_max", "must be > 0");
        }
        if !(self.varsigma > 0.0) {
            bad("varsigma", "must be > 0");
        }
        if !(self.iota >= 0.0) {
            bad("iota", "must be >= 0");
        }
        if self.horizon_slots == 0 {
            bad("horizon_slots", "must be > 0");
        }
        if self.topology.n_sds == 0 || self.topology.n_bss == 0 {
            bad("topology", "need at least one SD and one BS");
        }
        if !(self.interaction_rate >= 0.0) {
            bad("interaction_rate", "must be >= 0");
        }
    }

    pub fn deadline_s(&self) -> f64 {
        self.deadline_slots * self.topology.slot_length_s
    }

    pub fn obs_width(&self) -> usize {
        NODE_FEATURES * (1 + self.k_max) + DEMAND_FEATURES
    }

    /// k_max neighbor slots plus one base-station slot.
    pub fn n_actions(&self) -> usize {
        self.k_max + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandStatus {
    InFlight,
    Delivered,
    Failed,
}

impl DemandStatus {
    pub fn name(self) -> &'static str {
        match self {
            DemandStatus::InFlight => "in_flight",
            DemandStatus::Delivered => "delivered",
            DemandStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Deadline,
    SlotOverrun,
    ConsensusOverrun,
    Drop,
    NotArrived,
    QueueFull,
}

impl FailureCause {
    pub fn name(self) -> &'static str {
        match self {
            FailureCause::Deadline => "deadline",
            FailureCause::SlotOverrun => "slot_overrun",
            FailureCause::ConsensusOverrun => "consensus_overrun",
            FailureCause::Drop => "drop",
            FailureCause::NotArrived => "not_arrived",
            FailureCause::QueueFull => "queue_full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub size_bits: f64,
    pub deadline_s: f64,
    pub accumulated_delay_s: f64,
    pub location: NodeId,
    pub path: Vec<NodeId>,
    pub status: DemandStatus,
    pub cause: Option<FailureCause>,
}

/// One pending routing choice handed to an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub agent: NodeId,
    pub demand: usize,
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Result of one acted-on hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopResult {
    pub agent: NodeId,
    pub demand: usize,
    pub action: usize,
    pub next_hop: NodeId,
    pub hop_delay_s: f64,
    pub reward: f64,
    pub shaped_reward: f64,
    /// The chosen hop was the destination base station.
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutcome {
    pub slot: u64,
    pub hops: Vec<HopResult>,
    pub failures: Vec<(usize, FailureCause)>,
    pub delivered: Vec<usize>,
    pub reward_sum: f64,
    pub shaped_reward_sum: f64,
    pub tb_s: f64,
    pub round: Option<RoundOutcome>,
    pub revoked: Vec<NodeId>,
    pub invalid_actions: usize,
    pub done: bool,
}

/// One row of the per-slot demand trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTraceRow {
    pub slot: u64,
    pub demand_id: usize,
    pub location: NodeId,
    pub action: Option<NodeId>,
    /// Delay charged to the demand this slot: the hop delay, or one slot if held.
    pub hop_delay_s: f64,
    pub reward: f64,
    pub status: DemandStatus,
    pub cause: Option<FailureCause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub n_total: usize,
    pub delivered: usize,
    pub failed: usize,
    pub tsr: f64,
    pub mean_e2e_s: Option<f64>,
    pub objective: f64,
    pub reward_sum: f64,
}

/// Derive episode metrics from terminal demand states.
pub fn episode_metrics(demands: &[Demand], reward_sum: f64) -> EpisodeMetrics {
    let n_total = demands.len();
    let delivered: Vec<&Demand> = demands
        .iter()
        .filter(|d| d.status == DemandStatus::Delivered)
        .collect();
    let failed = demands
        .iter()
        .filter(|d| d.status == DemandStatus::Failed)
        .count();
    summarize(
        n_total,
        failed,
        delivered.iter().map(|d| d.accumulated_delay_s).collect(),
        reward_sum,
    )
}

fn summarize(n_total: usize, failed: usize, e2e: Vec<f64>, reward_sum: f64) -> EpisodeMetrics {
    let tsr = if n_total == 0 {
        0.0
    } else {
        1.0 - failed as f64 / n_total as f64
    };
    let mean_e2e_s = (!e2e.is_empty()).then(|| e2e.iter().sum::<f64>() / e2e.len() as f64);
    let objective = match mean_e2e_s {
        Some(t) if t > 0.0 => tsr / t,
        _ => 0.0,
    };
    EpisodeMetrics {
        n_total,
        delivered: e2e.len(),
        failed,
        tsr: if e2e.is_empty() { 0.0 } else { tsr },
        mean_e2e_s,
        objective,
        reward_sum,
    }
}

/// Recompute episode metrics from a demand trace. Demands still in flight at
/// the end of the trace count as failed.
pub fn replay_trace(rows: &[DemandTraceRow], n_total: usize) -> EpisodeMetrics {
    let mut delay: BTreeMap<usize, f64> = BTreeMap::new();
    let mut last: BTreeMap<usize, DemandStatus> = BTreeMap::new();
    let mut reward_sum = 0.0;
    for r in rows {
        *delay.entry(r.demand_id).or_insert(0.0) += r.hop_delay_s;
        last.insert(r.demand_id, r.status);
        reward_sum += r.reward;
    }
    let e2e: Vec<f64> = last
        .iter()
        .filter(|(_, s)| **s == DemandStatus::Delivered)
        .map(|(id, _)| delay[id])
        .collect();
    let failed = n_total - e2e.len();
    summarize(n_total, failed, e2e, reward_sum)
}

/// Unshaped hop reward T_u·T_κ / (delay·ι + ς).
pub fn reward(credit_u: f64, credit_k: f64, hop_delay_s: f64, iota: f64, varsigma: f64) -> f64 {
    credit_u * credit_k / (hop_delay_s * iota + varsigma)
}

/// Distance-shaped reward: base · d_uκ / (d_uκ + d_κb).
pub fn shaped_reward(base: f64, d_uk: f64, d_kb: f64) -> f64 {
    base * d_uk / (d_uk + d_kb)
}

struct Move {
    demand: usize,
    from: NodeId,
    to: NodeId,
    action: Option<usize>,
    kind: LinkKind,
}

pub struct Env {
    pub config: EnvConfig,
    master_seed: u64,
    topo: Topology,
    ledger: Ledger,
    assignment: RoleAssignment,
    records: BTreeMap<NodeId, TrustRecord>,
    behaviors: BTreeMap<NodeId, BehaviorProfile>,
    malicious: BTreeSet<NodeId>,
    demands: Vec<Demand>,
    /// Next slot to execute, starting at 1.
    slot: u64,
    mobility_rng: ChaCha8Rng,
    behavior_rng: ChaCha8Rng,
    weight_rng: ChaCha8Rng,
    pending_joins: BTreeMap<NodeId, Node>,
    pub trace: Vec<DemandTraceRow>,
    pub position_trace: Vec<TraceRow>,
    pub record_positions: bool,
    reward_sum: f64,
    pub invalid_actions: u64,
}

impl Env {
    pub fn new(config: EnvConfig, master_seed: u64) -> Result<Self> {
        let mut errors = Vec::new();
        config.validate("env", &mut errors);
        if !errors.is_empty() {
            return Err(Error::InvalidConfig(errors));
        }
        let mut placement = seed::rng(master_seed, Stream::Placement);
        let topo = Topology::generate(&config.topology, &mut placement)?;
        let uavs = topo.uav_ids();
        let mut malicious: BTreeSet<NodeId> = sample(&mut placement, uavs.len(), config.n_malicious)
            .into_iter()
            .map(|i| uavs[i])
            .collect();
        if config.n_malicious == 0 {
            malicious.clear();
        }
        let behaviors = uavs
            .iter()
            .map(|&u| {
                let b = if malicious.contains(&u) {
                    BehaviorProfile::malicious(config.malicious_profile)
                } else {
                    BehaviorProfile::HONEST
                };
                (u, b)
            })
            .collect();
        let sds = topo.sd_ids();
        let bss = topo.bs_ids();
        let deadline = config.deadline_s();
        let demands = (0..config.n_demands)
            .map(|id| {
                let source = sds[placement.random_range(0..sds.len())];
                let destination = bss[placement.random_range(0..bss.len())];
                let size_bits = if config.demand_size_max_bits > config.demand_size_min_bits {
                    placement.random_range(config.demand_size_min_bits..=config.demand_size_max_bits)
                } else {
                    config.demand_size_min_bits
                };
                Demand {
                    id,
                    source,
                    destination,
                    size_bits,
                    deadline_s: deadline,
                    accumulated_delay_s: 0.0,
                    location: source,
                    path: vec![source],
                    status: DemandStatus::InFlight,
                    cause: None,
                }
            })
            .collect();
        let records = uavs
            .iter()
            .map(|&u| (u, TrustRecord::from_params(&config.trust)))
            .collect();
        let ledger = Ledger::genesis(&uavs, config.trust.initial_credit);
        let mut env = Self {
            master_seed,
            topo,
            ledger,
            assignment: RoleAssignment::new(config.ledger.stability_period),
            records,
            behaviors,
            malicious,
            demands,
            slot: 1,
            mobility_rng: seed::rng(master_seed, Stream::Mobility),
            behavior_rng: seed::rng(master_seed, Stream::Behavior),
            weight_rng: seed::rng(master_seed, Stream::Weights),
            pending_joins: BTreeMap::new(),
            trace: Vec::new(),
            position_trace: Vec::new(),
            record_positions: false,
            reward_sum: 0.0,
            invalid_actions: 0,
            config,
        };
        env.assignment = ledger::select_chus(
            &env.candidates(),
            env.config.trust.threshold,
            env.config.ledger.compute_threshold_hz,
            0,
            &env.assignment,
            env.config.ledger.score_weights,
        );
        Ok(env)
    }

    /// Fresh environment with the same config and seed.
    pub fn reset(&mut self) -> Result<()> {
        let record = self.record_positions;
        *self = Env::new(self.config.clone(), self.master_seed)?;
        self.record_positions = record;
        Ok(())
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn assignment(&self) -> &RoleAssignment {
        &self.assignment
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn malicious(&self) -> &BTreeSet<NodeId> {
        &self.malicious
    }

    pub fn trust_record(&self, u: NodeId) -> Option<&TrustRecord> {
        self.records.get(&u)
    }

    pub fn live_credit(&self, u: NodeId) -> f64 {
        self.records.get(&u).map_or(0.0, |r| r.credit)
    }

    /// Slot about to be executed.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// True once the horizon has passed or no demand is still travelling.
    pub fn is_done(&self) -> bool {
        self.slot > self.config.horizon_slots
            || self.demands.iter().all(|d| d.status != DemandStatus::InFlight)
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_sum
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        episode_metrics(&self.demands, self.reward_sum)
    }

    /// Override a UAV's behavior (used by tests and custom scenarios).
    pub fn set_behavior(&mut self, u: NodeId, profile: BehaviorProfile) {
        if profile.is_malicious {
            self.malicious.insert(u);
        } else {
            self.malicious.remove(&u);
        }
        self.behaviors.insert(u, profile);
    }

    /// UAVs that still route: active and not revoked.
    pub fn routing_uavs(&self) -> Vec<NodeId> {
        self.topo
            .uav_ids()
            .into_iter()
            .filter(|&u| !self.ledger.is_revoked(u))
            .collect()
    }

    fn candidates(&self) -> Vec<Candidate> {
        self.routing_uavs()
            .into_iter()
            .map(|u| {
                let n = &self.topo.nodes()[u];
                Candidate {
                    id: u,
                    credit: self.live_credit(u),
                    compute_hz: n.compute_hz,
                    storage_bytes: n.storage_bytes,
                }
            })
            .collect()
    }

    fn committed_credit(&self, n: NodeId) -> f64 {
        match self.topo.nodes()[n].kind {
            NodeKind::Uav => self.ledger.credit(n),
            _ => 1.0,
        }
    }

    /// Routing neighbors of `u` (revoked UAVs excluded), nearest first, ties by id.
    pub fn neighbors(&self, u: NodeId) -> Result<Vec<NodeId>> {
        if self.ledger.is_revoked(u) {
            return Err(Error::Revoked(u));
        }
        let mut ns: Vec<NodeId> = self
            .topo
            .neighbors(u)?
            .into_iter()
            .filter(|&k| !self.ledger.is_revoked(k))
            .collect();
        ns.sort_by(|&a, &b| {
            self.topo
                .distance(u, a)
                .total_cmp(&self.topo.distance(u, b))
                .then(a.cmp(&b))
        });
        Ok(ns)
    }

    fn bs_reachable(&self, u: NodeId, bs: NodeId) -> bool {
        self.topo.nodes()[u].class == Some(UavClass::Downlink)
            && self.topo.distance(u, bs) <= self.config.topology.d_max_m
    }

    fn queue_len(&self, n: NodeId) -> usize {
        self.demands
            .iter()
            .filter(|d| d.status == DemandStatus::InFlight && d.location == n)
            .count()
    }

    /// Action mask for a demand held at `u`. When the destination base station
    /// is in range of a downlink UAV, delivery is the only allowed action.
    pub fn action_mask(&self, u: NodeId, demand: usize) -> Result<Vec<bool>> {
        let d = self.demands.get(demand).ok_or(Error::UnknownNode(demand))?;
        let k = self.config.k_max;
        let mut mask = vec![false; k + 1];
        if self.bs_reachable(u, d.destination) {
            mask[k] = true;
            return Ok(mask);
        }
        let ns = self.neighbors(u)?;
        for m in mask.iter_mut().take(ns.len().min(k)) {
            *m = true;
        }
        Ok(mask)
    }

    /// Action index → next-hop node. None for masked actions.
    pub fn resolve_action(&self, u: NodeId, demand: usize, action: usize) -> Result<Option<NodeId>> {
        let mask = self.action_mask(u, demand)?;
        if action >= mask.len() || !mask[action] {
            return Ok(None);
        }
        if action == self.config.k_max {
            return Ok(Some(self.demands[demand].destination));
        }
        Ok(self.neighbors(u)?.get(action).copied())
    }

    /// Valid next hops for a demand at `u`.
    pub fn valid_actions(&self, u: NodeId, demand: usize) -> Result<Vec<(usize, NodeId)>> {
        let mask = self.action_mask(u, demand)?;
        let mut out = Vec::new();
        for (a, &ok) in mask.iter().enumerate() {
            if ok {
                if let Some(n) = self.resolve_action(u, demand, a)? {
                    out.push((a, n));
                }
            }
        }
        Ok(out)
    }

    /// Local observation of `u` for one of its demands.
    pub fn observe(&self, u: NodeId, demand: usize) -> Result<Vec<f64>> {
        let node = self.topo.node(u)?;
        if !node.is_uav() {
            return Err(Error::NotAUav(u));
        }
        let d = self.demands.get(demand).ok_or(Error::UnknownNode(demand))?;
        let ns = self.neighbors(u)?;
        let cfg = &self.config;
        let scale = cfg.topology.d_max_m;
        let cap = cfg.queue_capacity as f64;
        let origin = node.position;
        let dest = self.topo.position(d.destination);
        let mut obs = Vec::with_capacity(cfg.obs_width());
        let push_node = |obs: &mut Vec<f64>, n: NodeId| {
            let p = self.topo.position(n);
            obs.extend_from_slice(&[
                1.0,
                (p.x - origin.x) / scale,
                (p.y - origin.y) / scale,
                (p.z - origin.z) / scale,
                p.distance(&dest) / scale,
                self.queue_len(n) as f64 / cap,
                self.committed_credit(n),
            ]);
        };
        push_node(&mut obs, u);
        for &k in ns.iter().take(cfg.k_max) {
            push_node(&mut obs, k);
        }
        let sentinel_dist = (cfg.topology.area_x_m.hypot(cfg.topology.area_y_m)) / scale;
        for _ in ns.len().min(cfg.k_max)..cfg.k_max {
            obs.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, sentinel_dist, 0.0, 0.0]);
        }
        obs.extend_from_slice(&[
            d.size_bits / cfg.demand_size_max_bits,
            d.accumulated_delay_s / d.deadline_s,
            (dest.x - origin.x) / scale,
            (dest.y - origin.y) / scale,
            if self.bs_reachable(u, d.destination) { 1.0 } else { 0.0 },
        ]);
        Ok(obs)
    }

    /// Every routing choice due this slot, by UAV id then demand id.
    pub fn decisions(&self) -> Vec<Decision> {
        let mut by_uav: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for d in &self.demands {
            if d.status == DemandStatus::InFlight
                && self.topo.nodes()[d.location].is_uav()
                && !self.ledger.is_revoked(d.location)
            {
                by_uav.entry(d.location).or_default().push(d.id);
            }
        }
        let mut out = Vec::new();
        for (u, ds) in by_uav {
            for r in ds {
                // both calls only fail for revoked or unknown nodes, excluded above
                if let (Ok(obs), Ok(mask)) = (self.observe(u, r), self.action_mask(u, r)) {
                    out.push(Decision {
                        agent: u,
                        demand: r,
                        obs,
                        mask,
                    });
                }
            }
        }
        out
    }

    /// Queue a membership join. The node gets an id now but only enters the
    /// network once a consensus round commits the request.
    pub fn request_join(&mut self, mut node: Node, registered: bool) -> Result<NodeId> {
        let id = self.topo.nodes().len() + self.pending_joins.len();
        self.ledger
            .process_membership(MembershipRequest::Join { uav_id: id, registered }, self.slot)?;
        node.id = id;
        node.kind = NodeKind::Uav;
        self.pending_joins.insert(id, node);
        Ok(id)
    }

    pub fn request_exit(&mut self, u: NodeId) -> Result<()> {
        self.ledger
            .process_membership(MembershipRequest::Exit { uav_id: u }, self.slot)?;
        Ok(())
    }

    fn nearest_upload_target(&self, sd: NodeId, booked: &BTreeMap<NodeId, usize>) -> Option<NodeId> {
        let cap = self.config.queue_capacity;
        self.routing_uavs()
            .into_iter()
            .filter(|&u| self.topo.distance(sd, u) <= self.config.topology.d_max_m)
            .filter(|u| booked.get(u).copied().unwrap_or(0) < cap)
            .min_by(|&a, &b| {
                self.topo
                    .distance(sd, a)
                    .total_cmp(&self.topo.distance(sd, b))
                    .then(a.cmp(&b))
            })
    }

    fn fail(&mut self, demand: usize, cause: FailureCause, out: &mut StepOutcome) {
        let d = &mut self.demands[demand];
        if d.status != DemandStatus::InFlight {
            return;
        }
        d.status = DemandStatus::Failed;
        d.cause = Some(cause);
        out.failures.push((demand, cause));
    }

    /// Execute one slot. `actions` maps demand id → action index for demands
    /// held by UAVs; demands without a valid action are held in place.
    pub fn step(&mut self, actions: &BTreeMap<usize, usize>) -> Result<StepOutcome> {
        if self.is_done() {
            return Ok(StepOutcome {
                slot: self.slot,
                done: true,
                ..Default::default()
            });
        }
        let slot = self.slot;
        let cfg = self.config.clone();
        let tau = cfg.topology.slot_length_s;
        let mut out = StepOutcome {
            slot,
            ..Default::default()
        };

        // consensus delay depends only on the current assignment
        let compute: BTreeMap<NodeId, f64> = self
            .topo
            .uav_ids()
            .into_iter()
            .map(|u| (u, self.topo.nodes()[u].compute_hz))
            .collect();
        let tb = match self.assignment.primary {
            Some(p) if self.assignment.participants() > 0 => {
                let replicas: Vec<f64> = self
                    .assignment
                    .full_uavs
                    .iter()
                    .filter(|&&id| id != p)
                    .map(|id| compute.get(id).copied().unwrap_or(1.0))
                    .collect();
                ledger::consensus_delay(
                    self.assignment.participants(),
                    &cfg.ledger.consensus,
                    compute.get(&p).copied().unwrap_or(1.0),
                    &replicas,
                )
                .tb()
            }
            _ => 0.0,
        };
        out.tb_s = tb;

        // choose moves
        let mut moves: Vec<Move> = Vec::new();
        let mut held: Vec<usize> = Vec::new();
        let mut booked: BTreeMap<NodeId, usize> = BTreeMap::new();
        for i in 0..self.demands.len() {
            let d = &self.demands[i];
            if d.status != DemandStatus::InFlight {
                continue;
            }
            let loc = d.location;
            match self.topo.nodes()[loc].kind {
                NodeKind::SensorDevice => match self.nearest_upload_target(loc, &booked) {
                    Some(u) => {
                        *booked.entry(u).or_insert(0) += 1;
                        moves.push(Move {
                            demand: i,
                            from: loc,
                            to: u,
                            action: None,
                            kind: LinkKind::AirToGround,
                        });
                    }
                    None => held.push(i),
                },
                NodeKind::Uav => {
                    let choice = actions.get(&i).copied();
                    let target = match choice {
                        Some(a) => self.resolve_action(loc, i, a)?,
                        None => None,
                    };
                    match (choice, target) {
                        (Some(a), Some(t)) => {
                            let kind = if self.topo.nodes()[t].kind == NodeKind::BaseStation {
                                LinkKind::AirToGround
                            } else {
                                LinkKind::AirToAir
                            };
                            moves.push(Move {
                                demand: i,
                                from: loc,
                                to: t,
                                action: Some(a),
                                kind,
                            });
                        }
                        _ => {
                            out.invalid_actions += 1;
                            held.push(i);
                        }
                    }
                }
                NodeKind::BaseStation => {}
            }
        }
        self.invalid_actions += out.invalid_actions as u64;

        // bandwidth split per sender, then rates and delays
        let mut by_sender: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (mi, m) in moves.iter().enumerate() {
            by_sender.entry(m.from).or_default().push(mi);
        }
        let mut hop_delay = vec![0.0; moves.len()];
        for (sender, idxs) in &by_sender {
            let sizes: Vec<f64> = idxs
                .iter()
                .map(|&mi| self.demands[moves[mi].demand].size_bits)
                .collect();
            let shares = channel::allocate_bandwidth(&sizes, cfg.channel.total_bandwidth_hz);
            for (j, &mi) in idxs.iter().enumerate() {
                let m = &moves[mi];
                let a = self.topo.position(*sender);
                let b = self.topo.position(m.to);
                let budget = channel::link_budget(&a, &b, m.kind, shares[j], &cfg.channel)?;
                let (per, _) = channel::hop_delay(&[(sizes[j], budget.rate_bps)]);
                hop_delay[mi] = per[0];
            }
        }

        // receipt: held demands keep their place first, then arrivals in demand order
        let mut occupancy: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &i in &held {
            let d = &mut self.demands[i];
            d.accumulated_delay_s += tau;
            *occupancy.entry(d.location).or_insert(0) += 1;
            self.trace.push(DemandTraceRow {
                slot,
                demand_id: i,
                location: d.location,
                action: None,
                hop_delay_s: tau,
                reward: 0.0,
                status: d.status,
                cause: None,
            });
        }
        let mut receipts: Vec<(NodeId, NodeId, bool)> = Vec::new(); // (sender, receiver, accepted)
        let mut logged: BTreeSet<usize> = BTreeSet::new();
        for (mi, m) in moves.iter().enumerate() {
            let delay = hop_delay[mi];
            let i = m.demand;
            if delay >= tau {
                self.fail(i, FailureCause::SlotOverrun, &mut out);
            } else if tb >= tau || delay + tb > tau {
                self.fail(i, FailureCause::ConsensusOverrun, &mut out);
            }
            if self.demands[i].status != DemandStatus::InFlight {
                self.trace.push(DemandTraceRow {
                    slot,
                    demand_id: i,
                    location: m.from,
                    action: Some(m.to),
                    hop_delay_s: delay.min(tau),
                    reward: 0.0,
                    status: DemandStatus::Failed,
                    cause: self.demands[i].cause,
                });
                logged.insert(i);
                if let Some(a) = m.action {
                    out.hops.push(HopResult {
                        agent: m.from,
                        demand: i,
                        action: a,
                        next_hop: m.to,
                        hop_delay_s: delay,
                        reward: 0.0,
                        shaped_reward: 0.0,
                        flag: false,
                    });
                }
                continue;
            }
            {
                let d = &mut self.demands[i];
                d.accumulated_delay_s += delay;
                d.path.push(m.to);
            }
            let to_kind = self.topo.nodes()[m.to].kind;
            if to_kind == NodeKind::BaseStation {
                let d = &mut self.demands[i];
                d.location = m.to;
                d.status = DemandStatus::Delivered;
                out.delivered.push(i);
            } else {
                let room = occupancy.get(&m.to).copied().unwrap_or(0) < cfg.queue_capacity;
                if !room {
                    self.fail(i, FailureCause::QueueFull, &mut out);
                } else {
                    let b = self.behaviors.get(&m.to).copied().unwrap_or(BehaviorProfile::HONEST);
                    let forwards = self.behavior_rng.random::<f64>() < b.p_forward;
                    receipts.push((m.from, m.to, forwards));
                    if forwards {
                        self.demands[i].location = m.to;
                        *occupancy.entry(m.to).or_insert(0) += 1;
                    } else {
                        self.fail(i, FailureCause::Drop, &mut out);
                    }
                }
            }
            if let Some(a) = m.action {
                let cu = self.committed_credit(m.from);
                let ck = self.committed_credit(m.to);
                let r = reward(cu, ck, delay, cfg.iota, cfg.varsigma);
                let dest = self.demands[i].destination;
                let d_uk = self.topo.distance(m.from, m.to);
                let d_kb = self.topo.distance(m.to, dest);
                let sr = shaped_reward(r, d_uk, d_kb);
                out.reward_sum += r;
                out.shaped_reward_sum += sr;
                out.hops.push(HopResult {
                    agent: m.from,
                    demand: i,
                    action: a,
                    next_hop: m.to,
                    hop_delay_s: delay,
                    reward: r,
                    shaped_reward: sr,
                    flag: m.to == dest,
                });
            }
        }

        // deadline check on everything still travelling
        for i in 0..self.demands.len() {
            let d = &self.demands[i];
            if d.status == DemandStatus::InFlight && d.accumulated_delay_s >= d.deadline_s {
                self.fail(i, FailureCause::Deadline, &mut out);
            }
        }

        // trace rows for moves that completed their hop
        let hop_reward: BTreeMap<usize, f64> = out.hops.iter().map(|h| (h.demand, h.reward)).collect();
        for (mi, m) in moves.iter().enumerate() {
            if logged.contains(&m.demand) {
                continue;
            }
            let d = &self.demands[m.demand];
            self.trace.push(DemandTraceRow {
                slot,
                demand_id: m.demand,
                location: if d.status == DemandStatus::Failed { m.from } else { d.location },
                action: Some(m.to),
                hop_delay_s: hop_delay[mi],
                reward: hop_reward.get(&m.demand).copied().unwrap_or(0.0),
                status: d.status,
                cause: d.cause,
            });
        }
        // held demands that hit the deadline get their final status recorded
        for &i in &held {
            if self.demands[i].status == DemandStatus::Failed {
                self.trace.push(DemandTraceRow {
                    slot,
                    demand_id: i,
                    location: self.demands[i].location,
                    action: None,
                    hop_delay_s: 0.0,
                    reward: 0.0,
                    status: DemandStatus::Failed,
                    cause: self.demands[i].cause,
                });
            }
        }
        self.reward_sum += out.reward_sum;

        // trust evidence and live credit updates
        for (from, to, ok) in receipts {
            if let Some(r) = self.records.get_mut(&to) {
                r.record_receipt(ok);
                if self.topo.nodes()[from].is_uav() {
                    r.record_recommendation(from, ok);
                }
            }
        }
        let routing = self.routing_uavs();
        let interactions = Poisson::new(cfg.interaction_rate).ok();
        for &u in &routing {
            let b = self.behaviors.get(&u).copied().unwrap_or(BehaviorProfile::HONEST);
            let k_int = match &interactions {
                Some(p) => p.sample(&mut self.behavior_rng) as u64,
                None => 0,
            };
            for _ in 0..k_int {
                let ok = self.behavior_rng.random::<f64>() < b.p_trusted_interact;
                if let Some(r) = self.records.get_mut(&u) {
                    r.record_interaction(ok);
                }
            }
            let acked = (0..cfg.probes_per_slot)
                .filter(|_| self.behavior_rng.random::<f64>() < b.p_probe_ack)
                .count() as u32;
            if let Some(r) = self.records.get_mut(&u) {
                r.record_probes(acked);
            }
        }
        let snapshot: BTreeMap<NodeId, f64> = routing.iter().map(|&u| (u, self.live_credit(u))).collect();
        let mut updated = Vec::with_capacity(routing.len());
        for &u in &routing {
            let mut others = snapshot.clone();
            others.remove(&u);
            let c = trust::step_record(&self.records[&u], &others, &cfg.trust, &mut self.weight_rng);
            updated.push((u, c));
        }
        for (u, c) in updated {
            if let Some(r) = self.records.get_mut(&u) {
                r.credit = c;
            }
            self.ledger.submit_credit(slot, u, c);
        }

        // consensus round
        let active_malicious: BTreeSet<NodeId> = self
            .malicious
            .iter()
            .copied()
            .filter(|&m| self.topo.is_active(m))
            .collect();
        let round = self.ledger.run_round(
            &self.assignment,
            &active_malicious,
            &compute,
            &cfg.ledger.consensus,
            slot,
            cfg.trust.threshold,
        );
        out.round = Some(round.outcome);
        for &id in &round.joined {
            if let Some(node) = self.pending_joins.remove(&id) {
                let new_id = self.topo.add_uav(node);
                debug_assert_eq!(new_id, id);
                self.records.insert(new_id, TrustRecord::from_params(&cfg.trust));
                self.behaviors.insert(new_id, BehaviorProfile::HONEST);
            }
        }
        let mut lost_primary = false;
        for &id in round.exited.iter().chain(round.revoked.iter()) {
            lost_primary |= self.assignment.evict(id);
            for i in 0..self.demands.len() {
                if self.demands[i].status == DemandStatus::InFlight && self.demands[i].location == id {
                    self.fail(i, FailureCause::Drop, &mut out);
                    self.trace.push(DemandTraceRow {
                        slot,
                        demand_id: i,
                        location: id,
                        action: None,
                        hop_delay_s: 0.0,
                        reward: 0.0,
                        status: DemandStatus::Failed,
                        cause: Some(FailureCause::Drop),
                    });
                }
            }
        }
        for &id in &round.exited {
            self.topo.deactivate(id);
        }
        out.revoked = round.revoked.clone();
        if lost_primary {
            self.assignment.primary =
                ledger::pick_primary(&self.assignment.full_uavs, &self.candidates(), cfg.ledger.score_weights);
        }

        if slot % cfg.ledger.stability_period.max(1) == 0 {
            self.assignment = ledger::select_chus(
                &self.candidates(),
                cfg.trust.threshold,
                cfg.ledger.compute_threshold_hz,
                slot,
                &self.assignment,
                cfg.ledger.score_weights,
            );
        }

        self.topo.advance(&mut self.mobility_rng);
        if self.record_positions {
            self.position_trace.extend(self.topo.trace_rows(slot));
        }

        self.slot += 1;
        if self.slot > cfg.horizon_slots {
            for i in 0..self.demands.len() {
                if self.demands[i].status == DemandStatus::InFlight {
                    let loc = self.demands[i].location;
                    self.fail(i, FailureCause::NotArrived, &mut out);
                    self.trace.push(DemandTraceRow {
                        slot,
                        demand_id: i,
                        location: loc,
                        action: None,
                        hop_delay_s: 0.0,
                        reward: 0.0,
                        status: DemandStatus::Failed,
                        cause: Some(FailureCause::NotArrived),
                    });
                }
            }
        }
        out.done = self.is_done();
        Ok(out)
    }

    /// Counts of (delivered, failed, in flight).
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for d in &self.demands {
            match d.status {
                DemandStatus::Delivered => c.0 += 1,
                DemandStatus::Failed => c.1 += 1,
                DemandStatus::InFlight => c.2 += 1,
            }
        }
        c
    }
}

/// Greedy geographic policy: the valid action whose next hop is closest to
/// the destination. Used as a baseline and in sanity checks.
pub fn greedy_actions(env: &Env) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for dec in env.decisions() {
        let dest = env.demands()[dec.demand].destination;
        let best = env
            .valid_actions(dec.agent, dec.demand)
            .unwrap_or_default()
            .into_iter()
            .min_by(|a, b| {
                env.topology()
                    .distance(a.1, dest)
                    .total_cmp(&env.topology().distance(b.1, dest))
                    .then(a.0.cmp(&b.0))
            });
        if let Some((a, _)) = best {
            out.insert(dec.demand, a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvConfig {
        let mut c = EnvConfig::default();
        c.topology.n_uavs = 8;
        c.horizon_slots = 30;
        c
    }

    #[test]
    fn reward_examples() {
        assert!((reward(1.0, 1.0, 0.05, 10.0, 0.2) - 1.0 / 0.7).abs() < 1e-12);
        assert_eq!(reward(1.0, 0.0, 0.05, 10.0, 0.2), 0.0);
        assert!(reward(0.9, 0.9, 0.1, 10.0, 0.2) < reward(0.9, 0.9, 0.05, 10.0, 0.2));
    }

    #[test]
    fn shaped_examples() {
        assert!((shaped_reward(2.0, 5.0, 5.0) - 1.0).abs() < 1e-15);
        assert_eq!(shaped_reward(2.0, 5.0, 0.0), 2.0);
        assert!(shaped_reward(2.0, 1.0, 3.0) <= 2.0);
    }

    #[test]
    fn reset_is_deterministic() {
        let a = Env::new(small(), 11).unwrap();
        let b = Env::new(small(), 11).unwrap();
        assert_eq!(a.demands(), b.demands());
        assert_eq!(a.topology().nodes(), b.topology().nodes());
        assert_eq!(a.demands().len(), 25);
        assert!(a
            .demands()
            .iter()
            .all(|d| (400e3..=600e3).contains(&d.size_bits) && d.status == DemandStatus::InFlight));
    }

    #[test]
    fn rejects_zero_uavs() {
        let mut c = small();
        c.topology.n_uavs = 0;
        c.n_malicious = 0;
        assert!(matches!(Env::new(c, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn conservation_under_greedy() {
        let mut env = Env::new(small(), 5).unwrap();
        while !env.is_done() {
            let acts = greedy_actions(&env);
            env.step(&acts).unwrap();
            let (a, b, c) = env.status_counts();
            assert_eq!(a + b + c, 25);
        }
        assert_eq!(env.status_counts().2, 0);
    }

    #[test]
    fn observation_width_and_padding() {
        let mut env = Env::new(small(), 2).unwrap();
        env.step(&BTreeMap::new()).unwrap();
        for dec in env.decisions() {
            assert_eq!(dec.obs.len(), env.config.obs_width());
            assert_eq!(dec.mask.len(), env.config.n_actions());
        }
    }

    #[test]
    fn relay_never_sees_bs_action() {
        let mut env = Env::new(small(), 3).unwrap();
        for _ in 0..5 {
            let acts = greedy_actions(&env);
            env.step(&acts).unwrap();
            for dec in env.decisions() {
                if env.topology().nodes()[dec.agent].class != Some(UavClass::Downlink) {
                    assert!(!dec.mask[env.config.k_max]);
                }
            }
        }
    }
}
