//! Credit values for UAVs: direct evidence (forwarding ratio, trusted
//! interactions, probe reception), indirect recommendations from trusted
//! neighbors, and the weighted recursive update.
//!
//! Also hosts the stand-alone detection experiment, which exercises the
//! trust model without any routing traffic.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand::seq::index::sample;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub p_forward: f64,
    pub p_trusted_interact: f64,
    pub p_probe_ack: f64,
    pub is_malicious: bool,
}

impl BehaviorProfile {
    pub const HONEST: BehaviorProfile = BehaviorProfile {
        p_forward: 1.0,
        p_trusted_interact: 1.0,
        p_probe_ack: 1.0,
        is_malicious: false,
    };

    pub fn malicious(p: [f64; 3]) -> Self {
        Self {
            p_forward: p[0],
            p_trusted_interact: p[1],
            p_probe_ack: p[2],
            is_malicious: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Adaptive,
    Average,
    Random,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Adaptive, SchemeKind::Average, SchemeKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Adaptive => "adaptive",
            SchemeKind::Average => "average",
            SchemeKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustParams {
    pub scheme: SchemeKind,
    pub beta: f64,
    pub threshold: f64,
    pub direct_weights: [f64; 3],
    pub probe_window_slots: usize,
    pub probe_period_slots: usize,
    pub psi0_max: f64,
    pub credit_floor: f64,
    pub initial_credit: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Adaptive,
            beta: 0.5,
            threshold: 0.8,
            direct_weights: [1.0 / 3.0; 3],
            probe_window_slots: 10,
            probe_period_slots: 1,
            psi0_max: 0.9,
            credit_floor: 0.01,
            initial_credit: 1.0,
        }
    }
}

impl TrustParams {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            bad("beta", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bad("threshold", "must lie in [0, 1]");
        }
        let w = self.direct_weights;
        if w.iter().any(|&x| x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bad("direct_weights", "must be non-negative and sum to 1");
        }
        if self.probe_window_slots == 0 || self.probe_period_slots == 0 {
            bad("probe_window_slots", "probe window and period must be > 0");
        }
        if !(self.psi0_max > 0.0 && self.psi0_max < 1.0) {
            bad("psi0_max", "must lie in (0, 1)");
        }
        if !(self.credit_floor > 0.0 && self.credit_floor < 1.0) {
            bad("credit_floor", "must lie in (0, 1)");
        }
        if !(self.initial_credit > 0.0 && self.initial_credit <= 1.0) {
            bad("initial_credit", "must lie in (0, 1]");
        }
    }
}

/// Evidence held about one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub credit: f64,
    pub rx_total: u64,
    pub tx_total: u64,
    pub interactions_total: u64,
    pub interactions_trusted: u64,
    /// Probes acknowledged in each of the most recent slots, oldest first.
    pub probe_log: VecDeque<u32>,
    pub probe_window: usize,
    pub probe_period: usize,
    /// Neighbor κ → (positive, negative) observations of this UAV.
    pub recommendations: BTreeMap<NodeId, (u64, u64)>,
}

impl TrustRecord {
    pub fn new(credit: f64, probe_window: usize, probe_period: usize) -> Self {
        Self {
            credit,
            rx_total: 0,
            tx_total: 0,
            interactions_total: 0,
            interactions_trusted: 0,
            probe_log: VecDeque::with_capacity(probe_window + 1),
            probe_window,
            probe_period,
            recommendations: BTreeMap::new(),
        }
    }

    pub fn from_params(p: &TrustParams) -> Self {
        Self::new(p.initial_credit, p.probe_window_slots, p.probe_period_slots)
    }

    pub fn record_receipt(&mut self, forwarded: bool) {
        self.rx_total += 1;
        if forwarded {
            self.tx_total += 1;
        }
    }

    pub fn record_interaction(&mut self, trusted: bool) {
        self.interactions_total += 1;
        if trusted {
            self.interactions_trusted += 1;
        }
    }

    /// Close out one slot of probing.
    pub fn record_probes(&mut self, acked: u32) {
        self.probe_log.push_back(acked);
        while self.probe_log.len() > self.probe_window {
            self.probe_log.pop_front();
        }
    }

    pub fn record_recommendation(&mut self, from: NodeId, positive: bool) {
        let e = self.recommendations.entry(from).or_insert((0, 0));
        if positive {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }

    /// Forwarding ratio; falls back to the current credit with no receipts.
    pub fn d1(&self) -> f64 {
        if self.rx_total == 0 {
            self.credit
        } else {
            self.tx_total as f64 / self.rx_total as f64
        }
    }

    pub fn d2(&self) -> f64 {
        if self.interactions_total == 0 {
            self.credit
        } else {
            self.interactions_trusted as f64 / self.interactions_total as f64
        }
    }

    /// Probe reception ratio over the window. Until the window has filled,
    /// only the elapsed slots count toward the expected probe total.
    pub fn d3(&self) -> f64 {
        let slots = self.probe_log.len().min(self.probe_window);
        if slots == 0 {
            return self.credit;
        }
        let expected = slots as f64 / self.probe_period as f64;
        let got: u32 = self.probe_log.iter().sum();
        (got as f64 / expected).min(1.0)
    }
}

pub fn direct_trust(record: &TrustRecord, weights: &[f64; 3]) -> f64 {
    weights[0] * record.d1() + weights[1] * record.d2() + weights[2] * record.d3()
}

/// Mean recommendation ratio over trusted neighbors with any evidence, if there are any.
pub fn indirect_evidence(
    record: &TrustRecord,
    neighbor_credits: &BTreeMap<NodeId, f64>,
    threshold: f64,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &(pos, neg)) in &record.recommendations {
        let total = pos + neg;
        if total == 0 {
            continue;
        }
        match neighbor_credits.get(k) {
            Some(&c) if c >= threshold => {
                sum += pos as f64 / total as f64;
                n += 1;
            }
            _ => {}
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Indirect trust with a neutral 0.5 prior when no trusted neighbor has evidence.
pub fn indirect_trust(
    record: &TrustRecord,
    neighbor_credits: &BTreeMap<NodeId, f64>,
    threshold: f64,
) -> f64 {
    indirect_evidence(record, neighbor_credits, threshold).unwrap_or(0.5)
}

/// (ψ⁰, ψ¹, ψ²) for one update. `rng` is only drawn from by the random scheme.
pub fn compute_weights<R: Rng + ?Sized>(
    params: &TrustParams,
    credit: f64,
    t_direct: f64,
    t_indirect: f64,
    rng: &mut R,
) -> [f64; 3] {
    let credit = credit.max(params.credit_floor);
    let beta = match params.scheme {
        // the average benchmark fixes the coefficient at one half
        SchemeKind::Average => 0.5,
        _ => params.beta,
    };
    let psi0 = (beta * params.threshold / credit).min(params.psi0_max);
    let rest = 1.0 - psi0;
    let psi1 = match params.scheme {
        SchemeKind::Adaptive => {
            let u1 = (1.0 - t_direct).max(0.0);
            let u2 = (1.0 - t_indirect).max(0.0);
            if u1 + u2 <= 1e-12 {
                rest / 2.0
            } else {
                rest * (u1 / (u1 + u2))
            }
        }
        SchemeKind::Average => rest / 2.0,
        SchemeKind::Random => rest * rng.random_range(0.2..=0.8),
    };
    [psi0, psi1, rest - psi1]
}

pub fn update_credit(credit: f64, weights: &[f64; 3], t_direct: f64, t_indirect: f64, floor: f64) -> f64 {
    (weights[0] * credit + weights[1] * t_direct + weights[2] * t_indirect).clamp(floor, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustState {
    Trusted,
    Malicious,
}

pub fn classify(credit: f64, threshold: f64) -> TrustState {
    if credit > threshold {
        TrustState::Trusted
    } else {
        TrustState::Malicious
    }
}

/// 1-based index of the first entry strictly below `threshold`.
pub fn detection_time(history: &[f64], threshold: f64) -> Option<u64> {
    history
        .iter()
        .position(|&c| c < threshold)
        .map(|i| i as u64 + 1)
}

/// Slots until every malicious UAV was detected, or None if any never was.
pub fn network_detection_time(histories: &[&[f64]], threshold: f64) -> Option<u64> {
    let mut worst = 0;
    for h in histories {
        worst = worst.max(detection_time(h, threshold)?);
    }
    Some(worst)
}

/// The full update for one UAV given a snapshot of everyone's credits.
/// Without qualifying recommenders the indirect term holds at the current credit.
pub fn step_record<R: Rng + ?Sized>(
    record: &TrustRecord,
    neighbor_credits: &BTreeMap<NodeId, f64>,
    params: &TrustParams,
    rng: &mut R,
) -> f64 {
    let td = direct_trust(record, &params.direct_weights);
    let ti = indirect_evidence(record, neighbor_credits, params.threshold).unwrap_or(record.credit);
    let psi = compute_weights(params, record.credit, td, ti, rng);
    update_credit(record.credit, &psi, td, ti, params.credit_floor)
}

/// Stand-alone detection experiment: UAVs exchange abstract traffic and the
/// trust model runs until every malicious UAV is caught.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub n_uavs: usize,
    pub n_malicious: usize,
    /// Mean demands received per UAV per slot.
    pub receipt_rate: f64,
    /// Mean interactions per UAV per slot.
    pub interaction_rate: f64,
    pub probes_per_slot: u32,
    pub horizon_slots: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            n_uavs: 12,
            n_malicious: 2,
            receipt_rate: 0.5,
            interaction_rate: 0.5,
            probes_per_slot: 1,
            horizon_slots: 300,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if self.n_uavs < 2 {
            bad("n_uavs", "need at least two UAVs");
        }
        if self.n_malicious > self.n_uavs {
            bad("n_malicious", "cannot exceed n_uavs");
        }
        if !(self.receipt_rate > 0.0 && self.interaction_rate > 0.0) {
            bad("receipt_rate", "event rates must be > 0");
        }
        if self.horizon_slots == 0 {
            bad("horizon_slots", "must be > 0");
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    pub malicious: Vec<NodeId>,
    /// Credit after each slot, one series per UAV.
    pub histories: Vec<Vec<f64>>,
    pub detection_slots: Option<u64>,
}

/// Run one detection trial. Evidence is drawn from `behavior_rng` only, so
/// every weight scheme sees identical traffic for the same seed; the random
/// scheme draws its weights from `weight_rng`.
pub fn simulate_detection<R: Rng + ?Sized, W: Rng + ?Sized>(
    cfg: &DetectionConfig,
    params: &TrustParams,
    profile: [f64; 3],
    behavior_rng: &mut R,
    weight_rng: &mut W,
) -> DetectionOutcome {
    let n = cfg.n_uavs;
    let mut malicious: Vec<NodeId> = sample(behavior_rng, n, cfg.n_malicious).into_vec();
    malicious.sort_unstable();
    let mut behaviors = vec![BehaviorProfile::HONEST; n];
    for &m in &malicious {
        behaviors[m] = BehaviorProfile::malicious(profile);
    }
    let receipts = Poisson::new(cfg.receipt_rate).expect("validated rate");
    let interactions = Poisson::new(cfg.interaction_rate).expect("validated rate");
    let mut records: Vec<TrustRecord> = (0..n).map(|_| TrustRecord::from_params(params)).collect();
    let mut histories = vec![Vec::new(); n];
    let mut detected: BTreeMap<NodeId, u64> = BTreeMap::new();

    for t in 1..=cfg.horizon_slots {
        for u in 0..n {
            let b = behaviors[u];
            let k_rx = receipts.sample(behavior_rng) as u64;
            for _ in 0..k_rx {
                let mut k = behavior_rng.random_range(0..n - 1);
                if k >= u {
                    k += 1;
                }
                let ok = behavior_rng.random::<f64>() < b.p_forward;
                records[u].record_receipt(ok);
                records[u].record_recommendation(k, ok);
            }
            let k_int = interactions.sample(behavior_rng) as u64;
            for _ in 0..k_int {
                let ok = behavior_rng.random::<f64>() < b.p_trusted_interact;
                records[u].record_interaction(ok);
            }
            let acked = (0..cfg.probes_per_slot)
                .filter(|_| behavior_rng.random::<f64>() < b.p_probe_ack)
                .count() as u32;
            records[u].record_probes(acked);
        }
        let snapshot: BTreeMap<NodeId, f64> =
            records.iter().enumerate().map(|(i, r)| (i, r.credit)).collect();
        let updated: Vec<f64> = records
            .iter()
            .enumerate()
            .map(|(u, r)| {
                let mut others = snapshot.clone();
                others.remove(&u);
                step_record(r, &others, params, weight_rng)
            })
            .collect();
        for (u, c) in updated.into_iter().enumerate() {
            records[u].credit = c;
            histories[u].push(c);
        }
        for &m in &malicious {
            if records[m].credit < params.threshold {
                detected.entry(m).or_insert(t);
            }
        }
        if detected.len() == malicious.len() {
            break;
        }
    }
    let detection_slots = if detected.len() == malicious.len() {
        Some(detected.values().copied().max().unwrap_or(0))
    } else {
        None
    };
    DetectionOutcome {
        malicious,
        histories,
        detection_slots,
    }
}
