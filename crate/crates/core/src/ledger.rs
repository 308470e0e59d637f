//! Lightweight ledger: trust-aware cluster-head selection, the analytic
//! PBFT-style consensus delay model, round outcomes, and the hash-chained
//! record of credit updates and membership changes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusParams {
    /// CPU cycles per signature.
    pub sign_cost: f64,
    pub verify_cost: f64,
    pub mac_cost: f64,
    /// Block size in bytes. Kept as metadata; no delay term uses it.
    pub block_size_bytes: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            sign_cost: 1e6,
            verify_cost: 1e6,
            mac_cost: 1e6,
            block_size_bytes: 15e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerParams {
    pub consensus: ConsensusParams,
    /// Slots between cluster-head updates.
    pub stability_period: u64,
    /// Minimum compute (cycles/s) for a full UAV.
    pub compute_threshold_hz: f64,
    pub score_weights: [f64; 2],
}

impl Default for LedgerParams {
    fn default() -> Self {
        Self {
            consensus: ConsensusParams::default(),
            stability_period: 50,
            compute_threshold_hz: 2.5e9,
            score_weights: [0.5, 0.5],
        }
    }
}

impl LedgerParams {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        let c = &self.consensus;
        if !(c.sign_cost > 0.0 && c.verify_cost > 0.0 && c.mac_cost > 0.0) {
            bad("consensus", "cryptographic costs must be > 0");
        }
        if self.stability_period == 0 {
            bad("stability_period", "must be > 0");
        }
        let w = self.score_weights;
        if w.iter().any(|&x| x < 0.0) || (w[0] + w[1] - 1.0).abs() > 1e-9 {
            bad("score_weights", "must be non-negative and sum to 1");
        }
    }
}

/// S = T·(w₁·∂/∂max + w₂·C/Cmax).
pub fn composite_score(
    credit: f64,
    compute: f64,
    storage: f64,
    max_compute: f64,
    max_storage: f64,
    weights: [f64; 2],
) -> f64 {
    credit * (weights[0] * compute / max_compute + weights[1] * storage / max_storage)
}

/// Fault budget F = (K−1)/3 and quorum 2⌈F⌉+1.
pub fn fault_budget(k: usize) -> (f64, usize) {
    let f = (k.max(1) - 1) as f64 / 3.0;
    // integer ceiling avoids float rounding in the quorum
    let ceil_f = (k.max(1) - 1).div_ceil(3);
    (f, 2 * ceil_f + 1)
}

/// Largest number of malicious participants a round can absorb, ⌊F⌋.
pub fn max_faulty(k: usize) -> usize {
    (k.max(1) - 1) / 3
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseDelays {
    pub t1: f64,
    pub t2_1: f64,
    pub t2_2: f64,
    pub t3_primary: f64,
    /// Slowest replica's commit-phase delay.
    pub t3_replica: f64,
    pub t4: f64,
}

impl PhaseDelays {
    pub fn t2(&self) -> f64 {
        self.t2_1 + self.t2_2
    }

    pub fn t3(&self) -> f64 {
        self.t3_primary.max(self.t3_replica)
    }

    pub fn tb(&self) -> f64 {
        self.t1 + self.t2() + self.t3() + self.t4
    }
}

/// Phase delays for K participants with the given primary and replica speeds.
/// With no replicas the replica terms vanish and T₄ uses the primary speed.
pub fn consensus_delay(
    k: usize,
    params: &ConsensusParams,
    primary_speed: f64,
    replica_speeds: &[f64],
) -> PhaseDelays {
    let kf = k as f64;
    let (ev, em, es) = (params.verify_cost, params.mac_cost, params.sign_cost);
    let quorum = fault_budget(k).1 as f64;
    let pack = es + (kf - 1.0) * em;
    let t1 = kf * (ev + em) / primary_speed;
    let t2_1 = pack / primary_speed;
    let t2_2 = replica_speeds
        .iter()
        .map(|&c| (kf + 1.0) * (ev + em) / c)
        .fold(0.0, f64::max);
    let t3_primary = quorum * (ev + em) / primary_speed;
    let t3_replica = replica_speeds
        .iter()
        .map(|&c| (quorum * (ev + em) + pack) / c)
        .fold(0.0, f64::max);
    let slowest = replica_speeds.iter().copied().fold(primary_speed, f64::min);
    let t4 = (pack + quorum * (ev + em)) / slowest;
    PhaseDelays {
        t1,
        t2_1,
        t2_2,
        t3_primary,
        t3_replica,
        t4,
    }
}

/// One UAV as seen by cluster-head selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: NodeId,
    pub credit: f64,
    pub compute_hz: f64,
    pub storage_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub full_uavs: BTreeSet<NodeId>,
    pub light_uavs: BTreeSet<NodeId>,
    pub primary: Option<NodeId>,
    /// Consecutive slots served as a full UAV.
    pub service: BTreeMap<NodeId, u64>,
    pub stability_period: u64,
    /// Updates skipped because nobody qualified.
    pub skipped_updates: u64,
    /// Updates that left the full set empty after rotation.
    pub empty_updates: u64,
}

impl RoleAssignment {
    pub fn new(stability_period: u64) -> Self {
        Self {
            stability_period,
            ..Default::default()
        }
    }

    pub fn participants(&self) -> usize {
        self.full_uavs.len()
    }

    /// Drop a UAV from both sets, e.g. after revocation or exit. Returns true
    /// if it was the primary, in which case the caller must pick a new one.
    pub fn evict(&mut self, id: NodeId) -> bool {
        self.full_uavs.remove(&id);
        self.light_uavs.remove(&id);
        self.service.remove(&id);
        if self.primary == Some(id) {
            self.primary = None;
            true
        } else {
            false
        }
    }
}

/// Cluster-head update. Runs only on slots that are multiples of the
/// stability period; otherwise returns the assignment unchanged.
pub fn select_chus(
    candidates: &[Candidate],
    credit_threshold: f64,
    compute_threshold: f64,
    slot: u64,
    assignment: &RoleAssignment,
    weights: [f64; 2],
) -> RoleAssignment {
    let m = assignment.stability_period.max(1);
    let mut next = assignment.clone();
    if slot % m != 0 {
        return next;
    }
    let qualifies =
        |c: &Candidate| c.credit > credit_threshold && c.compute_hz > compute_threshold;
    if !candidates.iter().any(qualifies) {
        next.skipped_updates += 1;
        return next;
    }
    let by_id: BTreeMap<NodeId, &Candidate> = candidates.iter().map(|c| (c.id, c)).collect();

    // members that no longer qualify leave; the rest accrue one period of service
    let mut retired = BTreeSet::new();
    for id in assignment.full_uavs.iter().copied() {
        match by_id.get(&id) {
            Some(c) if qualifies(c) => {
                let s = next.service.entry(id).or_insert(0);
                *s += m;
                if *s >= 2 * m {
                    retired.insert(id);
                }
            }
            _ => {
                next.full_uavs.remove(&id);
                next.service.remove(&id);
            }
        }
    }
    for id in &retired {
        next.full_uavs.remove(id);
        next.service.remove(id);
    }
    for c in candidates.iter().filter(|c| qualifies(c)) {
        if !next.full_uavs.contains(&c.id) && !retired.contains(&c.id) {
            next.full_uavs.insert(c.id);
            next.service.insert(c.id, 0);
        }
    }
    next.light_uavs = candidates
        .iter()
        .map(|c| c.id)
        .filter(|id| !next.full_uavs.contains(id))
        .collect();

    next.primary = pick_primary(&next.full_uavs, candidates, weights);
    if next.primary.is_none() {
        next.empty_updates += 1;
    }
    next
}

/// Highest composite score among `members`, ties to the lowest id.
pub fn pick_primary(
    members: &BTreeSet<NodeId>,
    candidates: &[Candidate],
    weights: [f64; 2],
) -> Option<NodeId> {
    let max_compute = candidates.iter().map(|c| c.compute_hz).fold(0.0, f64::max);
    let max_storage = candidates.iter().map(|c| c.storage_bytes).fold(0.0, f64::max);
    let mut best: Option<(f64, NodeId)> = None;
    for c in candidates.iter().filter(|c| members.contains(&c.id)) {
        let s = composite_score(
            c.credit,
            c.compute_hz,
            c.storage_bytes,
            max_compute,
            max_storage,
            weights,
        );
        let better = match best {
            None => true,
            Some((b, id)) => s > b || (s == b && c.id < id),
        };
        if better {
            best = Some((s, c.id));
        }
    }
    best.map(|(_, id)| id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    CreditUpdate,
    Join,
    Exit,
    Revocation,
}

impl RecordKind {
    pub fn name(self) -> &'static str {
        match self {
            RecordKind::CreditUpdate => "credit_update",
            RecordKind::Join => "join",
            RecordKind::Exit => "exit",
            RecordKind::Revocation => "revocation",
        }
    }

    fn tag(self) -> u8 {
        match self {
            RecordKind::CreditUpdate => 0,
            RecordKind::Join => 1,
            RecordKind::Exit => 2,
            RecordKind::Revocation => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub slot: u64,
    pub kind: RecordKind,
    pub uav_id: NodeId,
    /// Credit for updates and revocations; 1 for joins, 0 for exits.
    pub value: f64,
    pub committed: bool,
    /// Chain digest, set at commit.
    pub digest: Option<[u8; 32]>,
}

impl LedgerRecord {
    pub fn pending(slot: u64, kind: RecordKind, uav_id: NodeId, value: f64) -> Self {
        Self {
            slot,
            kind,
            uav_id,
            value,
            committed: false,
            digest: None,
        }
    }
}

fn chain_digest(prev: &[u8; 32], r: &LedgerRecord) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(r.slot.to_le_bytes());
    h.update([r.kind.tag()]);
    h.update((r.uav_id as u64).to_le_bytes());
    h.update(r.value.to_bits().to_le_bytes());
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Committed,
    Failed,
}

impl RoundOutcome {
    pub fn name(self) -> &'static str {
        match self {
            RoundOutcome::Committed => "committed",
            RoundOutcome::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub slot: u64,
    pub outcome: RoundOutcome,
    pub participants: usize,
    pub malicious_participants: usize,
    pub delays: PhaseDelays,
    pub tb: f64,
    /// Records committed in this round, revocations included.
    pub committed: Vec<LedgerRecord>,
    pub revoked: Vec<NodeId>,
    pub joined: Vec<NodeId>,
    pub exited: Vec<NodeId>,
}

/// One row of the ledger event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub slot: u64,
    pub kind: String,
    pub uav_id: Option<NodeId>,
    pub value: f64,
    pub outcome: String,
    pub tb_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipRequest {
    Join { uav_id: NodeId, registered: bool },
    Exit { uav_id: NodeId },
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    committed: Vec<LedgerRecord>,
    pending: Vec<LedgerRecord>,
    head: [u8; 32],
    credits: BTreeMap<NodeId, f64>,
    revoked: BTreeSet<NodeId>,
    pub events: Vec<LedgerEvent>,
    pub rounds_committed: u64,
    pub rounds_failed: u64,
}

impl Ledger {
    /// Genesis: every listed UAV starts with the same committed credit.
    pub fn genesis(uavs: &[NodeId], initial_credit: f64) -> Self {
        let mut l = Ledger::default();
        for &u in uavs {
            l.append_committed(LedgerRecord::pending(0, RecordKind::Join, u, initial_credit));
        }
        l
    }

    fn append_committed(&mut self, mut r: LedgerRecord) -> LedgerRecord {
        let d = chain_digest(&self.head, &r);
        r.committed = true;
        r.digest = Some(d);
        self.head = d;
        apply_record(&mut self.credits, &mut self.revoked, &r);
        self.committed.push(r.clone());
        r
    }

    pub fn committed_records(&self) -> &[LedgerRecord] {
        &self.committed
    }

    pub fn pending_records(&self) -> &[LedgerRecord] {
        &self.pending
    }

    pub fn head(&self) -> [u8; 32] {
        self.head
    }

    pub fn committed_credits(&self) -> &BTreeMap<NodeId, f64> {
        &self.credits
    }

    /// Committed credit; 0 for unknown ids.
    pub fn credit(&self, id: NodeId) -> f64 {
        self.credits.get(&id).copied().unwrap_or(0.0)
    }

    pub fn is_revoked(&self, id: NodeId) -> bool {
        self.revoked.contains(&id)
    }

    pub fn revoked(&self) -> &BTreeSet<NodeId> {
        &self.revoked
    }

    pub fn submit(&mut self, record: LedgerRecord) {
        self.pending.push(record);
    }

    pub fn submit_credit(&mut self, slot: u64, uav_id: NodeId, credit: f64) {
        self.submit(LedgerRecord::pending(slot, RecordKind::CreditUpdate, uav_id, credit));
    }

    /// Queue a membership change; it takes effect when a round commits.
    pub fn process_membership(&mut self, request: MembershipRequest, slot: u64) -> Result<LedgerRecord> {
        let record = match request {
            MembershipRequest::Join { uav_id, registered } => {
                if !registered {
                    return Err(Error::Unregistered(uav_id));
                }
                LedgerRecord::pending(slot, RecordKind::Join, uav_id, 1.0)
            }
            MembershipRequest::Exit { uav_id } => {
                LedgerRecord::pending(slot, RecordKind::Exit, uav_id, 0.0)
            }
        };
        self.submit(record.clone());
        Ok(record)
    }

    /// Execute one consensus round. It commits iff at most ⌊F⌋ participants
    /// are malicious; on commit every UAV at or below the threshold is revoked.
    pub fn run_round(
        &mut self,
        assignment: &RoleAssignment,
        malicious: &BTreeSet<NodeId>,
        compute_hz: &BTreeMap<NodeId, f64>,
        params: &ConsensusParams,
        slot: u64,
        threshold: f64,
    ) -> RoundResult {
        let k = assignment.participants();
        let bad = assignment
            .full_uavs
            .iter()
            .filter(|id| malicious.contains(id))
            .count();
        let delays = match assignment.primary {
            Some(p) if k > 0 => {
                let primary_speed = compute_hz.get(&p).copied().unwrap_or(1.0);
                let replicas: Vec<f64> = assignment
                    .full_uavs
                    .iter()
                    .filter(|&&id| id != p)
                    .map(|id| compute_hz.get(id).copied().unwrap_or(1.0))
                    .collect();
                consensus_delay(k, params, primary_speed, &replicas)
            }
            _ => PhaseDelays::default(),
        };
        let tb = delays.tb();
        let ok = k > 0 && assignment.primary.is_some() && bad <= max_faulty(k);
        let outcome = if ok {
            RoundOutcome::Committed
        } else {
            RoundOutcome::Failed
        };
        let mut result = RoundResult {
            slot,
            outcome,
            participants: k,
            malicious_participants: bad,
            delays,
            tb,
            committed: Vec::new(),
            revoked: Vec::new(),
            joined: Vec::new(),
            exited: Vec::new(),
        };
        self.events.push(LedgerEvent {
            slot,
            kind: "round".into(),
            uav_id: assignment.primary,
            value: k as f64,
            outcome: outcome.name().into(),
            tb_seconds: tb,
        });
        if !ok {
            self.rounds_failed += 1;
            return result;
        }
        self.rounds_committed += 1;
        let pending = std::mem::take(&mut self.pending);
        for r in pending {
            match r.kind {
                RecordKind::Join => result.joined.push(r.uav_id),
                RecordKind::Exit => result.exited.push(r.uav_id),
                _ => {}
            }
            let c = self.append_committed(r);
            result.committed.push(c);
        }
        let to_revoke: Vec<NodeId> = self
            .credits
            .iter()
            .filter(|(id, c)| **c <= threshold && !self.revoked.contains(id))
            .map(|(id, _)| *id)
            .collect();
        for id in to_revoke {
            let value = self.credits[&id];
            let c = self.append_committed(LedgerRecord::pending(slot, RecordKind::Revocation, id, value));
            result.committed.push(c);
            result.revoked.push(id);
        }
        for r in &result.committed {
            if r.kind == RecordKind::CreditUpdate {
                continue;
            }
            self.events.push(LedgerEvent {
                slot,
                kind: r.kind.name().into(),
                uav_id: Some(r.uav_id),
                value: r.value,
                outcome: outcome.name().into(),
                tb_seconds: tb,
            });
        }
        result
    }
}

fn apply_record(credits: &mut BTreeMap<NodeId, f64>, revoked: &mut BTreeSet<NodeId>, r: &LedgerRecord) {
    match r.kind {
        RecordKind::CreditUpdate | RecordKind::Join => {
            credits.insert(r.uav_id, r.value);
        }
        RecordKind::Exit => {
            credits.remove(&r.uav_id);
        }
        RecordKind::Revocation => {
            revoked.insert(r.uav_id);
        }
    }
}

/// Rebuild committed credits from a record log, checking the digest chain.
pub fn replay(records: &[LedgerRecord]) -> Result<(BTreeMap<NodeId, f64>, BTreeSet<NodeId>)> {
    let mut head = [0u8; 32];
    let mut credits = BTreeMap::new();
    let mut revoked = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let d = chain_digest(&head, r);
        if !r.committed || r.digest != Some(d) {
            return Err(Error::LedgerCorrupt(i));
        }
        head = d;
        apply_record(&mut credits, &mut revoked, r);
    }
    Ok((credits, revoked))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(composite_score(1.0, 4.0, 2.0, 4.0, 2.0, [0.5, 0.5]), 1.0);
        let s = composite_score(0.9, 2.0, 2.0, 4.0, 2.0, [0.5, 0.5]);
        assert!((s - 0.675).abs() < 1e-15);
        assert_eq!(composite_score(0.0, 4.0, 2.0, 4.0, 2.0, [0.5, 0.5]), 0.0);
    }

    #[test]
    fn budget_examples() {
        assert_eq!(fault_budget(4), (1.0, 3));
        assert_eq!(fault_budget(7), (2.0, 5));
        assert_eq!(fault_budget(1), (0.0, 1));
        let (f, q) = fault_budget(5);
        assert!((f - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(q, 5);
    }

    #[test]
    fn phase_examples() {
        let p = ConsensusParams::default();
        let d = consensus_delay(4, &p, 2e9, &[2e9, 2e9, 2e9]);
        assert!((d.t1 - 4e-3).abs() < 1e-15);
        // hand evaluation with ε = 1e6, ∂ = 2e9, K = 4, quorum 3:
        // T2,1 = 4e6/2e9, T2,2 = 10e6/2e9, T3 = 10e6/2e9, T4 = 10e6/2e9
        assert!((d.t2() - 7e-3).abs() < 1e-15);
        assert!((d.t3() - 5e-3).abs() < 1e-15);
        assert!((d.t4 - 5e-3).abs() < 1e-15);
        assert!((d.tb() - 21e-3).abs() < 1e-15);
    }

    fn cand(id: NodeId, credit: f64, compute: f64) -> Candidate {
        Candidate {
            id,
            credit,
            compute_hz: compute,
            storage_bytes: 1e9,
        }
    }

    #[test]
    fn primary_is_argmax() {
        let cs: Vec<_> = [0.9, 0.95, 0.85, 0.99]
            .iter()
            .enumerate()
            .map(|(i, &c)| cand(i, c, 3e9))
            .collect();
        let a = select_chus(&cs, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5]);
        assert_eq!(a.primary, Some(3));
        assert_eq!(a.full_uavs.len(), 4);
    }

    #[test]
    fn failing_member_is_removed() {
        let mut cs = vec![cand(0, 0.9, 3e9), cand(1, 0.95, 3e9)];
        let a = select_chus(&cs, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5]);
        cs[1].credit = 0.7;
        let b = select_chus(&cs, 0.8, 2.5e9, 5, &a, [0.5, 0.5]);
        assert!(!b.full_uavs.contains(&1));
        assert!(!b.service.contains_key(&1));
        assert_eq!(b.primary, Some(0));
    }

    #[test]
    fn rotation_retires_long_servers() {
        let cs = vec![cand(0, 0.99, 3.9e9), cand(1, 0.9, 3e9)];
        let mut a = RoleAssignment::new(5);
        a.full_uavs.insert(0);
        a.service.insert(0, 5);
        let b = select_chus(&cs, 0.8, 2.5e9, 10, &a, [0.5, 0.5]);
        assert!(!b.full_uavs.contains(&0));
        assert_eq!(b.primary, Some(1));
        // rejoins at the next update
        let c = select_chus(&cs, 0.8, 2.5e9, 15, &b, [0.5, 0.5]);
        assert!(c.full_uavs.contains(&0));
    }

    #[test]
    fn nobody_qualifies_keeps_previous() {
        let good = vec![cand(0, 0.99, 3e9)];
        let a = select_chus(&good, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5]);
        let bad = vec![cand(0, 0.5, 3e9)];
        let b = select_chus(&bad, 0.8, 2.5e9, 5, &a, [0.5, 0.5]);
        assert_eq!(b.full_uavs, a.full_uavs);
        assert_eq!(b.skipped_updates, 1);
    }

    fn four_full() -> RoleAssignment {
        let cs: Vec<_> = (0..4).map(|i| cand(i, 0.9, 3e9)).collect();
        select_chus(&cs, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5])
    }

    #[test]
    fn round_outcomes() {
        let a = four_full();
        let speeds: BTreeMap<_, _> = (0..4).map(|i| (i, 3e9)).collect();
        let p = ConsensusParams::default();
        let mut l = Ledger::genesis(&[0, 1, 2, 3], 1.0);
        let one: BTreeSet<_> = [2].into();
        assert_eq!(l.run_round(&a, &one, &speeds, &p, 1, 0.8).outcome, RoundOutcome::Committed);
        let two: BTreeSet<_> = [2, 3].into();
        assert_eq!(l.run_round(&a, &two, &speeds, &p, 2, 0.8).outcome, RoundOutcome::Failed);
    }

    #[test]
    fn commit_revokes_low_credit() {
        let a = four_full();
        let speeds: BTreeMap<_, _> = (0..4).map(|i| (i, 3e9)).collect();
        let mut l = Ledger::genesis(&[0, 1, 2, 3], 1.0);
        l.submit_credit(1, 2, 0.75);
        let r = l.run_round(&a, &BTreeSet::new(), &speeds, &ConsensusParams::default(), 1, 0.8);
        assert_eq!(r.revoked, vec![2]);
        assert!(l.is_revoked(2));
    }

    #[test]
    fn failed_round_keeps_pending() {
        let a = four_full();
        let speeds: BTreeMap<_, _> = (0..4).map(|i| (i, 3e9)).collect();
        let mut l = Ledger::genesis(&[0, 1, 2, 3], 1.0);
        l.submit_credit(1, 1, 0.5);
        let bad: BTreeSet<_> = [0, 1].into();
        l.run_round(&a, &bad, &speeds, &ConsensusParams::default(), 1, 0.8);
        assert_eq!(l.credit(1), 1.0);
        assert_eq!(l.pending_records().len(), 1);
    }

    #[test]
    fn membership_requests() {
        let mut l = Ledger::genesis(&[0], 1.0);
        assert!(matches!(
            l.process_membership(MembershipRequest::Join { uav_id: 9, registered: false }, 1),
            Err(Error::Unregistered(9))
        ));
        l.process_membership(MembershipRequest::Join { uav_id: 9, registered: true }, 1)
            .unwrap();
        let cs = vec![cand(0, 0.99, 3e9)];
        let a = select_chus(&cs, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5]);
        let speeds: BTreeMap<_, _> = [(0, 3e9)].into();
        let r = l.run_round(&a, &BTreeSet::new(), &speeds, &ConsensusParams::default(), 1, 0.8);
        assert_eq!(r.joined, vec![9]);
        assert_eq!(l.credit(9), 1.0);
    }

    #[test]
    fn replay_detects_tampering() {
        let mut l = Ledger::genesis(&[0, 1], 1.0);
        l.submit_credit(1, 1, 0.9);
        let cs = vec![cand(0, 0.99, 3e9), cand(1, 0.95, 3e9)];
        let a = select_chus(&cs, 0.8, 2.5e9, 0, &RoleAssignment::new(5), [0.5, 0.5]);
        let speeds: BTreeMap<_, _> = [(0, 3e9), (1, 3e9)].into();
        l.run_round(&a, &BTreeSet::new(), &speeds, &ConsensusParams::default(), 1, 0.8);
        let mut recs = l.committed_records().to_vec();
        let (credits, _) = replay(&recs).unwrap();
        assert_eq!(&credits, l.committed_credits());
        recs[1].value = 0.1;
        assert!(matches!(replay(&recs), Err(Error::LedgerCorrupt(1))));
    }
}
