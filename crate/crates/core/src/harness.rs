//! Experiment orchestration: TOML configs, scenario sweeps, seeded batch runs
//! and CSV export.
//!
//! Every run is a pure function of (config, master seed). Per-run seeds are
//! split from the master with [`run_seed`]; inside a run each subsystem draws
//! from its own named stream (see [`crate::seed`]).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::env::{DemandStatus, DemandTraceRow, EnvConfig, EpisodeMetrics, FailureCause};
use crate::error::{Error, Result};
use crate::learner::checkpoint;
use crate::learner::train::{evaluate, train, Algorithm, CurvePoint, Policy, TrainConfig};
use crate::seed::{self, Stream};
use crate::trust::{simulate_detection, DetectionConfig, SchemeKind};

pub const SCENARIOS: [(&str, &str); 2] = [
    (
        "trust_detection",
        "detection time of malicious UAVs per weight scheme over behavior profiles and thresholds",
    ),
    (
        "routing",
        "train routing agents, then evaluate greedy policies over network scale sweeps",
    ),
];

/// The eight (p1, p2, p3) behavior triples of the detection study.
pub const PROFILE_GRID: [[f64; 3]; 8] = [
    [0.6, 0.6, 0.6],
    [0.6, 0.6, 0.8],
    [0.6, 0.8, 0.6],
    [0.6, 0.8, 0.8],
    [0.8, 0.6, 0.6],
    [0.8, 0.6, 0.8],
    [0.8, 0.8, 0.6],
    [0.8, 0.8, 0.8],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub schemes: Vec<SchemeKind>,
    pub profiles: Vec<[f64; 3]>,
    pub thresholds: Vec<f64>,
    /// Routing evaluation axes; an empty list means "the base env value".
    pub n_uavs: Vec<usize>,
    pub n_malicious: Vec<usize>,
    pub n_demands: Vec<usize>,
    pub varsigma: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            schemes: SchemeKind::ALL.to_vec(),
            profiles: PROFILE_GRID.to_vec(),
            thresholds: vec![0.8],
            n_uavs: Vec::new(),
            n_malicious: Vec::new(),
            n_demands: Vec::new(),
            varsigma: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub algorithms: Vec<Algorithm>,
    /// One independent training run per (algorithm, training seed).
    pub train_seeds: Vec<u64>,
    /// Run greedy evaluation episodes after training.
    pub evaluate: bool,
    /// Train a separate policy at every sweep point instead of once on the base environment.
    pub train_per_point: bool,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::SpMaddqn],
            train_seeds: vec![0],
            evaluate: true,
            train_per_point: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Per-evaluation demand trace, ledger log and (optionally) positions.
    pub traces: bool,
    pub positions: bool,
    pub checkpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub name: String,
    pub master_seed: u64,
    /// Explicit evaluation seeds; when empty, `0..seed_count` is used.
    pub seeds: Vec<u64>,
    pub seed_count: u64,
    pub workers: usize,
    pub env: EnvConfig,
    pub detection: DetectionConfig,
    pub learner: TrainConfig,
    pub routing: RoutingConfig,
    pub sweep: Sweep,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "trust_detection".into(),
            name: "experiment".into(),
            master_seed: 0,
            seeds: Vec::new(),
            seed_count: 10,
            workers: 1,
            env: EnvConfig::default(),
            detection: DetectionConfig::default(),
            learner: TrainConfig::default(),
            routing: RoutingConfig::default(),
            sweep: Sweep::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Collect every offending key before failing.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !SCENARIOS.iter().any(|(n, _)| *n == self.scenario) {
            let known: Vec<&str> = SCENARIOS.iter().map(|(n, _)| *n).collect();
            errors.push(format!("scenario: unknown '{}', expected one of {}", self.scenario, known.join(", ")));
        }
        if self.workers == 0 {
            errors.push("workers: must be at least 1".into());
        }
        self.env.validate("env", &mut errors);
        self.detection.validate("detection", &mut errors);
        self.learner.validate("learner", &mut errors);
        for (i, p) in self.sweep.profiles.iter().enumerate() {
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                errors.push(format!("sweep.profiles[{i}]: probabilities must lie in [0, 1]"));
            }
        }
        for (i, t) in self.sweep.thresholds.iter().enumerate() {
            if !(*t > 0.0 && *t < 1.0) {
                errors.push(format!("sweep.thresholds[{i}]: must lie in (0, 1)"));
            }
        }
        let max_uavs = self.sweep.n_uavs.iter().copied().chain([self.env.topology.n_uavs]).min().unwrap_or(0);
        for (i, m) in self.sweep.n_malicious.iter().enumerate() {
            if *m > max_uavs {
                errors.push(format!("sweep.n_malicious[{i}]: {m} exceeds the smallest UAV count {max_uavs}"));
            }
        }
        if self.sweep.n_uavs.contains(&0) {
            errors.push("sweep.n_uavs: counts must be positive".into());
        }
        for (i, v) in self.sweep.varsigma.iter().enumerate() {
            if !(*v > 0.0) {
                errors.push(format!("sweep.varsigma[{i}]: must be > 0"));
            }
        }
        if self.scenario == "routing" && self.routing.algorithms.is_empty() {
            errors.push("routing.algorithms: need at least one algorithm".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.seed_count).collect()
        } else {
            self.seeds.clone()
        }
    }
}

/// Seed of one run, split from the master seed.
pub fn run_seed(master: u64, seed: u64) -> u64 {
    seed::splitmix64(master ^ seed::splitmix64(seed.wrapping_add(0x5eed)))
}

/// Evaluation env seeds live in a different family from training seeds.
fn eval_seed(master: u64, seed: u64) -> u64 {
    run_seed(seed::derive(master, Stream::Placement), seed)
}

/// Shortest decimal that round-trips the value rounded to 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub scheme: SchemeKind,
    pub profile: [f64; 3],
    pub threshold: f64,
    pub seed: u64,
    pub detection_slots: Option<u64>,
}

pub const DETECTION_HEADER: [&str; 7] = ["scheme", "p1", "p2", "p3", "thr", "seed", "detection_slots"];

impl DetectionRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.scheme.name().to_string(),
            fmt_float(self.profile[0]),
            fmt_float(self.profile[1]),
            fmt_float(self.profile[2]),
            fmt_float(self.threshold),
            self.seed.to_string(),
            self.detection_slots.map(|d| d.to_string()).unwrap_or_default(),
        ]
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub n_uavs: usize,
    pub n_malicious: usize,
    pub n_demands: usize,
    pub metrics: EpisodeMetrics,
    pub varsigma: f64,
    pub train_seed: u64,
    pub rounds_committed: u64,
    pub rounds_failed: u64,
    pub revoked: usize,
}

pub const EPISODE_HEADER: [&str; 14] = [
    "seed",
    "algorithm",
    "n_uavs",
    "n_malicious",
    "n_demands",
    "TSR",
    "mean_e2e_s",
    "objective",
    "reward_sum",
    "varsigma",
    "train_seed",
    "rounds_committed",
    "rounds_failed",
    "revoked",
];

impl EpisodeRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.algorithm.name().to_string(),
            self.n_uavs.to_string(),
            self.n_malicious.to_string(),
            self.n_demands.to_string(),
            fmt_float(self.metrics.tsr),
            fmt_opt(self.metrics.mean_e2e_s),
            fmt_float(self.metrics.objective),
            fmt_float(self.metrics.reward_sum),
            fmt_float(self.varsigma),
            self.train_seed.to_string(),
            self.rounds_committed.to_string(),
            self.rounds_failed.to_string(),
            self.revoked.to_string(),
        ]
    }
}

pub const CURVE_HEADER: [&str; 10] = [
    "episode",
    "algorithm",
    "seed",
    "reward_sum",
    "mean_loss",
    "epsilon",
    "n_uavs",
    "n_malicious",
    "n_demands",
    "varsigma",
];

fn curve_record(c: &CurvePoint, p: &SweepPoint) -> Vec<String> {
    vec![
        c.episode.to_string(),
        c.algorithm.name().to_string(),
        c.seed.to_string(),
        fmt_float(c.reward_sum),
        fmt_opt(c.mean_loss),
        fmt_float(c.epsilon),
        p.n_uavs.to_string(),
        p.n_malicious.to_string(),
        p.n_demands.to_string(),
        fmt_float(p.varsigma),
    ]
}

pub const TRACE_HEADER: [&str; 8] = [
    "slot",
    "demand_id",
    "location",
    "action",
    "hop_delay_s",
    "reward",
    "status",
    "cause",
];

fn trace_record(r: &DemandTraceRow) -> Vec<String> {
    vec![
        r.slot.to_string(),
        r.demand_id.to_string(),
        r.location.to_string(),
        r.action.map(|a| a.to_string()).unwrap_or_default(),
        fmt_float(r.hop_delay_s),
        fmt_float(r.reward),
        r.status.name().to_string(),
        r.cause.map(|c| c.name().to_string()).unwrap_or_default(),
    ]
}

pub const LEDGER_HEADER: [&str; 6] = ["slot", "kind", "uav_id", "value", "outcome", "Tb_seconds"];
pub const POSITION_HEADER: [&str; 5] = ["slot", "node_id", "x", "y", "z"];

/// Write a header and rows. Zero rows still produce the header.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

/// Read a demand trace written by [`write_csv`] with [`TRACE_HEADER`].
pub fn read_trace(path: &Path) -> Result<Vec<DemandTraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Trace(format!("unexpected header in {}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Trace(format!("row {}: bad {what}", i + 1));
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
        let status = match &rec[6] {
            "in_flight" => DemandStatus::InFlight,
            "delivered" => DemandStatus::Delivered,
            "failed" => DemandStatus::Failed,
            _ => return Err(bad("status")),
        };
        let cause = match &rec[7] {
            "" => None,
            s => Some(
                [
                    FailureCause::Deadline,
                    FailureCause::SlotOverrun,
                    FailureCause::ConsensusOverrun,
                    FailureCause::Drop,
                    FailureCause::NotArrived,
                    FailureCause::QueueFull,
                ]
                .into_iter()
                .find(|c| c.name() == s)
                .ok_or_else(|| bad("cause"))?,
            ),
        };
        rows.push(DemandTraceRow {
            slot: rec[0].parse().map_err(|_| bad("slot"))?,
            demand_id: rec[1].parse().map_err(|_| bad("demand_id"))?,
            location: rec[2].parse().map_err(|_| bad("location"))?,
            action: match &rec[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("action"))?),
            },
            hop_delay_s: num(4, "hop_delay_s")?,
            reward: num(5, "reward")?,
            status,
            cause,
        });
    }
    Ok(rows)
}

/// Run `f` over `jobs` on up to `workers` threads; results keep job order.
pub fn parallel_map<J, T, F>(jobs: &[J], workers: usize, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every job ran"))
        .collect()
}

/// Detection trials over profiles × thresholds × schemes, seeds innermost.
pub fn run_detection(cfg: &ExperimentConfig) -> Result<Vec<DetectionRow>> {
    let seeds = cfg.seed_list();
    let mut jobs = Vec::new();
    for &profile in &cfg.sweep.profiles {
        for &threshold in &cfg.sweep.thresholds {
            for &scheme in &cfg.sweep.schemes {
                for &s in &seeds {
                    jobs.push((profile, threshold, scheme, s));
                }
            }
        }
    }
    parallel_map(&jobs, cfg.workers, |&(profile, threshold, scheme, s)| {
        let mut params = cfg.env.trust.clone();
        params.scheme = scheme;
        params.threshold = threshold;
        let rs = run_seed(cfg.master_seed, s);
        let mut behavior = seed::rng(rs, Stream::Behavior);
        let mut weights = seed::rng(rs, Stream::Weights);
        let out = simulate_detection(&cfg.detection, &params, profile, &mut behavior, &mut weights);
        Ok(DetectionRow {
            scheme,
            profile,
            threshold,
            seed: s,
            detection_slots: out.detection_slots,
        })
    })
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub algorithm: Algorithm,
    pub train_seed: u64,
    /// Environment the policy was trained on.
    pub point: SweepPoint,
    pub curve: Vec<CurvePoint>,
    pub policy: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_uavs: usize,
    pub n_malicious: usize,
    pub n_demands: usize,
    pub varsigma: f64,
}

impl SweepPoint {
    pub fn base(env: &EnvConfig) -> Self {
        Self {
            n_uavs: env.topology.n_uavs,
            n_malicious: env.n_malicious,
            n_demands: env.n_demands,
            varsigma: env.varsigma,
        }
    }

    pub fn apply(&self, base: &EnvConfig) -> EnvConfig {
        let mut e = base.clone();
        e.topology.n_uavs = self.n_uavs;
        e.n_malicious = self.n_malicious;
        e.n_demands = self.n_demands;
        e.varsigma = self.varsigma;
        e
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut pts = Vec::new();
    for u in axis(&cfg.sweep.n_uavs, cfg.env.topology.n_uavs) {
        for m in axis(&cfg.sweep.n_malicious, cfg.env.n_malicious) {
            for d in axis(&cfg.sweep.n_demands, cfg.env.n_demands) {
                for v in axis(&cfg.sweep.varsigma, cfg.env.varsigma) {
                    pts.push(SweepPoint {
                        n_uavs: u,
                        n_malicious: m,
                        n_demands: d,
                        varsigma: v,
                    });
                }
            }
        }
    }
    pts
}

/// Train one policy per (algorithm, training seed), and per sweep point when
/// `routing.train_per_point` is set.
pub fn run_training(cfg: &ExperimentConfig) -> Result<Vec<TrainedRun>> {
    let points = if cfg.routing.train_per_point {
        sweep_points(cfg)
    } else {
        vec![SweepPoint::base(&cfg.env)]
    };
    let mut jobs = Vec::new();
    for &p in &points {
        for &alg in &cfg.routing.algorithms {
            for &ts in &cfg.routing.train_seeds {
                jobs.push((p, alg, ts));
            }
        }
    }
    parallel_map(&jobs, cfg.workers, |&(p, alg, ts)| {
        let out = train(&p.apply(&cfg.env), &cfg.learner, alg, run_seed(cfg.master_seed, ts))?;
        let curve = out
            .curve
            .into_iter()
            .map(|mut c| {
                c.seed = ts;
                c
            })
            .collect();
        Ok(TrainedRun {
            algorithm: alg,
            train_seed: ts,
            point: p,
            curve,
            policy: out.policy,
        })
    })
}

/// Per-evaluation artifacts kept when traces are requested.
#[derive(Debug, Clone, Default)]
pub struct EvalArtifacts {
    pub trace: Vec<Vec<String>>,
    pub ledger: Vec<Vec<String>>,
    pub positions: Vec<Vec<String>>,
}

/// Greedy evaluation over sweep points × trained runs, seeds innermost.
pub fn run_evaluation(
    cfg: &ExperimentConfig,
    trained: &[TrainedRun],
) -> Result<Vec<(EpisodeRow, Option<EvalArtifacts>)>> {
    let seeds = cfg.seed_list();
    let mut jobs = Vec::new();
    for p in sweep_points(cfg) {
        for (k, run) in trained.iter().enumerate() {
            if cfg.routing.train_per_point && run.point != p {
                continue;
            }
            for &s in &seeds {
                jobs.push((p, k, s));
            }
        }
    }
    parallel_map(&jobs, cfg.workers, |&(p, k, s)| {
        let run = &trained[k];
        let env_cfg = p.apply(&cfg.env);
        let env = evaluate_with(&run.policy, &env_cfg, eval_seed(cfg.master_seed, s), cfg.output.positions)?;
        let row = EpisodeRow {
            seed: s,
            algorithm: run.algorithm,
            n_uavs: p.n_uavs,
            n_malicious: p.n_malicious,
            n_demands: p.n_demands,
            metrics: env.metrics(),
            varsigma: p.varsigma,
            train_seed: run.train_seed,
            rounds_committed: env.ledger().rounds_committed,
            rounds_failed: env.ledger().rounds_failed,
            revoked: env.ledger().revoked().len(),
        };
        let artifacts = cfg.output.traces.then(|| EvalArtifacts {
            trace: env.trace.iter().map(trace_record).collect(),
            ledger: env
                .ledger()
                .events
                .iter()
                .map(|e| {
                    vec![
                        e.slot.to_string(),
                        e.kind.clone(),
                        e.uav_id.map(|u| u.to_string()).unwrap_or_default(),
                        fmt_float(e.value),
                        e.outcome.clone(),
                        fmt_float(e.tb_seconds),
                    ]
                })
                .collect(),
            positions: env
                .position_trace
                .iter()
                .map(|&(slot, id, x, y, z)| {
                    vec![slot.to_string(), id.to_string(), fmt_float(x), fmt_float(y), fmt_float(z)]
                })
                .collect(),
        });
        Ok((row, artifacts))
    })
}

fn evaluate_with(policy: &Policy, env_cfg: &EnvConfig, seed: u64, positions: bool) -> Result<crate::env::Env> {
    if !positions {
        return evaluate(policy, env_cfg, seed);
    }
    crate::learner::train::evaluate_recording(policy, env_cfg, seed)
}

/// Files written by one `run`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub name: String,
    pub master_seed: u64,
    pub files: Vec<PathBuf>,
    pub rows: usize,
}

/// Run a whole experiment and write its CSVs under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut summary = RunSummary {
        scenario: cfg.scenario.clone(),
        name: cfg.name.clone(),
        master_seed: cfg.master_seed,
        ..RunSummary::default()
    };
    match cfg.scenario.as_str() {
        "trust_detection" => {
            let rows = run_detection(cfg)?;
            let path = out_dir.join("detection.csv");
            write_csv(&path, &DETECTION_HEADER, rows.iter().map(DetectionRow::record))?;
            summary.rows += rows.len();
            summary.files.push(path);
        }
        "routing" => {
            let trained = run_training(cfg)?;
            let path = out_dir.join("curves.csv");
            let curve_rows: Vec<Vec<String>> = trained
                .iter()
                .flat_map(|t| t.curve.iter().map(|c| curve_record(c, &t.point))).collect();
            summary.rows += curve_rows.len();
            write_csv(&path, &CURVE_HEADER, curve_rows)?;
            summary.files.push(path);
            if cfg.output.checkpoints {
                for t in &trained {
                    let path = out_dir
                        .join("checkpoints")
                        .join(format!(
                            "{}_t{}_u{}_m{}_d{}_v{}.ckpt",
                            t.algorithm.name(),
                            t.train_seed,
                            t.point.n_uavs,
                            t.point.n_malicious,
                            t.point.n_demands,
                            fmt_float(t.point.varsigma)
                        ));
                    fs::create_dir_all(path.parent().expect("has parent"))
                        .map_err(|e| Error::io("creating checkpoint dir", e))?;
                    checkpoint::save(&t.policy, &path)?;
                    summary.files.push(path);
                }
            }
            if cfg.routing.evaluate {
                let evals = run_evaluation(cfg, &trained)?;
                let path = out_dir.join("episodes.csv");
                write_csv(&path, &EPISODE_HEADER, evals.iter().map(|(r, _)| r.record()))?;
                summary.rows += evals.len();
                summary.files.push(path);
                for (r, art) in &evals {
                    let Some(art) = art else { continue };
                    let stem = format!(
                        "{}_t{}_u{}_m{}_d{}_v{}_s{}",
                        r.algorithm.name(),
                        r.train_seed,
                        r.n_uavs,
                        r.n_malicious,
                        r.n_demands,
                        fmt_float(r.varsigma),
                        r.seed
                    );
                    let dir = out_dir.join("traces");
                    let p = dir.join(format!("{stem}_trace.csv"));
                    write_csv(&p, &TRACE_HEADER, art.trace.clone())?;
                    summary.files.push(p);
                    let p = dir.join(format!("{stem}_ledger.csv"));
                    write_csv(&p, &LEDGER_HEADER, art.ledger.clone())?;
                    summary.files.push(p);
                    if cfg.output.positions {
                        let p = dir.join(format!("{stem}_positions.csv"));
                        write_csv(&p, &POSITION_HEADER, art.positions.clone())?;
                        summary.files.push(p);
                    }
                }
            }
        }
        other => return Err(Error::InvalidConfig(vec![format!("scenario: unknown '{other}'")])),
    }
    Ok(summary)
}

/// Median with `None` (never detected) ranked after every finite value and
/// counted as `horizon + 1`.
pub fn median_detection(values: &[Option<u64>], horizon: u64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<u64> = values.iter().map(|x| x.unwrap_or(horizon + 1)).collect();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    })
}
