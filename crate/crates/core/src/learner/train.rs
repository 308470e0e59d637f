//! Multi-agent training loop and greedy evaluation.
//!
//! One agent per UAV. Every demand decision made by a UAV becomes a transition
//! in that UAV's buffer once the demand's next decision (by whichever UAV then
//! holds it) is observed, or once the demand is delivered or fails.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentConfig};
use super::optim::OptimizerKind;
use super::replay::Transition;
use crate::env::{DemandStatus, EnvConfig, EpisodeMetrics, Env};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SP-MADDQN")]
    SpMaddqn,
    #[serde(rename = "SHERB-MADDQN")]
    SherbMaddqn,
    #[serde(rename = "PER-MADDQN")]
    PerMaddqn,
    #[serde(rename = "MADDQN")]
    Maddqn,
    #[serde(rename = "SP-MADQN")]
    SpMadqn,
    #[serde(rename = "MADQN")]
    Madqn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::SpMaddqn,
        Algorithm::SherbMaddqn,
        Algorithm::PerMaddqn,
        Algorithm::Maddqn,
        Algorithm::SpMadqn,
        Algorithm::Madqn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SpMaddqn => "SP-MADDQN",
            Algorithm::SherbMaddqn => "SHERB-MADDQN",
            Algorithm::PerMaddqn => "PER-MADDQN",
            Algorithm::Maddqn => "MADDQN",
            Algorithm::SpMadqn => "SP-MADQN",
            Algorithm::Madqn => "MADQN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }

    /// Store distance-shaped rewards.
    pub fn shaped(self) -> bool {
        matches!(self, Algorithm::SpMaddqn | Algorithm::SherbMaddqn | Algorithm::SpMadqn)
    }

    pub fn prioritized(self) -> bool {
        matches!(self, Algorithm::SpMaddqn | Algorithm::PerMaddqn | Algorithm::SpMadqn)
    }

    pub fn double(self) -> bool {
        matches!(
            self,
            Algorithm::SpMaddqn | Algorithm::SherbMaddqn | Algorithm::PerMaddqn | Algorithm::Maddqn
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch: usize,
    pub target_period: u64,
    pub mu: f64,
    pub capacity: usize,
    pub priority_exponent: f64,
    pub is_exponent_start: f64,
    pub is_exponent_end: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            hidden: vec![256, 256],
            lr: 0.005,
            gamma: 0.95,
            batch: 64,
            target_period: 100,
            mu: 0.01,
            capacity: 1_000_000,
            priority_exponent: 0.6,
            is_exponent_start: 0.4,
            is_exponent_end: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.8,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bad("hidden", "needs at least one non-zero layer width");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad("lr", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bad("gamma", "must lie in [0, 1]");
        }
        if self.batch == 0 {
            bad("batch", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            bad("mu", "must lie in [0, 1]");
        }
        if self.capacity < self.batch {
            bad("capacity", "must hold at least one batch");
        }
        if self.priority_exponent < 0.0 {
            bad("priority_exponent", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            bad("epsilon_start/epsilon_end", "must lie in [0, 1]");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            bad("epsilon_decay_fraction", "must lie in (0, 1]");
        }
    }

    /// Linear decay over the first `epsilon_decay_fraction` of episodes, flat after.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = self.epsilon_decay_fraction * self.episodes as f64;
        let frac = if span > 0.0 { (episode as f64 / span).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    /// Importance-sampling exponent annealed linearly across training.
    pub fn is_exponent(&self, episode: usize) -> f64 {
        let frac = if self.episodes > 1 {
            episode as f64 / (self.episodes - 1) as f64
        } else {
            1.0
        };
        self.is_exponent_start + (self.is_exponent_end - self.is_exponent_start) * frac.min(1.0)
    }

    pub fn agent_config(&self, algorithm: Algorithm) -> AgentConfig {
        AgentConfig {
            lr: self.lr,
            gamma: self.gamma,
            batch: self.batch,
            target_period: self.target_period,
            mu: self.mu,
            capacity: self.capacity,
            priority_exponent: self.priority_exponent,
            optimizer: self.optimizer,
            double: algorithm.double(),
            prioritized: algorithm.prioritized(),
        }
    }
}

/// Trained agents indexed by UAV ordinal (UAV id minus the sensor count).
#[derive(Debug, Clone)]
pub struct Policy {
    pub agents: Vec<Agent>,
}

impl Policy {
    /// Agent for a UAV ordinal. Ordinals beyond the trained set reuse an agent
    /// of the same x-third class (ordinal mod 3) so larger networks can be
    /// evaluated with a policy trained on a smaller one.
    pub fn index_for(&self, ordinal: usize) -> usize {
        let n = self.agents.len();
        if ordinal < n {
            return ordinal;
        }
        let period = if n >= 3 { n - n % 3 } else { n.max(1) };
        ordinal % period
    }

    fn ordinal(env: &Env, uav: usize) -> usize {
        uav.saturating_sub(env.config.topology.n_sds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Unshaped episode reward.
    pub reward_sum: f64,
    pub mean_loss: Option<f64>,
    pub epsilon: f64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub curve: Vec<CurvePoint>,
    pub policy: Policy,
}

/// Seed of the environment used for a training episode.
pub fn episode_seed(master: u64, episode: usize) -> u64 {
    seed::splitmix64(seed::derive(master, Stream::Placement) ^ seed::splitmix64(episode as u64))
}

struct Pending {
    agent: usize,
    obs: Vec<f64>,
    action: usize,
    reward: f64,
}

pub fn train(env_config: &EnvConfig, config: &TrainConfig, algorithm: Algorithm, master_seed: u64) -> Result<TrainOutput> {
    let mut errors = Vec::new();
    env_config.validate("env", &mut errors);
    config.validate("learner", &mut errors);
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let mut widths = vec![env_config.obs_width()];
    widths.extend(&config.hidden);
    widths.push(env_config.n_actions());
    let agent_cfg = config.agent_config(algorithm);
    let agents = (0..env_config.topology.n_uavs)
        .map(|k| {
            let mut init = seed::sub_rng(master_seed, Stream::Learner, k as u64 + 1);
            Agent::new(&widths, agent_cfg.clone(), &mut init)
        })
        .collect();
    let mut policy = Policy { agents };
    let mut explore = seed::rng(master_seed, Stream::Learner);
    let mut sampler = seed::sub_rng(master_seed, Stream::Learner, 0);
    let mut curve = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let beta = config.is_exponent(episode);
        let mut env = Env::new(env_config.clone(), episode_seed(master_seed, episode))?;
        let mut losses = Vec::new();
        run_episode(&mut env, &mut policy, epsilon, &mut explore, |policy, acting| {
            for &idx in acting {
                let agent = &mut policy.agents[idx];
                match agent.train_step(beta, &mut sampler) {
                    Ok(Some(l)) => losses.push(l),
                    Ok(None) => {}
                    Err(Error::NonFiniteLoss { detail, .. }) => {
                        return Err(Error::NonFiniteLoss {
                            episode,
                            agent: idx,
                            detail,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        }, algorithm.shaped(), true)?;
        let metrics = env.metrics();
        let mean_loss = if losses.is_empty() {
            None
        } else {
            Some(losses.iter().sum::<f64>() / losses.len() as f64)
        };
        curve.push(CurvePoint {
            episode,
            algorithm,
            seed: master_seed,
            reward_sum: metrics.reward_sum,
            mean_loss,
            epsilon,
            metrics,
        });
    }
    Ok(TrainOutput { curve, policy })
}

/// Drive one episode. `learn` is called after every slot with the agents that
/// acted; transitions are stored only when `store` is set.
fn run_episode<R, F>(
    env: &mut Env,
    policy: &mut Policy,
    epsilon: f64,
    rng: &mut R,
    mut learn: F,
    shaped: bool,
    store: bool,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(&mut Policy, &BTreeSet<usize>) -> Result<()>,
{
    let mut pending: BTreeMap<usize, Pending> = BTreeMap::new();
    while !env.is_done() {
        let decisions = env.decisions();
        let mut actions = BTreeMap::new();
        let mut taken: BTreeMap<usize, Pending> = BTreeMap::new();
        let mut acting = BTreeSet::new();
        for dec in decisions {
            if let Some(p) = pending.remove(&dec.demand) {
                if store {
                    policy.agents[p.agent].remember(Transition {
                        obs: p.obs,
                        action: p.action,
                        reward: p.reward,
                        next_obs: dec.obs.clone(),
                        next_mask: dec.mask.clone(),
                        done: false,
                    });
                }
            }
            let idx = policy.index_for(Policy::ordinal(env, dec.agent));
            if let Some(a) = policy.agents[idx].act(&dec.obs, &dec.mask, epsilon, rng)? {
                actions.insert(dec.demand, a);
                acting.insert(idx);
                taken.insert(
                    dec.demand,
                    Pending {
                        agent: idx,
                        obs: dec.obs,
                        action: a,
                        reward: 0.0,
                    },
                );
            }
        }
        let out = env.step(&actions)?;
        for hop in &out.hops {
            if let Some(mut p) = taken.remove(&hop.demand) {
                p.reward = if shaped { hop.shaped_reward } else { hop.reward };
                pending.insert(hop.demand, p);
            }
        }
        // acted on but not moved: zero reward, completed by the next decision
        pending.extend(taken);
        let finished: Vec<usize> = pending
            .keys()
            .copied()
            .filter(|&r| env.demands()[r].status != DemandStatus::InFlight)
            .collect();
        for r in finished {
            if let Some(p) = pending.remove(&r) {
                if store {
                    let width = p.obs.len();
                    let n_actions = env.config.n_actions();
                    policy.agents[p.agent].remember(Transition {
                        obs: p.obs,
                        action: p.action,
                        reward: p.reward,
                        next_obs: vec![0.0; width],
                        next_mask: vec![false; n_actions],
                        done: true,
                    });
                }
            }
        }
        learn(policy, &acting)?;
    }
    Ok(())
}

/// Greedy (ε = 0) rollout of a fixed policy. Returns the finished env so the
/// caller can read its trace.
pub fn evaluate(policy: &Policy, env_config: &EnvConfig, seed: u64) -> Result<Env> {
    let env = Env::new(env_config.clone(), seed)?;
    rollout(policy, env, seed)
}

/// As [`evaluate`], also recording node positions every slot.
pub fn evaluate_recording(policy: &Policy, env_config: &EnvConfig, seed: u64) -> Result<Env> {
    let mut env = Env::new(env_config.clone(), seed)?;
    env.record_positions = true;
    env.reset()?;
    rollout(policy, env, seed)
}

fn rollout(policy: &Policy, mut env: Env, seed: u64) -> Result<Env> {
    let mut policy = policy.clone();
    // ε = 0 never draws from the rng
    let mut rng = seed::rng(seed, Stream::Learner);
    run_episode(&mut env, &mut policy, 0.0, &mut rng, |_, _| Ok(()), false, false)?;
    Ok(env)
}

/// Mean of a slice, None when empty.
pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (EnvConfig, TrainConfig) {
        let mut env = EnvConfig::default();
        env.topology.n_uavs = 6;
        env.n_demands = 8;
        env.horizon_slots = 20;
        let train = TrainConfig {
            episodes: 6,
            hidden: vec![16],
            batch: 8,
            ..TrainConfig::default()
        };
        (env, train)
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let c = TrainConfig {
            episodes: 100,
            ..TrainConfig::default()
        };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(80) - 0.01).abs() < 1e-15);
        assert!((c.epsilon(40) - 0.505).abs() < 1e-12);
        assert_eq!(c.epsilon(99), c.epsilon(80));
    }

    #[test]
    fn algorithm_flags() {
        assert!(Algorithm::SpMaddqn.shaped() && Algorithm::SpMaddqn.prioritized() && Algorithm::SpMaddqn.double());
        assert!(!Algorithm::Madqn.shaped() && !Algorithm::Madqn.prioritized() && !Algorithm::Madqn.double());
        assert_eq!(Algorithm::parse("sp-maddqn"), Some(Algorithm::SpMaddqn));
    }

    #[test]
    fn training_is_deterministic() {
        let (env, train_cfg) = tiny();
        let a = train(&env, &train_cfg, Algorithm::SpMaddqn, 5).unwrap();
        let b = train(&env, &train_cfg, Algorithm::SpMaddqn, 5).unwrap();
        assert_eq!(a.curve, b.curve);
        assert!(a.curve.iter().any(|c| c.mean_loss.is_some()));
    }

    #[test]
    fn evaluation_runs_to_completion() {
        let (env, train_cfg) = tiny();
        let out = train(&env, &train_cfg, Algorithm::Madqn, 2).unwrap();
        let done = evaluate(&out.policy, &env, 77).unwrap();
        let m = done.metrics();
        assert_eq!(m.delivered + m.failed, m.n_total);
    }

    #[test]
    fn policy_reuses_same_class_agents() {
        let (env, train_cfg) = tiny();
        let mut cfg = train_cfg.clone();
        cfg.episodes = 1;
        let mut out = train(&env, &cfg, Algorithm::Madqn, 1).unwrap();
        out.policy.agents.truncate(5);
        for k in 0..20 {
            let i = out.policy.index_for(k);
            assert!(i < 5);
            assert_eq!(i % 3, k % 3);
        }
    }
}
