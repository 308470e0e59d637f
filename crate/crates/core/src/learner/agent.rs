//! One routing agent: online and target networks, optimizer and replay buffer.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{masked_argmax, masked_max, Grads, Mlp};
use super::optim::{Optimizer, OptimizerKind};
use super::replay::{PrioritizedBuffer, ReplayBuffer, Transition, UniformBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub lr: f64,
    pub gamma: f64,
    pub batch: usize,
    /// Optimizer steps between soft target updates.
    pub target_period: u64,
    pub mu: f64,
    pub capacity: usize,
    pub priority_exponent: f64,
    pub optimizer: OptimizerKind,
    /// Double-DQN target instead of the plain max target.
    pub double: bool,
    pub prioritized: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            gamma: 0.95,
            batch: 64,
            target_period: 100,
            mu: 0.01,
            capacity: 1_000_000,
            priority_exponent: 0.6,
            optimizer: OptimizerKind::Adam,
            double: true,
            prioritized: true,
        }
    }
}

/// Bootstrap target for one transition. A next state with no valid action is
/// treated as terminal.
pub fn td_target(
    reward: f64,
    done: bool,
    q_online_next: &[f64],
    q_target_next: &[f64],
    next_mask: &[bool],
    gamma: f64,
    double: bool,
) -> f64 {
    if done {
        return reward;
    }
    let boot = if double {
        masked_argmax(q_online_next, next_mask).map(|a| q_target_next[a])
    } else {
        masked_max(q_target_next, next_mask)
    };
    match boot {
        Some(q) => reward + gamma * q,
        None => reward,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Grads,
    /// y − Q(o, a) per sample.
    pub td_errors: Vec<f64>,
}

/// Importance-weighted mean squared TD error and its gradient.
pub fn loss_and_gradient(
    net: &Mlp,
    obs: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
    weights: &[f64],
) -> Result<LossOutput> {
    let (q, cache) = net.forward_cached(obs)?;
    let n = actions.len().max(1) as f64;
    let mut d_out = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    let mut td_errors = Vec::with_capacity(actions.len());
    for (i, (&a, (&y, &w))) in actions.iter().zip(targets.iter().zip(weights)).enumerate() {
        let err = y - q[[i, a]];
        loss += w * err * err;
        d_out[[i, a]] = -2.0 * w * err / n;
        td_errors.push(err);
    }
    let grads = net.backward(&cache, d_out);
    Ok(LossOutput {
        loss: loss / n,
        grads,
        td_errors,
    })
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Optimizer,
    pub buffer: ReplayBuffer,
    pub config: AgentConfig,
    /// Optimizer steps taken so far.
    pub steps: u64,
}

impl Agent {
    /// Fresh agent; the target starts as an exact copy of the online network.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], config: AgentConfig, rng: &mut R) -> Self {
        let online = Mlp::init(widths, rng);
        let target = online.clone();
        let optimizer = Optimizer::new(config.optimizer, config.lr, online.param_count());
        let buffer = if config.prioritized {
            ReplayBuffer::Prioritized(PrioritizedBuffer::new(config.capacity, config.priority_exponent))
        } else {
            ReplayBuffer::Uniform(UniformBuffer::new(config.capacity))
        };
        Self {
            online,
            target,
            optimizer,
            buffer,
            config,
            steps: 0,
        }
    }

    /// ε-greedy choice over the valid actions; None when nothing is valid.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> Result<Option<usize>> {
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if valid.is_empty() {
            return Ok(None);
        }
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(Some(valid[rng.random_range(0..valid.len())]));
        }
        let q = self.online.forward_one(obs)?;
        Ok(masked_argmax(&q, mask))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() > self.config.batch
    }

    /// One gradient step on a sampled batch. Returns the loss, or None when
    /// the buffer is not yet larger than a batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, is_exponent: f64, rng: &mut R) -> Result<Option<f64>> {
        if !self.ready() {
            return Ok(None);
        }
        let d = self.config.batch;
        let sample = self.buffer.sample(d, is_exponent, rng)?;
        let width = self.online.input_width();
        let mut obs = Array2::zeros((d, width));
        let mut next = Array2::zeros((d, width));
        let mut actions = Vec::with_capacity(d);
        for (row, &i) in sample.indices.iter().enumerate() {
            let t = self.buffer.get(i);
            if t.obs.len() != width || t.next_obs.len() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    got: t.obs.len().min(t.next_obs.len()),
                });
            }
            obs.row_mut(row).assign(&ndarray::ArrayView1::from(&t.obs));
            next.row_mut(row).assign(&ndarray::ArrayView1::from(&t.next_obs));
            actions.push(t.action);
        }
        let q_target_next = self.target.forward(next.view())?;
        let q_online_next = if self.config.double {
            Some(self.online.forward(next.view())?)
        } else {
            None
        };
        let targets: Vec<f64> = sample
            .indices
            .iter()
            .enumerate()
            .map(|(row, &i)| {
                let t = self.buffer.get(i);
                let tn = q_target_next.row(row).to_vec();
                let on = q_online_next.as_ref().map_or_else(|| tn.clone(), |q| q.row(row).to_vec());
                td_target(t.reward, t.done, &on, &tn, &t.next_mask, self.config.gamma, self.config.double)
            })
            .collect();
        let out = loss_and_gradient(&self.online, obs.view(), &actions, &targets, &sample.weights)?;
        if !out.loss.is_finite() || !out.grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                episode: 0,
                agent: 0,
                detail: format!("loss {} after {} steps", out.loss, self.steps),
            });
        }
        self.optimizer.step(&mut self.online, &out.grads);
        let priorities: Vec<f64> = out.td_errors.iter().map(|e| e.abs()).collect();
        self.buffer.update_priorities(&sample.indices, &priorities);
        self.steps += 1;
        if self.steps % self.config.target_period.max(1) == 0 {
            self.target.soft_update_from(&self.online, self.config.mu);
        }
        Ok(Some(out.loss))
    }
}
