//! Binary checkpoints of trained agents.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SKYRCKPT"
//! version      u32      currently 1
//! n_agents     u32
//! per agent:
//!   n_widths   u32
//!   widths     u32 × n_widths       input first, output last
//!   steps      u64                  optimizer steps taken
//!   online     f64 × P              per layer: weights row-major (in × out), then biases
//!   target     f64 × P              same order
//!   opt_kind   u8                   0 = Adam, 1 = SGD
//!   lr, beta1, beta2, eps   f64 × 4
//!   t          u64
//!   n_moments  u64                  P for Adam, 0 for SGD
//!   m          f64 × n_moments
//!   v          f64 × n_moments
//! ```
//!
//! Replay buffers are not saved; a restored agent starts with an empty one.

use std::io::{Read, Write};
use std::path::Path;

use super::agent::{Agent, AgentConfig};
use super::mlp::Mlp;
use super::optim::{Optimizer, OptimizerKind};
use super::replay::{PrioritizedBuffer, ReplayBuffer, UniformBuffer};
use super::train::Policy;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SKYRCKPT";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(policy: &Policy) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, policy.agents.len() as u32);
    for a in &policy.agents {
        let widths = a.online.widths();
        put_u32(&mut out, widths.len() as u32);
        for w in widths {
            put_u32(&mut out, w as u32);
        }
        put_u64(&mut out, a.steps);
        put_f64s(&mut out, &a.online.flat_params());
        put_f64s(&mut out, &a.target.flat_params());
        let o = &a.optimizer;
        out.push(match o.kind {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        });
        put_f64s(&mut out, &[o.lr, o.beta1, o.beta2, o.eps]);
        put_u64(&mut out, o.t);
        put_u64(&mut out, o.m.len() as u64);
        put_f64s(&mut out, &o.m);
        put_f64s(&mut out, &o.v);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Rebuild a policy; `config` supplies the settings not stored on disk.
pub fn decode(bytes: &[u8], config: &AgentConfig) -> Result<Policy> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_agents = c.u32()? as usize;
    let mut agents = Vec::with_capacity(n_agents.min(4096));
    for _ in 0..n_agents {
        let n_widths = c.u32()? as usize;
        if n_widths < 2 {
            return Err(Error::Checkpoint(format!("network needs 2+ widths, got {n_widths}")));
        }
        let widths = (0..n_widths)
            .map(|_| c.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let steps = c.u64()?;
        let mut online = Mlp::zeros(&widths);
        let p = online.param_count();
        online.set_flat_params(&c.f64s(p)?)?;
        let mut target = Mlp::zeros(&widths);
        target.set_flat_params(&c.f64s(p)?)?;
        let kind = match c.u8()? {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Sgd,
            k => return Err(Error::Checkpoint(format!("unknown optimizer kind {k}"))),
        };
        let h = c.f64s(4)?;
        let t = c.u64()?;
        let n_m = c.u64()? as usize;
        if n_m != 0 && n_m != p {
            return Err(Error::Checkpoint(format!("moment length {n_m} does not match {p} parameters")));
        }
        let m = c.f64s(n_m)?;
        let v = c.f64s(n_m)?;
        let optimizer = Optimizer {
            kind,
            lr: h[0],
            beta1: h[1],
            beta2: h[2],
            eps: h[3],
            t,
            m,
            v,
        };
        let buffer = if config.prioritized {
            ReplayBuffer::Prioritized(PrioritizedBuffer::new(config.capacity, config.priority_exponent))
        } else {
            ReplayBuffer::Uniform(UniformBuffer::new(config.capacity))
        };
        agents.push(Agent {
            online,
            target,
            optimizer,
            buffer,
            config: config.clone(),
            steps,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(Policy { agents })
}

pub fn save(policy: &Policy, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&encode(policy))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: &Path, config: &AgentConfig) -> Result<Policy> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = Agent::new(&[3, 5, 2], AgentConfig::default(), &mut rng);
        a.optimizer.t = 7;
        a.optimizer.m[0] = 0.25;
        a.steps = 7;
        let b = Agent::new(&[3, 4, 4, 2], AgentConfig::default(), &mut rng);
        Policy { agents: vec![a, b] }
    }

    #[test]
    fn round_trip_is_exact() {
        let p = policy();
        let bytes = encode(&p);
        let q = decode(&bytes, &AgentConfig::default()).unwrap();
        for (a, b) in p.agents.iter().zip(&q.agents) {
            assert_eq!(a.online, b.online);
            assert_eq!(a.target, b.target);
            assert_eq!(a.optimizer, b.optimizer);
            assert_eq!(a.steps, b.steps);
        }
        assert_eq!(encode(&q), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&policy());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode(&policy());
        let cfg = AgentConfig::default();
        assert!(matches!(decode(&bytes[..bytes.len() - 1], &cfg), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, &cfg), Err(Error::Checkpoint(_))));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode(&v2, &cfg), Err(Error::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode(&extra, &cfg), Err(Error::Checkpoint(_))));
    }
}
