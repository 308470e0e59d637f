//! Experience replay: a uniform ring buffer and a proportional prioritized
//! buffer backed by a sum tree.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_mask: Vec<bool>,
    /// No bootstrap from the next state (delivered or failed).
    pub done: bool,
}

/// Binary sum tree over up to `capacity` leaves. Storage is a power of two so
/// leaves appear left to right in index order, and it doubles on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    /// Power-of-two leaf count of the backing heap.
    leaves: usize,
    /// Implicit heap layout; leaves start at `leaves - 1`.
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let leaves = capacity.min(1024).next_power_of_two();
        Self {
            capacity,
            leaves,
            nodes: vec![0.0; 2 * leaves - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        if leaf >= self.leaves {
            return 0.0;
        }
        self.nodes[leaf + self.leaves - 1]
    }

    fn grow(&mut self, min_leaves: usize) {
        let leaves = min_leaves.next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves - 1];
        nodes[leaves - 1..leaves - 1 + self.leaves].copy_from_slice(&self.nodes[self.leaves - 1..]);
        for i in (0..leaves - 1).rev() {
            nodes[i] = nodes[2 * i + 1] + nodes[2 * i + 2];
        }
        self.leaves = leaves;
        self.nodes = nodes;
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} beyond capacity {}", self.capacity);
        if leaf >= self.leaves {
            self.grow(leaf + 1);
        }
        let mut i = leaf + self.leaves - 1;
        self.nodes[i] = value;
        while i > 0 {
            i = (i - 1) / 2;
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
        }
    }

    /// Leaf whose cumulative range contains `mass`, for mass in [0, total).
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 0;
        while i < self.leaves - 1 {
            let left = 2 * i + 1;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                i = left;
            } else {
                mass -= self.nodes[left];
                i = left + 1;
            }
        }
        (i - (self.leaves - 1)).min(self.capacity - 1)
    }

    /// Every internal node equals the sum of its children (within rounding).
    pub fn is_consistent(&self) -> bool {
        (0..self.leaves - 1).all(|i| {
            let s = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
            (self.nodes[i] - s).abs() <= 1e-9 * s.abs().max(1.0)
        })
    }
}

/// Oldest-first ring storage that grows lazily up to capacity.
#[derive(Debug, Clone, PartialEq)]
struct Ring {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl Ring {
    fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    /// Store and return the slot index used.
    fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        slot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBuffer {
    ring: Ring,
}

impl UniformBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            ring: Ring::new(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, t: Transition) {
        self.ring.push(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.ring.items[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Sample> {
        if self.is_empty() || batch > self.len() {
            return Err(Error::InsufficientSamples {
                requested: batch,
                stored: self.len(),
            });
        }
        let indices = (0..batch).map(|_| rng.random_range(0..self.len())).collect();
        Ok(Sample {
            indices,
            weights: vec![1.0; batch],
        })
    }
}

pub const PRIORITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedBuffer {
    ring: Ring,
    tree: SumTree,
    /// Priority exponent applied when priorities are written.
    pub alpha: f64,
    max_priority: f64,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        Self {
            ring: Ring::new(capacity),
            tree: SumTree::new(capacity.max(1)),
            alpha,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.ring.items[i]
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// New transitions enter at the current maximum priority.
    pub fn push(&mut self, t: Transition) {
        let slot = self.ring.push(t);
        self.tree.set(slot, self.max_priority.powf(self.alpha));
    }

    /// Set raw priorities (e.g. |TD error|) for stored transitions.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        for (&i, &p) in indices.iter().zip(priorities) {
            let p = if p.is_finite() { p.max(PRIORITY_FLOOR) } else { PRIORITY_FLOOR };
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }

    /// Proportional sampling with importance weights (N·P(i))^−β scaled by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, is_exponent: f64, rng: &mut R) -> Result<Sample> {
        if self.is_empty() || batch > self.len() {
            return Err(Error::InsufficientSamples {
                requested: batch,
                stored: self.len(),
            });
        }
        let total = self.tree.total();
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mass = rng.random::<f64>() * total;
            let i = self.tree.find(mass).min(self.len() - 1);
            let p = self.tree.get(i) / total;
            indices.push(i);
            weights.push((n * p).powf(-is_exponent));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 {
            weights.iter_mut().for_each(|w| *w /= max_w);
        }
        Ok(Sample { indices, weights })
    }
}

/// Either buffer kind behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayBuffer {
    Uniform(UniformBuffer),
    Prioritized(PrioritizedBuffer),
}

impl ReplayBuffer {
    pub fn len(&self) -> usize {
        match self {
            ReplayBuffer::Uniform(b) => b.len(),
            ReplayBuffer::Prioritized(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, t: Transition) {
        match self {
            ReplayBuffer::Uniform(b) => b.push(t),
            ReplayBuffer::Prioritized(b) => b.push(t),
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        match self {
            ReplayBuffer::Uniform(b) => b.get(i),
            ReplayBuffer::Prioritized(b) => b.get(i),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, is_exponent: f64, rng: &mut R) -> Result<Sample> {
        match self {
            ReplayBuffer::Uniform(b) => b.sample(batch, rng),
            ReplayBuffer::Prioritized(b) => b.sample(batch, is_exponent, rng),
        }
    }

    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        if let ReplayBuffer::Prioritized(b) = self {
            b.update_priorities(indices, priorities);
        }
    }
}
