//! Double-DQN routing agents: value networks, optimizers, replay buffers,
//! the multi-agent training loop and checkpoints.

pub mod agent;
pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod replay;
pub mod train;

pub use agent::{Agent, AgentConfig};
pub use train::{evaluate, train, Algorithm, CurvePoint, Policy, TrainConfig, TrainOutput};
