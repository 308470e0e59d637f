//! Secure routing simulator for mobile UAV networks: mobility and channel
//! physics, a recursive trust model, a lightweight consensus ledger, a
//! multi-agent routing environment and double-DQN learners.

pub mod channel;
pub mod env;
pub mod harness;
pub mod error;
pub mod learner;
pub mod ledger;
pub mod seed;
pub mod topology;
pub mod trust;

pub use error::{Error, Result};
