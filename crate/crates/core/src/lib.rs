//! Adversarial communication in cooperative multi-agent reinforcement learning.
//!
//! The crate trains communicating agent teams in gridworld tasks, learns
//! message attackers and two-stage message-filter defenders, and runs a
//! double-oracle meta-game over the attack/defence populations to produce
//! robust mixed defender strategies.
//!
//! Module map:
//! - [`mlp`]: dense feed-forward nets with reverse-mode gradients and Adam.
//! - [`env`]: Predator-Prey and Traffic Junction environments.
//! - [`comm`]: message aggregation protocols, attack and filter insertion.
//! - [`team`]: the cooperative base team (action/message policies) and its
//!   PPO trainer.
//! - [`attack`]: the Gaussian message attacker and its PPO trainer.
//! - [`defense`]: the detector + reconstructor message filter and its trainer.
//! - [`metagame`]: zero-sum matrix game solving, utility estimation,
//!   best responses, and the population loop.
//! - [`harness`]: experiment manifests, the staged pipeline, and diagnostics.

pub mod attack;
pub mod comm;
pub mod defense;
pub mod env;
pub mod error;
pub mod harness;
pub mod metagame;
pub mod mlp;
pub mod ppo;
pub mod rng;
pub mod rollout;
pub mod team;

pub use error::{Error, Result};
