//! Multi-constraint PPO-Lagrangian with Bayesian adaptive priority gating,
//! plus a deterministic intersection simulator to train and evaluate it on.
//!
//! Module map:
//! - [`config`], [`rng`], [`types`]: configuration, seeded randomness and
//!   shared domain types.
//! - [`env`]: the intersection simulator with its reward and cost model.
//! - [`nn`]: shared-encoder actor-critic with hand-written backprop, Adam and
//!   checkpoints.
//! - [`bap`]: prior/likelihood log-odds, posterior gates and the gated
//!   advantage, plus the uniform and min-max weighting baselines.
//! - [`learner`]: GAE, rollout collection, PPO updates and dual ascent.
//! - [`evalkit`]: evaluation metrics and the gradient-conflict diagnostic.
//! - [`cli`]: the `train`, `eval`, `diagnose` and `ablate` commands.

pub mod bap;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod evalkit;
pub mod learner;
pub mod logs;
pub mod nn;
pub mod rng;
pub mod types;

pub use config::{Config, Maneuver, Strategy};
pub use error::{Error, Result};
pub use rng::{seeded_rng, RandomStream};
pub use types::{ActionVector, CostVector, HazardClass, LagrangeState, StateVector};
