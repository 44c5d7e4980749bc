//! Constrained evolutionary reinforcement learning.
//!
//! A population of tanh-Gaussian policies is ranked by stochastic ranking on
//! reward and constraint penalty, each actor tagging its experience with its
//! own Lagrange multiplier. A soft actor-critic learner trains on that shared
//! experience with rewards reshaped as `r - lambda * c` and is periodically
//! copied back into the population.
//!
//! Module map:
//!
//! - [`config`]: flat `key = value` experiment configuration.
//! - [`env`]: the PointGoal and PendulumSwing tasks with their torque cost.
//! - [`net`]: MLPs with hand-written backprop, the policy and critics.
//! - [`buffers`]: replay, constraint and generational constraint stores.
//! - [`ea`]: penalty, stochastic ranking, variation and learner injection.
//! - [`learner`]: the SAC learner and its multiplier update.
//! - [`harness`]: the training loop, variants, run logs and the run matrix.
//! - [`checkpoint`]: the text checkpoint container.

pub mod buffers;
pub mod checkpoint;
pub mod config;
pub mod ea;
pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod multiplier;
pub mod net;

pub use config::Config;
pub use env::{Env, EnvKind, EvalResult, Transition};
pub use error::{Error, Result};
pub use harness::{train, RunLog, Trainer, Variant};
pub use multiplier::MultiplierState;
