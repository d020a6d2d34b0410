//! Search over dynamic affine maximizer mechanisms (AMAs) on tabular MDPs.
//!
//! An AMA picks the policy maximizing `Σ_i w_i r_i(s,a) + b(s,a)` in expectation and charges
//! each agent its weighted externality, which makes truthful reporting a dominant strategy for
//! any fixed weights `w` and boosts `b`. The crate provides:
//!
//! * [`mdp`]: tabular MDPs and the exact inner solver (occupancy measures),
//! * [`regularized`]: the entropy-smoothed inner solver and its reverse-mode gradient,
//! * [`mechanism`]: allocation, payments, revenue and losses for one reward profile,
//! * [`env`]: sequential sales, dynamic task scheduling and gridworld benchmarks,
//! * [`optim`]: Sobol grid search, zeroth-order and first-order outer optimizers,
//! * [`audit`]: empirical incentive-compatibility and individual-rationality checks,
//! * [`experiment`]: config-driven runs, result records and baseline comparison.

pub mod audit;
pub mod env;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod mechanism;
pub mod optim;
pub mod regularized;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use table::{ActionMask, SaTable, ScalarReward};
