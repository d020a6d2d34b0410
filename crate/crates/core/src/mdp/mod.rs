//! Tabular MDPs and their exact inner solver.
//!
//! Occupancy measures are the carrier for every expectation in the crate: a policy's
//! expected cumulative reward is always `reward · ν` with `ν` computed exactly, either by
//! forward propagation over the time layers (episodic) or by a direct linear solve of the
//! discounted flow system.

mod exact;
mod linalg;
mod model;

pub use exact::{
    evaluate_policy, occupancy_flow_residual, occupancy_of_policy, policy_from_occupancy,
    policy_state_values, q_values, solve_exact, solve_exact_masked, state_distribution,
    ExactSolution,
};
pub(crate) use linalg::solve_policy_system;
pub use model::{Horizon, TabularMdp};

use crate::table::SaTable;

/// Expected visitation mass per state-action pair.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    pub nu: SaTable,
}

impl OccupancyMeasure {
    pub fn state_mass(&self, s: usize) -> f64 {
        self.nu.row_sum(s)
    }

    pub fn total_mass(&self) -> f64 {
        self.nu.sum()
    }
}

/// Per-state action distribution; deterministic policies are one-hot rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub probs: SaTable,
}

impl Policy {
    pub fn deterministic(num_states: usize, num_actions: usize, actions: &[usize]) -> Self {
        Policy {
            probs: SaTable::from_fn(num_states, num_actions, |s, a| {
                if actions[s] == a {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            probs: SaTable::filled(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs.get(s, a)
    }

    /// Action with the largest probability at `s`, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        let row = self.probs.row(s);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }
}
