//! Sequential sales of identical items to unit-demand bidders.

use crate::error::{Error, Result};
use crate::mdp::{Horizon, TabularMdp};
use crate::mechanism::RewardProfile;
use crate::table::SaTable;

const MAX_STATES: usize = 1 << 20;

/// One item per round; action `i < n` sells to bidder `i`, action `n` withholds.
///
/// States are `(round, set of bidders already served)`. Selling to a served bidder is legal and
/// worth nothing to anyone.
#[derive(Clone, Debug)]
pub struct SequentialSales {
    n: usize,
    m: usize,
    mdp: TabularMdp,
    states: Vec<(usize, u32)>,
}

pub fn build_sequential_sales(n: usize, m: usize) -> Result<SequentialSales> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidMdp(format!(
            "sequential sales needs n >= 1 and m >= 1, got n={n} m={m}"
        )));
    }
    if n > 20 {
        return Err(Error::InvalidMdp(format!("sequential sales supports at most 20 bidders, got {n}")));
    }
    let mut states = Vec::new();
    for t in 0..=m {
        for set in 0u32..(1 << n) {
            if set.count_ones() as usize <= t {
                states.push((t, set));
            }
            if states.len() > MAX_STATES {
                return Err(Error::InvalidMdp("sequential sales state space too large".into()));
            }
        }
    }
    let index = |t: usize, set: u32| {
        states
            .binary_search_by(|probe| probe.cmp(&(t, set)))
            .expect("successor is enumerated")
    };
    let na = n + 1;
    let mut successors = Vec::with_capacity(states.len() * na);
    let mut state_layer = Vec::with_capacity(states.len());
    for &(t, set) in &states {
        state_layer.push(t);
        for a in 0..na {
            let next = if t == m {
                (t, set)
            } else if a < n {
                (t + 1, set | (1 << a))
            } else {
                (t + 1, set)
            };
            successors.push(vec![(index(next.0, next.1), 1.0)]);
        }
    }
    let mut initial = vec![0.0; states.len()];
    initial[0] = 1.0;
    let mdp = TabularMdp::from_successors(
        states.len(),
        na,
        successors,
        initial,
        Horizon::Episodic { horizon: m, state_layer },
    )?;
    Ok(SequentialSales { n, m, mdp, states })
}

impl SequentialSales {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn num_bidders(&self) -> usize {
        self.n
    }

    pub fn num_rounds(&self) -> usize {
        self.m
    }

    pub fn withhold(&self) -> usize {
        self.n
    }

    /// `(round, served set as a bitmask)` of every state.
    pub fn states(&self) -> &[(usize, u32)] {
        &self.states
    }

    pub fn state_index(&self, round: usize, served: u32) -> Option<usize> {
        self.states.binary_search(&(round, served)).ok()
    }

    /// `r_i(s, sell-to-i) = v_i` while bidder `i` is unserved in a decision state, 0 elsewhere.
    pub fn encode(&self, values: &[f64]) -> Result<RewardProfile> {
        if values.len() != self.n {
            return Err(Error::shape("bidder values", self.n, values.len()));
        }
        let per_agent = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                SaTable::from_fn(self.states.len(), self.n + 1, |s, a| {
                    let (t, set) = self.states[s];
                    if a == i && t < self.m && set & (1 << i) == 0 {
                        v
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        RewardProfile::new(per_agent)
    }
}
