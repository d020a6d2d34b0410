use super::linalg::solve_policy_system;
use super::{Horizon, OccupancyMeasure, Policy, TabularMdp};
use crate::error::{Error, Result};
use crate::table::{ActionMask, SaTable, ScalarReward};

const BELLMAN_TOL: f64 = 1e-10;
const MAX_VALUE_ITERATIONS: usize = 200_000;
const MAX_POLICY_ITERATIONS: usize = 64;
const ZERO_MASS: f64 = 1e-12;

/// Optimal deterministic policy of an MDP together with its exact occupancy measure.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub occupancy: OccupancyMeasure,
    /// Optimal expected cumulative reward from the initial distribution.
    pub value: f64,
    /// Optimal value per state (0 on terminal states).
    pub state_values: Vec<f64>,
    /// Greedy action per state; arbitrary (action 0) on terminal states.
    pub actions: Vec<usize>,
}

impl ExactSolution {
    pub fn policy(&self, num_actions: usize) -> Policy {
        Policy::deterministic(self.actions.len(), num_actions, &self.actions)
    }
}

pub(crate) fn check_reward(mdp: &TabularMdp, reward: &ScalarReward) -> Result<()> {
    reward.check_shape("reward", mdp.num_states(), mdp.num_actions())?;
    if !reward.is_finite() {
        return Err(Error::NonFinite("reward"));
    }
    Ok(())
}

/// `Q(s,a) = reward(s,a) + γ_eff Σ_{s'} P(s'|s,a) V(s')`; zero on terminal states.
pub fn q_values(mdp: &TabularMdp, reward: &ScalarReward, state_values: &[f64]) -> SaTable {
    let gamma = mdp.gamma_eff();
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        if mdp.is_terminal(s) {
            return 0.0;
        }
        let cont: f64 = mdp
            .successors(s, a)
            .iter()
            .map(|&(s2, p)| p * state_values[s2])
            .sum();
        reward.get(s, a) + gamma * cont
    })
}

#[inline]
fn q_at(mdp: &TabularMdp, reward: &ScalarReward, values: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
    let cont: f64 = mdp
        .successors(s, a)
        .iter()
        .map(|&(s2, p)| p * values[s2])
        .sum();
    reward.get(s, a) + gamma * cont
}

#[inline]
fn allowed(mask: Option<&ActionMask>, s: usize, a: usize) -> bool {
    mask.map_or(true, |m| m.allows(s, a))
}

/// Solves `max_ν reward · ν` over the occupancy polytope.
///
/// Episodic MDPs use backward induction over the time layers; discounted MDPs use value
/// iteration to a sup-norm Bellman residual of 1e-10 followed by policy iteration with exact
/// linear policy evaluation. Ties resolve to the lowest action index.
pub fn solve_exact(mdp: &TabularMdp, reward: &ScalarReward) -> Result<ExactSolution> {
    solve_exact_masked(mdp, reward, None)
}

/// [`solve_exact`] restricted to the actions allowed by `mask`.
pub fn solve_exact_masked(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
) -> Result<ExactSolution> {
    check_reward(mdp, reward)?;
    if let Some(m) = mask {
        mdp.check_mask(m)?;
    }
    let (state_values, actions) = match mdp.horizon() {
        Horizon::Episodic { .. } => backward_induction(mdp, reward, mask),
        Horizon::Discounted { .. } => discounted_optimum(mdp, reward, mask)?,
    };
    let policy = Policy::deterministic(mdp.num_states(), mdp.num_actions(), &actions);
    let occupancy = occupancy_of_policy(mdp, &policy)?;
    let value = mdp
        .initial()
        .iter()
        .zip(&state_values)
        .map(|(p, v)| p * v)
        .sum();
    Ok(ExactSolution {
        occupancy,
        value,
        state_values,
        actions,
    })
}

fn backward_induction(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
) -> (Vec<f64>, Vec<usize>) {
    let mut values = vec![0.0; mdp.num_states()];
    let mut actions = vec![0; mdp.num_states()];
    for layer in mdp.decision_layers().iter().rev() {
        for &s in layer {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = usize::MAX;
            for a in 0..mdp.num_actions() {
                if !allowed(mask, s, a) {
                    continue;
                }
                let q = q_at(mdp, reward, &values, 1.0, s, a);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            values[s] = best;
            actions[s] = best_a;
        }
    }
    (values, actions)
}

fn greedy_action(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    values: &[f64],
    mask: Option<&ActionMask>,
    s: usize,
    abs_tol: f64,
) -> usize {
    let gamma = mdp.gamma_eff();
    let qs: Vec<(usize, f64)> = (0..mdp.num_actions())
        .filter(|&a| allowed(mask, s, a))
        .map(|a| (a, q_at(mdp, reward, values, gamma, s, a)))
        .collect();
    let best = qs.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
    let tol = abs_tol * (1.0 + best.abs());
    qs.iter()
        .find(|&&(_, q)| q >= best - tol)
        .map(|&(a, _)| a)
        .expect("mask validated to leave an action")
}

fn discounted_optimum(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = mdp.num_states();
    let gamma = mdp.gamma_eff();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_VALUE_ITERATIONS {
        let mut residual: f64 = 0.0;
        for s in 0..n {
            let v = (0..mdp.num_actions())
                .filter(|&a| allowed(mask, s, a))
                .map(|a| q_at(mdp, reward, &values, gamma, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= BELLMAN_TOL {
            break;
        }
    }

    // Value iteration leaves V within ~tol/(1-γ); polish with exact policy iteration.
    let mut actions: Vec<usize> = (0..n)
        .map(|s| greedy_action(mdp, reward, &values, mask, s, 1e-9))
        .collect();
    for _ in 0..MAX_POLICY_ITERATIONS {
        let policy = Policy::deterministic(n, mdp.num_actions(), &actions);
        values = policy_state_values(mdp, &policy, reward)?;
        let improved: Vec<usize> = (0..n)
            .map(|s| greedy_action(mdp, reward, &values, mask, s, 1e-12))
            .collect();
        if improved == actions {
            break;
        }
        actions = improved;
    }
    Ok((values, actions))
}

/// Per-state visitation mass `d(s) = Σ_a ν(s,a)` under `policy`.
pub fn state_distribution(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    policy
        .probs
        .check_shape("policy", mdp.num_states(), mdp.num_actions())?;
    match mdp.horizon() {
        Horizon::Episodic { .. } => {
            let mut mass = mdp.initial().to_vec();
            for layer in mdp.decision_layers() {
                for &s in layer {
                    let ds = mass[s];
                    if ds == 0.0 {
                        continue;
                    }
                    for a in 0..mdp.num_actions() {
                        let pa = policy.prob(s, a);
                        if pa == 0.0 {
                            continue;
                        }
                        for &(s2, p) in mdp.successors(s, a) {
                            mass[s2] += ds * pa * p;
                        }
                    }
                }
            }
            for (s, m) in mass.iter_mut().enumerate() {
                if mdp.is_terminal(s) {
                    *m = 0.0;
                }
            }
            Ok(mass)
        }
        Horizon::Discounted { .. } => solve_policy_system(mdp, policy, true, mdp.initial()),
    }
}

/// Exact occupancy measure `ν(s,a) = d(s) π(a|s)` of a (possibly stochastic) policy.
pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    let mass = state_distribution(mdp, policy)?;
    let nu = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        mass[s] * policy.prob(s, a)
    });
    Ok(OccupancyMeasure { nu })
}

/// Exact value `V^π(s)` of a policy for every state (0 on terminal states).
pub fn policy_state_values(mdp: &TabularMdp, policy: &Policy, reward: &ScalarReward) -> Result<Vec<f64>> {
    check_reward(mdp, reward)?;
    let n = mdp.num_states();
    let expected_reward: Vec<f64> = (0..n)
        .map(|s| {
            (0..mdp.num_actions())
                .map(|a| policy.prob(s, a) * reward.get(s, a))
                .sum()
        })
        .collect();
    match mdp.horizon() {
        Horizon::Episodic { .. } => {
            let mut values = vec![0.0; n];
            for layer in mdp.decision_layers().iter().rev() {
                for &s in layer {
                    let mut v = expected_reward[s];
                    for a in 0..mdp.num_actions() {
                        let pa = policy.prob(s, a);
                        if pa == 0.0 {
                            continue;
                        }
                        for &(s2, p) in mdp.successors(s, a) {
                            v += pa * p * values[s2];
                        }
                    }
                    values[s] = v;
                }
            }
            Ok(values)
        }
        Horizon::Discounted { .. } => solve_policy_system(mdp, policy, false, &expected_reward),
    }
}

/// Expected cumulative reward of `policy`, computed as `reward · ν_π`.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy, reward: &ScalarReward) -> Result<f64> {
    check_reward(mdp, reward)?;
    let occ = occupancy_of_policy(mdp, policy)?;
    Ok(occ.nu.dot(reward))
}

/// Largest absolute violation of the flow constraints
/// `Σ_a ν(s,a) = μ0(s) + γ_eff Σ_{s',a'} P(s|s',a') ν(s',a')`.
///
/// Terminal states of an episodic MDP must carry no mass; their violation is `Σ_a ν(s,a)`.
pub fn occupancy_flow_residual(mdp: &TabularMdp, nu: &OccupancyMeasure) -> Result<f64> {
    nu.nu
        .check_shape("occupancy measure", mdp.num_states(), mdp.num_actions())?;
    let n = mdp.num_states();
    let gamma = mdp.gamma_eff();
    let mut inflow = mdp.initial().to_vec();
    for s in 0..n {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..mdp.num_actions() {
            let mass = nu.nu.get(s, a);
            for &(s2, p) in mdp.successors(s, a) {
                inflow[s2] += gamma * p * mass;
            }
        }
    }
    let residual = (0..n)
        .map(|s| {
            let out = nu.nu.row_sum(s);
            if mdp.is_terminal(s) {
                out.abs()
            } else {
                (out - inflow[s]).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(residual)
}

/// `π(a|s) = ν(s,a) / Σ_a ν(s,a)`, uniform on states with no mass.
pub fn policy_from_occupancy(nu: &OccupancyMeasure) -> Policy {
    let (ns, na) = nu.nu.shape();
    let mut probs = SaTable::zeros(ns, na);
    for s in 0..ns {
        let row = nu.nu.row(s);
        let total: f64 = row.iter().sum();
        let out = probs.row_mut(s);
        if total > ZERO_MASS {
            for (o, v) in out.iter_mut().zip(row) {
                *o = v / total;
            }
        } else {
            out.iter_mut().for_each(|o| *o = 1.0 / na as f64);
        }
    }
    Policy { probs }
}
