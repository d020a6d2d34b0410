//! Independent oracles shared by the integration suites.
//!
//! Nothing here calls the library solvers: policies are enumerated exhaustively, episodic
//! values come from forward mass propagation and discounted values from a hand-rolled
//! Gaussian elimination.

#![allow(dead_code)]

use dama_core::env::{DistributionSpec, EnvSpec, Environment};
use dama_core::mdp::{Horizon, TabularMdp};
use dama_core::mechanism::{AmaParams, MarginalEconomies, RewardProfile};
use dama_core::rng::stream;
use dama_core::{ActionMask, SaTable};
use rand::Rng;

/// Decision (non-terminal) states in index order.
pub fn decision_states(mdp: &TabularMdp) -> Vec<usize> {
    (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)).collect()
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    x
}

/// Occupancy measure of the deterministic policy `actions`, computed without the library.
pub fn occupancy_oracle(mdp: &TabularMdp, actions: &[usize]) -> SaTable {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut nu = SaTable::zeros(ns, na);
    match mdp.horizon() {
        Horizon::Episodic { horizon, .. } => {
            let mut mass = mdp.initial().to_vec();
            for _ in 0..*horizon {
                let mut next = vec![0.0; ns];
                for s in 0..ns {
                    if mass[s] == 0.0 || mdp.is_terminal(s) {
                        continue;
                    }
                    let a = actions[s];
                    nu[(s, a)] += mass[s];
                    for s2 in 0..ns {
                        next[s2] += mass[s] * mdp.prob(s, a, s2);
                    }
                }
                mass = next;
            }
        }
        Horizon::Discounted { gamma } => {
            // d = μ0 + γ P_πᵀ d
            let m: Vec<Vec<f64>> = (0..ns)
                .map(|s2| {
                    (0..ns)
                        .map(|s| {
                            let id = if s == s2 { 1.0 } else { 0.0 };
                            id - gamma * mdp.prob(s, actions[s], s2)
                        })
                        .collect()
                })
                .collect();
            let d = gauss_solve(m, mdp.initial().to_vec());
            for s in 0..ns {
                nu[(s, actions[s])] = d[s];
            }
        }
    }
    nu
}

pub fn policy_value_oracle(mdp: &TabularMdp, actions: &[usize], reward: &SaTable) -> f64 {
    occupancy_oracle(mdp, actions).dot(reward)
}

/// Best value over every deterministic Markov policy allowed by `mask`, plus the maximizer
/// found first in odometer order.
pub fn brute_force_optimum(mdp: &TabularMdp, reward: &SaTable, mask: Option<&ActionMask>) -> (f64, Vec<usize>) {
    let decision = decision_states(mdp);
    let choices: Vec<Vec<usize>> = decision
        .iter()
        .map(|&s| {
            (0..mdp.num_actions())
                .filter(|&a| mask.map_or(true, |m| m.allows(s, a)))
                .collect()
        })
        .collect();
    let mut digits = vec![0usize; decision.len()];
    let mut actions = vec![0usize; mdp.num_states()];
    let mut best = (f64::NEG_INFINITY, actions.clone());
    loop {
        for (k, &s) in decision.iter().enumerate() {
            actions[s] = choices[k][digits[k]];
        }
        let v = policy_value_oracle(mdp, &actions, reward);
        if v > best.0 {
            best = (v, actions.clone());
        }
        let mut k = 0;
        while k < digits.len() {
            digits[k] += 1;
            if digits[k] < choices[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == digits.len() {
            return best;
        }
    }
}

/// Random layered MDP with `widths[t]` states in layer `t` and a terminal last layer.
pub fn random_episodic<R: Rng>(rng: &mut R, widths: &[usize], num_actions: usize) -> TabularMdp {
    let horizon = widths.len() - 1;
    let mut state_layer = Vec::new();
    let mut offsets = vec![0];
    for (t, &w) in widths.iter().enumerate() {
        state_layer.extend(std::iter::repeat(t).take(w));
        offsets.push(offsets[t] + w);
    }
    let ns = state_layer.len();
    let mut successors = Vec::with_capacity(ns * num_actions);
    for s in 0..ns {
        let t = state_layer[s];
        for _ in 0..num_actions {
            if t == horizon {
                successors.push(vec![(s, 1.0)]);
            } else {
                let targets: Vec<usize> = (offsets[t + 1]..offsets[t + 2]).collect();
                successors.push(random_row(rng, &targets));
            }
        }
    }
    let mut initial = vec![0.0; ns];
    let first: Vec<usize> = (0..widths[0]).collect();
    for (s, p) in random_row(rng, &first) {
        initial[s] = p;
    }
    TabularMdp::from_successors(ns, num_actions, successors, initial, Horizon::Episodic { horizon, state_layer })
        .expect("random layered MDP is valid")
}

pub fn random_discounted<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize, gamma: f64) -> TabularMdp {
    let all: Vec<usize> = (0..num_states).collect();
    let successors = (0..num_states * num_actions).map(|_| random_row(rng, &all)).collect();
    let mut initial = vec![0.0; num_states];
    for (s, p) in random_row(rng, &all) {
        initial[s] = p;
    }
    TabularMdp::from_successors(num_states, num_actions, successors, initial, Horizon::Discounted { gamma })
        .expect("random discounted MDP is valid")
}

/// Sparse random distribution over a subset of `targets` (one or two successors).
fn random_row<R: Rng>(rng: &mut R, targets: &[usize]) -> Vec<(usize, f64)> {
    let a = targets[rng.gen_range(0..targets.len())];
    let b = targets[rng.gen_range(0..targets.len())];
    if a == b || rng.gen_bool(0.3) {
        return vec![(a, 1.0)];
    }
    let p: f64 = rng.gen_range(0.1..0.9);
    vec![(a, p), (b, 1.0 - p)]
}

pub fn random_table<R: Rng>(rng: &mut R, ns: usize, na: usize, lo: f64, hi: f64) -> SaTable {
    SaTable::from_fn(ns, na, |_, _| rng.gen_range(lo..hi))
}

pub struct Instance {
    pub label: String,
    pub mdp: TabularMdp,
    pub marginals: MarginalEconomies,
    pub profile: RewardProfile,
}

pub fn random_instances() -> Vec<Instance> {
    let mut out = Vec::new();
    for k in 0..20u64 {
        let mut rng = stream(101, &[k]);
        let horizon = rng.gen_range(1..=3);
        let widths: Vec<usize> = (0..=horizon).map(|_| rng.gen_range(1..=3)).collect();
        let na = rng.gen_range(2..=3);
        let mdp = random_episodic(&mut rng, &widths, na);
        let n = rng.gen_range(1..=3);
        let profile = RewardProfile::new(
            (0..n).map(|_| random_table(&mut rng, mdp.num_states(), na, -1.0, 1.0)).collect(),
        )
        .unwrap();
        out.push(Instance {
            label: format!("episodic #{k}"),
            mdp,
            marginals: MarginalEconomies::unrestricted(n),
            profile,
        });
    }
    for k in 0..15u64 {
        let mut rng = stream(202, &[k]);
        let ns = rng.gen_range(2..=5);
        let na = rng.gen_range(2..=3);
        let gamma = rng.gen_range(0.5..0.95);
        let mdp = random_discounted(&mut rng, ns, na, gamma);
        let n = rng.gen_range(1..=2);
        let profile =
            RewardProfile::new((0..n).map(|_| random_table(&mut rng, ns, na, 0.0, 1.0)).collect()).unwrap();
        out.push(Instance {
            label: format!("discounted #{k}"),
            mdp,
            marginals: MarginalEconomies::unrestricted(n),
            profile,
        });
    }
    out
}

pub fn environment_instances() -> Vec<Instance> {
    let unit = DistributionSpec::UniformSymmetric { lo: 0.0, hi: 1.0 };
    let envs = [
        (EnvSpec::SequentialSales { n: 2, m: 2 }, unit.clone()),
        (EnvSpec::SequentialSales { n: 3, m: 2 }, unit.clone()),
        (EnvSpec::TaskScheduling { n: 2, tasks: 3 }, DistributionSpec::UniformSymmetric { lo: 0.0, hi: 3.0 }),
        (EnvSpec::Gridworld { side: 2, n: 2, gamma: 0.9, start: [0, 0] }, DistributionSpec::GridworldGoal),
        (EnvSpec::Gridworld { side: 3, n: 1, gamma: 0.8, start: [1, 1] }, DistributionSpec::GridworldGoal),
    ];
    let mut out = Vec::new();
    for (e, (spec, dist)) in envs.iter().enumerate() {
        let env = Environment::new(spec, dist).unwrap();
        for k in 0..3u64 {
            let mut rng = stream(303, &[e as u64, k]);
            let sample = env.sample(&mut rng).unwrap();
            out.push(Instance {
                label: format!("{} #{k}", spec.name()),
                mdp: env.mdp().clone(),
                marginals: env.marginals().clone(),
                profile: sample.profile,
            });
        }
    }
    out
}

/// The 50 brute-force instances: random layered, random discounted and environment MDPs.
pub fn all_instances() -> Vec<Instance> {
    let mut v = random_instances();
    v.extend(environment_instances());
    assert_eq!(v.len(), 50);
    for inst in &v {
        assert!(inst.mdp.num_states() * inst.mdp.num_actions() <= 200, "{}", inst.label);
    }
    v
}

pub fn instance_params(inst: &Instance, seed: u64) -> AmaParams {
    let mut rng = stream(404, &[seed]);
    let (ns, na) = (inst.mdp.num_states(), inst.mdp.num_actions());
    let weights = (0..inst.profile.num_agents()).map(|_| rng.gen_range(0.5..1.5)).collect();
    AmaParams::new(weights, random_table(&mut rng, ns, na, -0.3, 0.3)).unwrap()
}
