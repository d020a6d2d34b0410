//! Exact solver and payment rule against exhaustive policy enumeration.

mod common;

use common::*;
use dama_core::env::{DistributionSpec, EnvSpec, Environment};
use dama_core::mdp::{occupancy_flow_residual, solve_exact, solve_exact_masked};
use dama_core::mechanism::{run_ama_with, AmaParams};
use dama_core::rng::stream;
use dama_core::SaTable;

const TOL: f64 = 1e-9;

#[test]
fn solve_exact_matches_policy_enumeration() {
    for (k, inst) in all_instances().iter().enumerate() {
        let reward = random_table(&mut stream(505, &[k as u64]), inst.mdp.num_states(), inst.mdp.num_actions(), -1.0, 1.0);
        let sol = solve_exact(&inst.mdp, &reward).unwrap();
        let (brute, _) = brute_force_optimum(&inst.mdp, &reward, None);
        assert!((sol.value - brute).abs() <= TOL, "{}: solver {} vs brute force {}", inst.label, sol.value, brute);
        // The returned occupancy belongs to the returned policy and attains the value.
        let nu = occupancy_oracle(&inst.mdp, &sol.actions);
        assert!(sol.occupancy.nu.max_abs_diff(&nu) <= TOL, "{}", inst.label);
        assert!((sol.occupancy.nu.dot(&reward) - sol.value).abs() <= TOL, "{}", inst.label);
        assert!(occupancy_flow_residual(&inst.mdp, &sol.occupancy).unwrap() <= TOL, "{}", inst.label);
    }
}

#[test]
fn masked_solver_matches_restricted_enumeration() {
    let env = Environment::new(
        &EnvSpec::TaskScheduling { n: 3, tasks: 2 },
        &DistributionSpec::UniformSymmetric { lo: 0.0, hi: 3.0 },
    )
    .unwrap();
    let mdp = env.mdp();
    for i in 0..3 {
        let mask = env.marginals().mask(i).expect("task scheduling restricts marginals");
        let reward = random_table(&mut stream(606, &[i as u64]), mdp.num_states(), mdp.num_actions(), -1.0, 1.0);
        let sol = solve_exact_masked(mdp, &reward, Some(mask)).unwrap();
        let (brute, _) = brute_force_optimum(mdp, &reward, Some(mask));
        assert!((sol.value - brute).abs() <= TOL);
        for s in decision_states(mdp) {
            assert!(mask.allows(s, sol.actions[s]));
        }
    }
}

#[test]
fn payment_identity_holds_on_every_outcome() {
    for (k, inst) in all_instances().iter().enumerate() {
        for params in [instance_params(inst, k as u64), AmaParams::vcg(inst.profile.num_agents(), inst.mdp.num_states(), inst.mdp.num_actions())] {
            let out = run_ama_with(&inst.mdp, &inst.marginals, &params, &inst.profile).unwrap();
            let mut reward = params.boosts.clone();
            for (w, r) in params.weights.iter().zip(&inst.profile.per_agent) {
                reward.add_scaled(*w, r);
            }
            let (asw, _) = brute_force_optimum(&inst.mdp, &reward, None);
            assert!((out.asw - asw).abs() <= TOL, "{}: asw {} vs {}", inst.label, out.asw, asw);
            let mut paid = 0.0;
            for (i, (&w, r)) in params.weights.iter().zip(&inst.profile.per_agent).enumerate() {
                let mut without = reward.clone();
                without.add_scaled(-w, r);
                let (asw_minus, _) = brute_force_optimum(&inst.mdp, &without, inst.marginals.mask(i));
                assert!((out.asw_minus[i] - asw_minus).abs() <= TOL, "{}", inst.label);
                let v_i = policy_value_oracle(&inst.mdp, &out.actions, r);
                assert!((out.agent_values[i] - v_i).abs() <= TOL, "{}", inst.label);
                let p_i = (asw_minus - (asw - w * v_i)) / w;
                assert!((out.payments[i] - p_i).abs() <= TOL, "{}: p_{i} {} vs {}", inst.label, out.payments[i], p_i);
                let u_i = (asw - asw_minus) / w;
                assert!((out.utilities()[i] - u_i).abs() <= TOL, "{}", inst.label);
                paid += p_i;
            }
            assert!((out.revenue - paid).abs() <= TOL);
            assert!((out.revenue_by_decomposition(&params.weights) - out.revenue).abs() <= TOL);
        }
    }
}

#[test]
fn exhaustive_maximizer_is_optimal_under_solver_values() {
    // The enumeration maximizer, evaluated by the library, cannot beat the library optimum.
    let inst = &environment_instances()[4];
    let reward: SaTable = inst.profile.total();
    let (_, actions) = brute_force_optimum(&inst.mdp, &reward, None);
    let policy = dama_core::mdp::Policy::deterministic(inst.mdp.num_states(), inst.mdp.num_actions(), &actions);
    let v = dama_core::mdp::evaluate_policy(&inst.mdp, &policy, &reward).unwrap();
    let best = solve_exact(&inst.mdp, &reward).unwrap().value;
    assert!(v <= best + TOL);
    assert!((v - best).abs() <= TOL);
}
