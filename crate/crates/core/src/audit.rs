//! Adversarial misreport sampling for incentive compatibility and individual rationality.
//!
//! A misreport replaces one agent's reported reward table. The deviating utility evaluates the
//! agent's true rewards along the policy chosen for the misreported profile and subtracts the
//! payment charged under that profile.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Sample};
use crate::error::{Error, Result};
use crate::mdp::{q_values, solve_exact_masked, TabularMdp};
use crate::mechanism::{affine_reward, run_ama_with, AmaParams, MarginalEconomies, MechanismOutcome, RewardProfile};
use crate::rng::{stream, tag, StreamRng};
use crate::table::SaTable;

/// Largest utility gain or IR shortfall accepted as numerical noise.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MisreportStrategy {
    /// Fresh draw from the agent's marginal type distribution.
    Resample,
    Scale { factor: f64 },
    ZeroReport,
    /// Gaussian noise on every decision-state entry.
    PerturbGaussian { sigma: f64 },
    /// Every decision-state entry shifted, one at a time, by each offset.
    ExhaustiveGrid { offsets: Vec<f64> },
}

impl MisreportStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            MisreportStrategy::Scale { factor } if !(*factor > 0.0 && factor.is_finite()) => {
                Err(Error::InvalidParams(format!("scale factor must be positive, got {factor}")))
            }
            MisreportStrategy::PerturbGaussian { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParams(format!("perturbation sigma must be positive, got {sigma}")))
            }
            MisreportStrategy::ExhaustiveGrid { offsets } if offsets.iter().any(|o| !o.is_finite()) => {
                Err(Error::NonFinite("grid offsets"))
            }
            _ => Ok(()),
        }
    }

    /// Misreports of `agent` generated from the true sample.
    pub fn misreports(&self, env: &Environment, sample: &Sample, agent: usize, rng: &mut StreamRng) -> Result<Vec<SaTable>> {
        let truth = &sample.profile.per_agent[agent];
        let mdp = env.mdp();
        let decision = |s: usize| !mdp.is_terminal(s);
        Ok(match self {
            MisreportStrategy::Resample => {
                let mut types = sample.types.clone();
                types[agent] = env.sample_agent(agent, rng);
                vec![env.encode(types)?.profile.per_agent.swap_remove(agent)]
            }
            MisreportStrategy::Scale { factor } => vec![truth.scaled(*factor)],
            MisreportStrategy::ZeroReport => vec![SaTable::zeros(mdp.num_states(), mdp.num_actions())],
            MisreportStrategy::PerturbGaussian { sigma } => {
                let mut r = truth.clone();
                for s in (0..mdp.num_states()).filter(|&s| decision(s)) {
                    for v in r.row_mut(s) {
                        *v += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                vec![r]
            }
            MisreportStrategy::ExhaustiveGrid { offsets } => {
                let mut out = Vec::new();
                for s in (0..mdp.num_states()).filter(|&s| decision(s)) {
                    for a in 0..mdp.num_actions() {
                        for o in offsets {
                            let mut r = truth.clone();
                            r[(s, a)] += o;
                            out.push(r);
                        }
                    }
                }
                out
            }
        })
    }
}

/// Utility gain `u_i(r_i, r̃_i) − u_i(r_i, r_i)` of reporting `misreport` instead of the truth.
pub fn deviation_gain(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    truth: &RewardProfile,
    truthful: &MechanismOutcome,
    agent: usize,
    misreport: &SaTable,
) -> Result<f64> {
    let reported = truth.with_agent(agent, misreport.clone());
    let dev = run_ama_with(mdp, marginals, params, &reported)?;
    let true_value = dev.occupancy.nu.dot(&truth.per_agent[agent]);
    let deviating = true_value - dev.payments[agent];
    let truthful_utility = truthful.agent_values[agent] - truthful.payments[agent];
    Ok(deviating - truthful_utility)
}

/// Worst gain over the given `(agent, misreport)` pairs; `−∞` when there are none.
pub fn ic_audit<'a>(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    truth: &RewardProfile,
    misreports: impl IntoIterator<Item = (usize, &'a SaTable)>,
) -> Result<f64> {
    let truthful = run_ama_with(mdp, marginals, params, truth)?;
    let mut worst = f64::NEG_INFINITY;
    for (agent, r) in misreports {
        worst = worst.max(deviation_gain(mdp, marginals, params, truth, &truthful, agent, r)?);
    }
    Ok(worst)
}

/// Smallest truthful expected utility over the agents.
pub fn ir_audit(mdp: &TabularMdp, marginals: &MarginalEconomies, params: &AmaParams, profile: &RewardProfile) -> Result<f64> {
    let out = run_ama_with(mdp, marginals, params, profile)?;
    Ok(out.utilities().into_iter().fold(f64::INFINITY, f64::min))
}

fn near_tie_in(mdp: &TabularMdp, reward: &SaTable, mask: Option<&crate::table::ActionMask>, profile: &RewardProfile, tol: f64) -> Result<bool> {
    let sol = solve_exact_masked(mdp, reward, mask)?;
    let q = q_values(mdp, reward, &sol.state_values);
    let allowed = |s: usize, a: usize| mask.map_or(true, |m| m.allows(s, a));
    for s in 0..mdp.num_states() {
        if mdp.is_terminal(s) || sol.occupancy.state_mass(s) <= 0.0 {
            continue;
        }
        let best = sol.actions[s];
        for a in (0..mdp.num_actions()).filter(|&a| a != best && allowed(s, a)) {
            if q.get(s, best) - q.get(s, a) > tol * (1.0 + q.get(s, best).abs()) {
                continue;
            }
            let same_outcome = mdp.successors(s, a) == mdp.successors(s, best)
                && profile.per_agent.iter().all(|r| r.get(s, a) == r.get(s, best))
                && reward.get(s, a) == reward.get(s, best);
            if !same_outcome {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Whether the welfare maximization or any marginal economy has two distinct optimal choices
/// within `tol` of each other at a reachable state.
pub fn has_near_tie(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    profile: &RewardProfile,
    tol: f64,
) -> Result<bool> {
    let reward = affine_reward(params, profile)?;
    if near_tie_in(mdp, &reward, None, profile, tol)? {
        return Ok(true);
    }
    for (i, (&w, r)) in params.weights.iter().zip(&profile.per_agent).enumerate() {
        let mut without = reward.clone();
        without.add_scaled(-w, r);
        if near_tie_in(mdp, &without, marginals.mask(i), profile, tol)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub profiles: usize,
    pub strategies: Vec<MisreportStrategy>,
    /// Relative gap under which two affine welfares count as tied.
    pub tie_tol: f64,
    pub max_redraws: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            profiles: 100,
            strategies: vec![
                MisreportStrategy::Resample,
                MisreportStrategy::Resample,
                MisreportStrategy::Scale { factor: 0.5 },
                MisreportStrategy::Scale { factor: 1.5 },
                MisreportStrategy::ZeroReport,
                MisreportStrategy::PerturbGaussian { sigma: 0.1 },
            ],
            tie_tol: 1e-7,
            max_redraws: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub profiles: usize,
    pub misreports: u64,
    pub worst_gain: f64,
    pub min_utility: f64,
    /// Draws replaced because of a near tie.
    pub tied_draws: u64,
    /// Profiles kept despite a near tie after exhausting the redraws.
    pub tied_kept: u64,
    pub ic_passed: bool,
    pub ir_passed: bool,
}

struct ProfileAudit {
    misreports: u64,
    worst_gain: f64,
    min_utility: f64,
    tied_draws: u64,
    tied_kept: u64,
}

/// Audits `params` on the first `cfg.profiles` of `samples`, redrawing tied profiles from
/// per-profile streams derived from `seed`.
pub fn audit(env: &Environment, params: &AmaParams, samples: &[Sample], cfg: &AuditConfig, seed: u64) -> Result<AuditSummary> {
    for s in &cfg.strategies {
        s.validate()?;
    }
    let (mdp, marginals) = (env.mdp(), env.marginals());
    let count = cfg.profiles.min(samples.len());
    let parts = samples[..count]
        .par_iter()
        .enumerate()
        .map(|(k, first)| -> Result<ProfileAudit> {
            let mut rng = stream(seed, &[tag("audit"), k as u64]);
            let mut sample = first.clone();
            let mut tied_draws = 0;
            let mut tied_kept = 0;
            while has_near_tie(mdp, marginals, params, &sample.profile, cfg.tie_tol)? {
                if tied_draws as usize >= cfg.max_redraws {
                    tied_kept = 1;
                    break;
                }
                tied_draws += 1;
                sample = env.sample(&mut rng)?;
            }
            let mut reports = Vec::new();
            for agent in 0..env.num_agents() {
                for strategy in &cfg.strategies {
                    for r in strategy.misreports(env, &sample, agent, &mut rng)? {
                        reports.push((agent, r));
                    }
                }
            }
            let worst_gain = ic_audit(mdp, marginals, params, &sample.profile, reports.iter().map(|(a, r)| (*a, r)))?;
            let min_utility = ir_audit(mdp, marginals, params, &sample.profile)?;
            Ok(ProfileAudit {
                misreports: reports.len() as u64,
                worst_gain,
                min_utility,
                tied_draws,
                tied_kept,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = AuditSummary {
        profiles: count,
        misreports: 0,
        worst_gain: f64::NEG_INFINITY,
        min_utility: f64::INFINITY,
        tied_draws: 0,
        tied_kept: 0,
        ic_passed: true,
        ir_passed: true,
    };
    for p in parts {
        summary.misreports += p.misreports;
        summary.worst_gain = summary.worst_gain.max(p.worst_gain);
        summary.min_utility = summary.min_utility.min(p.min_utility);
        summary.tied_draws += p.tied_draws;
        summary.tied_kept += p.tied_kept;
    }
    summary.ic_passed = summary.worst_gain <= AUDIT_TOL;
    summary.ir_passed = summary.min_utility >= -AUDIT_TOL;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DistributionSpec, EnvSpec};

    fn sales() -> Environment {
        Environment::new(
            &EnvSpec::SequentialSales { n: 2, m: 1 },
            &DistributionSpec::UniformSymmetric { lo: 0.0, hi: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn truthful_report_gains_nothing() {
        let env = sales();
        let s = env.encode(vec![crate::env::AgentType::Value(0.8), crate::env::AgentType::Value(0.3)]).unwrap();
        let p = AmaParams::vcg(2, env.mdp().num_states(), 3);
        let truth = s.profile.per_agent[0].clone();
        let gain = ic_audit(env.mdp(), env.marginals(), &p, &s.profile, [(0, &truth)]).unwrap();
        assert_eq!(gain, 0.0);
    }

    #[test]
    fn winner_shading_bid_keeps_utility() {
        let env = sales();
        let s = env.encode(vec![crate::env::AgentType::Value(0.8), crate::env::AgentType::Value(0.3)]).unwrap();
        let p = AmaParams::vcg(2, env.mdp().num_states(), 3);
        let shaded = s.profile.per_agent[0].scaled(0.5 / 0.8);
        let gain = ic_audit(env.mdp(), env.marginals(), &p, &s.profile, [(0, &shaded)]).unwrap();
        assert!(gain.abs() < 1e-15);
        let u = run_ama_with(env.mdp(), env.marginals(), &p, &s.profile).unwrap().utilities();
        assert!((u[0] - 0.5).abs() < 1e-15 && u[1].abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_strategies() {
        assert!(MisreportStrategy::Scale { factor: 0.0 }.validate().is_err());
        assert!(MisreportStrategy::PerturbGaussian { sigma: -1.0 }.validate().is_err());
    }
}
