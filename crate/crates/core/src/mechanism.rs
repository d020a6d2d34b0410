//! Dynamic affine maximizers: allocation, marginal economies, payments and losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{solve_exact_masked, OccupancyMeasure, TabularMdp};
use crate::table::{ActionMask, SaTable, ScalarReward};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-3;

/// Agent weights and state-action boosts of an affine maximizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmaParams {
    pub weights: Vec<f64>,
    pub boosts: SaTable,
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
}

fn default_weight_floor() -> f64 {
    DEFAULT_WEIGHT_FLOOR
}

impl AmaParams {
    pub fn new(weights: Vec<f64>, boosts: SaTable) -> Result<Self> {
        let params = AmaParams {
            weights,
            boosts,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        };
        params.validate()?;
        Ok(params)
    }

    /// Unit weights and zero boosts.
    pub fn vcg(num_agents: usize, num_states: usize, num_actions: usize) -> Self {
        AmaParams {
            weights: vec![1.0; num_agents],
            boosts: SaTable::zeros(num_states, num_actions),
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidParams("at least one weight is required".into()));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "weight floor {} must be positive",
                self.weight_floor
            )));
        }
        for (i, &w) in self.weights.iter().enumerate() {
            if !w.is_finite() || w < self.weight_floor {
                return Err(Error::InvalidParams(format!(
                    "weight {i} = {w} is below the floor {}",
                    self.weight_floor
                )));
            }
        }
        if !self.boosts.is_finite() {
            return Err(Error::NonFinite("boosts"));
        }
        Ok(())
    }

    pub fn clamp_weights(&mut self) {
        let floor = self.weight_floor;
        self.weights.iter_mut().for_each(|w| *w = w.max(floor));
    }

    /// Multiplies weights and boosts by `factor`.
    pub fn scaled(&self, factor: f64) -> AmaParams {
        AmaParams {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            boosts: self.boosts.scaled(factor),
            weight_floor: self.weight_floor,
        }
    }
}

/// Reported reward tables, one per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardProfile {
    pub per_agent: Vec<SaTable>,
}

impl RewardProfile {
    pub fn new(per_agent: Vec<SaTable>) -> Result<Self> {
        let profile = RewardProfile { per_agent };
        profile.validate()?;
        Ok(profile)
    }

    pub fn num_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .per_agent
            .first()
            .ok_or_else(|| Error::InvalidParams("reward profile has no agents".into()))?;
        for r in &self.per_agent {
            r.check_shape("agent reward", first.num_states(), first.num_actions())?;
            if !r.is_finite() {
                return Err(Error::NonFinite("agent reward"));
            }
        }
        Ok(())
    }

    /// `Σ_i r_i(s,a)`, the unweighted social welfare coefficient.
    pub fn total(&self) -> SaTable {
        let mut total = SaTable::zeros(self.per_agent[0].num_states(), self.per_agent[0].num_actions());
        for r in &self.per_agent {
            total.add_scaled(1.0, r);
        }
        total
    }

    pub fn with_agent(&self, agent: usize, reward: SaTable) -> RewardProfile {
        let mut per_agent = self.per_agent.clone();
        per_agent[agent] = reward;
        RewardProfile { per_agent }
    }
}

/// Feasible policy set of each agent's marginal economy.
///
/// `None` means the marginal economy ranges over all policies; `Some(mask)` restricts it,
/// e.g. to the outcomes in which the agent is absent. Any restriction that does not depend on
/// the agent's own report keeps the mechanism strategyproof.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalEconomies {
    masks: Vec<Option<ActionMask>>,
}

impl MarginalEconomies {
    pub fn unrestricted(num_agents: usize) -> Self {
        MarginalEconomies {
            masks: vec![None; num_agents],
        }
    }

    pub fn restricted(masks: Vec<ActionMask>) -> Self {
        MarginalEconomies {
            masks: masks.into_iter().map(Some).collect(),
        }
    }

    pub fn mask(&self, agent: usize) -> Option<&ActionMask> {
        self.masks.get(agent).and_then(|m| m.as_ref())
    }

    pub fn num_agents(&self) -> usize {
        self.masks.len()
    }

    pub fn is_unrestricted(&self) -> bool {
        self.masks.iter().all(Option::is_none)
    }
}

/// Everything the mechanism computes for one reported profile.
#[derive(Clone, Debug)]
pub struct MechanismOutcome {
    pub occupancy: OccupancyMeasure,
    pub actions: Vec<usize>,
    pub asw: f64,
    pub asw_minus: Vec<f64>,
    /// `E_π[Σ_t r_i]` under the chosen policy.
    pub agent_values: Vec<f64>,
    pub payments: Vec<f64>,
    pub sw: f64,
    pub revenue: f64,
}

impl MechanismOutcome {
    pub fn revenue(&self) -> f64 {
        self.revenue
    }

    pub fn sw(&self) -> f64 {
        self.sw
    }

    /// Revenue through `−Σ asw/w_i + sw + Σ asw^{(-i)}/w_i`, an independent route to `Σ p_i`.
    pub fn revenue_by_decomposition(&self, weights: &[f64]) -> f64 {
        let inv: f64 = weights.iter().map(|w| 1.0 / w).sum();
        let marginal: f64 = weights
            .iter()
            .zip(&self.asw_minus)
            .map(|(w, m)| m / w)
            .sum();
        -inv * self.asw + self.sw + marginal
    }

    /// Truthful expected utility `E_π[Σ r_i] − p_i` of each agent.
    pub fn utilities(&self) -> Vec<f64> {
        self.agent_values
            .iter()
            .zip(&self.payments)
            .map(|(v, p)| v - p)
            .collect()
    }
}

/// Loss minimized by the mechanism designer.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    /// `−revenue`
    Revenue,
    /// `−sw`
    NegWelfare,
    /// Makespan of the induced assignment; needs an environment-supplied cost table.
    Makespan,
}

impl LossSpec {
    /// Reported objective: revenue and welfare are maximized, makespan minimized.
    pub fn objective_from_loss(self, loss: f64) -> f64 {
        match self {
            // `+ 0.0` turns a negated zero into `0.0`.
            LossSpec::Revenue | LossSpec::NegWelfare => -loss + 0.0,
            LossSpec::Makespan => loss,
        }
    }

    pub fn maximizes(self) -> bool {
        !matches!(self, LossSpec::Makespan)
    }
}

/// `Σ_i w_i r_i(s,a) + b(s,a)`
pub fn affine_reward(params: &AmaParams, profile: &RewardProfile) -> Result<ScalarReward> {
    if params.num_agents() != profile.num_agents() {
        return Err(Error::shape(
            "agent count",
            params.num_agents(),
            profile.num_agents(),
        ));
    }
    let (ns, na) = params.boosts.shape();
    let mut out = params.boosts.clone();
    for (w, r) in params.weights.iter().zip(&profile.per_agent) {
        r.check_shape("agent reward", ns, na)?;
        out.add_scaled(*w, r);
    }
    Ok(out)
}

/// Runs the AMA with unrestricted marginal economies.
pub fn run_ama(mdp: &TabularMdp, params: &AmaParams, profile: &RewardProfile) -> Result<MechanismOutcome> {
    run_ama_with(mdp, &MarginalEconomies::unrestricted(params.num_agents()), params, profile)
}

/// Chooses the affine-welfare maximizing policy and charges
/// `p_i = (asw^{(-i)} − (asw − w_i E_π[Σ r_i])) / w_i`.
pub fn run_ama_with(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    profile: &RewardProfile,
) -> Result<MechanismOutcome> {
    params.validate()?;
    profile.validate()?;
    if marginals.num_agents() != params.num_agents() {
        return Err(Error::shape(
            "marginal economies",
            params.num_agents(),
            marginals.num_agents(),
        ));
    }
    let reward = affine_reward(params, profile)?;
    let main = solve_exact_masked(mdp, &reward, None)?;

    let agent_values: Vec<f64> = profile
        .per_agent
        .iter()
        .map(|r| main.occupancy.nu.dot(r))
        .collect();

    let mut asw_minus = Vec::with_capacity(params.num_agents());
    let mut payments = Vec::with_capacity(params.num_agents());
    for (i, (&w, r)) in params.weights.iter().zip(&profile.per_agent).enumerate() {
        let mut without = reward.clone();
        without.add_scaled(-w, r);
        let marginal = solve_exact_masked(mdp, &without, marginals.mask(i))?;
        let others_under_chosen = main.value - w * agent_values[i];
        payments.push((marginal.value - others_under_chosen) / w);
        asw_minus.push(marginal.value);
    }

    let sw = agent_values.iter().sum();
    let revenue = payments.iter().sum();
    Ok(MechanismOutcome {
        occupancy: main.occupancy,
        actions: main.actions,
        asw: main.value,
        asw_minus,
        agent_values,
        payments,
        sw,
        revenue,
    })
}

/// Dynamic VCG: the AMA with unit weights and zero boosts.
pub fn vcg_baseline(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    profile: &RewardProfile,
) -> Result<MechanismOutcome> {
    let params = AmaParams::vcg(profile.num_agents(), mdp.num_states(), mdp.num_actions());
    run_ama_with(mdp, marginals, &params, profile)
}

/// Loss of one outcome. `makespan_cost` is the linear cost table `q` with
/// `E[makespan] = q · ν`, required for [`LossSpec::Makespan`].
pub fn loss_value(loss: LossSpec, outcome: &MechanismOutcome, makespan_cost: Option<&SaTable>) -> Result<f64> {
    match loss {
        LossSpec::Revenue => Ok(-outcome.revenue + 0.0),
        LossSpec::NegWelfare => Ok(-outcome.sw + 0.0),
        LossSpec::Makespan => {
            let q = makespan_cost.ok_or_else(|| {
                Error::InvalidParams("makespan loss needs an environment cost table".into())
            })?;
            Ok(outcome.occupancy.nu.dot(q))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Horizon;

    /// One item, one round: actions sell-to-0, sell-to-1, withhold.
    fn single_item(n: usize) -> TabularMdp {
        let na = n + 1;
        let successors = vec![vec![(1, 1.0)]; 2 * na];
        TabularMdp::from_successors(
            2,
            na,
            successors,
            vec![1.0, 0.0],
            Horizon::Episodic {
                horizon: 1,
                state_layer: vec![0, 1],
            },
        )
        .unwrap()
    }

    fn bids(values: &[f64]) -> RewardProfile {
        let n = values.len();
        RewardProfile::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| SaTable::from_fn(2, n + 1, |s, a| if s == 0 && a == i { v } else { 0.0 }))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn affine_reward_examples() {
        let ones = SaTable::filled(1, 1, 1.0);
        let profile = RewardProfile::new(vec![ones.clone(), ones.clone()]).unwrap();
        let params = AmaParams::new(vec![1.0, 1.0], SaTable::zeros(1, 1)).unwrap();
        assert_eq!(affine_reward(&params, &profile).unwrap().get(0, 0), 2.0);

        let mut boosts = SaTable::zeros(1, 1);
        boosts.set(0, 0, 1.0);
        let profile = RewardProfile::new(vec![ones, SaTable::filled(1, 1, 2.0)]).unwrap();
        let params = AmaParams::new(vec![2.0, 0.5], boosts).unwrap();
        assert_eq!(affine_reward(&params, &profile).unwrap().get(0, 0), 4.0);

        let r = SaTable::from_fn(2, 3, |s, a| (s * 3 + a) as f64 * 0.7 - 1.0);
        let profile = RewardProfile::new(vec![r.clone()]).unwrap();
        let params = AmaParams::vcg(1, 2, 3);
        assert_eq!(affine_reward(&params, &profile).unwrap(), r);
    }

    #[test]
    fn affine_reward_rejects_agent_mismatch() {
        let profile = RewardProfile::new(vec![SaTable::zeros(1, 1)]).unwrap();
        let params = AmaParams::vcg(2, 1, 1);
        assert!(affine_reward(&params, &profile).is_err());
    }

    #[test]
    fn second_price_single_item() {
        let mdp = single_item(2);
        let out = run_ama(&mdp, &AmaParams::vcg(2, 2, 3), &bids(&[0.8, 0.3])).unwrap();
        assert_eq!(out.actions[0], 0);
        assert!((out.payments[0] - 0.3).abs() < 1e-12);
        assert!(out.payments[1].abs() < 1e-12);
        assert!((out.revenue - 0.3).abs() < 1e-12);
        assert!((out.revenue_by_decomposition(&[1.0, 1.0]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_agent_pays_nothing() {
        let mdp = single_item(1);
        let out = run_ama(&mdp, &AmaParams::vcg(1, 2, 2), &bids(&[0.6])).unwrap();
        assert_eq!(out.payments, vec![0.0]);
        assert_eq!(out.revenue_by_decomposition(&[1.0]), 0.0);
    }

    #[test]
    fn withhold_boost_blocks_low_bids() {
        let mdp = single_item(2);
        let mut params = AmaParams::vcg(2, 2, 3);
        params.boosts.set(0, 2, 0.5);
        let out = run_ama(&mdp, &params, &bids(&[0.3, 0.2])).unwrap();
        assert_eq!(out.actions[0], 2);
        assert_eq!(out.payments, vec![0.0, 0.0]);
        assert_eq!(out.revenue, 0.0);
    }

    #[test]
    fn identical_bids_follow_lowest_index() {
        let mdp = single_item(2);
        let out = run_ama(&mdp, &AmaParams::vcg(2, 2, 3), &bids(&[0.5, 0.5])).unwrap();
        assert_eq!(out.actions[0], 0);
        assert!((out.revenue - 0.5).abs() < 1e-12);
        assert!((out.revenue_by_decomposition(&[1.0, 1.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_weights_below_floor() {
        let mdp = single_item(2);
        let mut params = AmaParams::vcg(2, 2, 3);
        params.weights[1] = 1e-4;
        assert!(matches!(
            run_ama(&mdp, &params, &bids(&[0.5, 0.4])),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn makespan_loss_needs_cost_table() {
        let mdp = single_item(2);
        let out = run_ama(&mdp, &AmaParams::vcg(2, 2, 3), &bids(&[0.8, 0.3])).unwrap();
        assert!(loss_value(LossSpec::Makespan, &out, None).is_err());
        assert_eq!(loss_value(LossSpec::NegWelfare, &out, None).unwrap(), -0.8);
        let q = SaTable::filled(2, 3, 2.0);
        assert_eq!(loss_value(LossSpec::Makespan, &out, Some(&q)).unwrap(), 2.0);
    }
}
