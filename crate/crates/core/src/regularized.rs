//! Entropy-regularized inner solver and gradients of the smoothed outer loss.
//!
//! The regularized follower maximizes `reward · ν + α · E[Σ_t H(π(·|s_t))]`. Its solution is
//! the soft-Bellman (log-sum-exp) fixed point with softmax policies at temperature `α`, which is
//! unique and smooth in the reward. Two facts drive the gradients:
//!
//! * the soft optimal value `V_α(R)` has gradient `∂V_α/∂R(s,a) = ν_α(s,a)`, so affine-welfare
//!   terms differentiate analytically (`∂asw/∂b = ν`, `∂asw/∂w_i = ν · r_i`);
//! * policy-dependent linear terms `c · ν_α(R)` (social welfare, makespan) are differentiated
//!   by reverse-mode propagation through the soft-Bellman recursion, layer by layer for episodic
//!   MDPs and by implicit differentiation at the fixed point for discounted ones.

use crate::error::{Error, Result};
use crate::mdp::{solve_policy_system, Horizon, OccupancyMeasure, Policy, TabularMdp};
use crate::mechanism::{affine_reward, AmaParams, LossSpec, MarginalEconomies, RewardProfile};
use crate::table::{ActionMask, SaTable, ScalarReward};

const MAX_SOFT_ITERATIONS: usize = 200_000;
const MAX_NEWTON_STEPS: usize = 50;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RegularizationConfig {
    /// Entropy weight.
    pub alpha: f64,
    /// Sup-norm soft-Bellman residual at which discounted iteration hands over to Newton polishing.
    pub bellman_tol: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            alpha: 1e-2,
            bellman_tol: 1e-10,
        }
    }
}

impl RegularizationConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        RegularizationConfig {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidRegularization(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.bellman_tol > 0.0 && self.bellman_tol.is_finite()) {
            return Err(Error::InvalidRegularization(format!(
                "bellman_tol must be positive, got {}",
                self.bellman_tol
            )));
        }
        Ok(())
    }
}

/// Optimum of the entropy-regularized inner problem.
#[derive(Clone, Debug)]
pub struct SoftSolution {
    pub occupancy: OccupancyMeasure,
    /// Soft optimal value from the initial distribution, entropy bonus included.
    pub value: f64,
    pub state_values: Vec<f64>,
    pub policy: Policy,
    /// `d(s) = Σ_a ν(s,a)`
    pub state_mass: Vec<f64>,
}

pub fn solve_regularized(mdp: &TabularMdp, reward: &ScalarReward, cfg: &RegularizationConfig) -> Result<SoftSolution> {
    solve_regularized_masked(mdp, reward, None, cfg)
}

/// [`solve_regularized`] with the softmax restricted to the actions allowed by `mask`.
pub fn solve_regularized_masked(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
    cfg: &RegularizationConfig,
) -> Result<SoftSolution> {
    cfg.validate()?;
    reward.check_shape("reward", mdp.num_states(), mdp.num_actions())?;
    if !reward.is_finite() {
        return Err(Error::NonFinite("reward"));
    }
    if let Some(m) = mask {
        mdp.check_mask(m)?;
    }
    let (state_values, policy) = match mdp.horizon() {
        Horizon::Episodic { .. } => soft_backward_induction(mdp, reward, mask, cfg.alpha),
        Horizon::Discounted { .. } => soft_fixed_point(mdp, reward, mask, cfg)?,
    };
    let state_mass = crate::mdp::state_distribution(mdp, &policy)?;
    let nu = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        state_mass[s] * policy.prob(s, a)
    });
    let value = mdp
        .initial()
        .iter()
        .zip(&state_values)
        .map(|(p, v)| p * v)
        .sum();
    Ok(SoftSolution {
        occupancy: OccupancyMeasure { nu },
        value,
        state_values,
        policy,
        state_mass,
    })
}

/// Soft backup at one state: returns `α log Σ_a exp(Q(a)/α)` and writes the softmax into `probs`.
fn soft_backup(q: &[f64], mask: Option<&ActionMask>, s: usize, alpha: f64, probs: &mut [f64]) -> f64 {
    let allowed = |a: usize| mask.map_or(true, |m| m.allows(s, a));
    let max = (0..q.len())
        .filter(|&a| allowed(a))
        .map(|a| q[a])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for a in 0..q.len() {
        probs[a] = if allowed(a) {
            ((q[a] - max) / alpha).exp()
        } else {
            0.0
        };
        z += probs[a];
    }
    probs.iter_mut().for_each(|p| *p /= z);
    max + alpha * z.ln()
}

fn soft_q_row(mdp: &TabularMdp, reward: &ScalarReward, values: &[f64], s: usize, out: &mut [f64]) {
    let gamma = mdp.gamma_eff();
    for (a, q) in out.iter_mut().enumerate() {
        let cont: f64 = mdp
            .successors(s, a)
            .iter()
            .map(|&(s2, p)| p * values[s2])
            .sum();
        *q = reward.get(s, a) + gamma * cont;
    }
}

fn soft_backward_induction(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
    alpha: f64,
) -> (Vec<f64>, Policy) {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut values = vec![0.0; ns];
    let mut probs = SaTable::filled(ns, na, 1.0 / na as f64);
    let mut q = vec![0.0; na];
    for layer in mdp.decision_layers().iter().rev() {
        for &s in layer {
            soft_q_row(mdp, reward, &values, s, &mut q);
            values[s] = soft_backup(&q, mask, s, alpha, probs.row_mut(s));
        }
    }
    (values, Policy { probs })
}

fn soft_fixed_point(
    mdp: &TabularMdp,
    reward: &ScalarReward,
    mask: Option<&ActionMask>,
    cfg: &RegularizationConfig,
) -> Result<(Vec<f64>, Policy)> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let alpha = cfg.alpha;
    let mut values = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut probs = SaTable::zeros(ns, na);
    let mut q = vec![0.0; na];

    for _ in 0..MAX_SOFT_ITERATIONS {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            soft_q_row(mdp, reward, &values, s, &mut q);
            next[s] = soft_backup(&q, mask, s, alpha, probs.row_mut(s));
            residual = residual.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= cfg.bellman_tol {
            break;
        }
    }

    // Newton polish (soft policy iteration): exact evaluation of the current softmax policy.
    let mut backup = vec![0.0; ns];
    for _ in 0..MAX_NEWTON_STEPS {
        let mut entropy_reward = vec![0.0; ns];
        for s in 0..ns {
            soft_q_row(mdp, reward, &values, s, &mut q);
            backup[s] = soft_backup(&q, mask, s, alpha, probs.row_mut(s));
            // R − α log π = R − (Q − V_backup)
            entropy_reward[s] = (0..na)
                .filter(|&a| probs.get(s, a) > 0.0)
                .map(|a| probs.get(s, a) * (reward.get(s, a) - (q[a] - backup[s])))
                .sum();
        }
        let policy = Policy { probs: probs.clone() };
        let evaluated = solve_policy_system(mdp, &policy, false, &entropy_reward)?;
        let change = evaluated
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = evaluated.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        values = evaluated;
        if change <= 1e-14 * scale {
            break;
        }
    }
    for s in 0..ns {
        soft_q_row(mdp, reward, &values, s, &mut q);
        soft_backup(&q, mask, s, alpha, probs.row_mut(s));
    }
    Ok((values, Policy { probs }))
}

/// Gradient of `cost · ν_α(R)` with respect to the reward table `R`.
pub fn policy_functional_grad(
    mdp: &TabularMdp,
    sol: &SoftSolution,
    cost: &SaTable,
    alpha: f64,
) -> Result<SaTable> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    cost.check_shape("cost", ns, na)?;
    let pi = &sol.policy;
    let d = &sol.state_mass;

    // Adjoint of the state mass: d̄(s) = Σ_a π(a|s) ν̄(s,a), ν̄ = c + γ P d̄.
    let nu_bar = match mdp.horizon() {
        Horizon::Episodic { .. } => {
            let mut d_bar = vec![0.0; ns];
            let mut nu_bar = SaTable::zeros(ns, na);
            for layer in mdp.decision_layers().iter().rev() {
                for &s in layer {
                    let mut acc = 0.0;
                    for a in 0..na {
                        let cont: f64 = mdp.successors(s, a).iter().map(|&(s2, p)| p * d_bar[s2]).sum();
                        let v = cost.get(s, a) + cont;
                        nu_bar.set(s, a, v);
                        acc += pi.prob(s, a) * v;
                    }
                    d_bar[s] = acc;
                }
            }
            nu_bar
        }
        Horizon::Discounted { gamma } => {
            let c_pi: Vec<f64> = (0..ns)
                .map(|s| (0..na).map(|a| pi.prob(s, a) * cost.get(s, a)).sum())
                .collect();
            let d_bar = solve_policy_system(mdp, pi, false, &c_pi)?;
            SaTable::from_fn(ns, na, |s, a| {
                let cont: f64 = mdp.successors(s, a).iter().map(|&(s2, p)| p * d_bar[s2]).sum();
                cost.get(s, a) + gamma * cont
            })
        }
    };

    // Through the softmax: g(s,a) = π(a|s) (π̄(a|s) − Σ_b π(b|s) π̄(b|s)) / α with π̄ = d ν̄.
    let g = SaTable::from_fn(ns, na, |s, a| {
        if mdp.is_terminal(s) {
            return 0.0;
        }
        let mean: f64 = (0..na).map(|b| pi.prob(s, b) * nu_bar.get(s, b)).sum();
        pi.prob(s, a) * d[s] * (nu_bar.get(s, a) - mean) / alpha
    });

    // Through the value recursion: R̄ = g + π V̄, V̄(s') = γ Σ_{s,a} P(s'|s,a) R̄(s,a).
    let mut grad = g.clone();
    match mdp.horizon() {
        Horizon::Episodic { .. } => {
            let mut v_bar = vec![0.0; ns];
            for layer in mdp.decision_layers() {
                for &s in layer {
                    for a in 0..na {
                        let r_bar = g.get(s, a) + pi.prob(s, a) * v_bar[s];
                        grad.set(s, a, r_bar);
                        for &(s2, p) in mdp.successors(s, a) {
                            v_bar[s2] += p * r_bar;
                        }
                    }
                }
            }
        }
        Horizon::Discounted { gamma } => {
            let mut rhs = vec![0.0; ns];
            for s in 0..ns {
                for a in 0..na {
                    for &(s2, p) in mdp.successors(s, a) {
                        rhs[s2] += gamma * p * g.get(s, a);
                    }
                }
            }
            let v_bar = solve_policy_system(mdp, pi, true, &rhs)?;
            for s in 0..ns {
                for a in 0..na {
                    grad.set(s, a, g.get(s, a) + pi.prob(s, a) * v_bar[s]);
                }
            }
        }
    }
    Ok(grad)
}

/// Gradient with respect to the AMA parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AmaGradient {
    pub weights: Vec<f64>,
    pub boosts: SaTable,
}

impl AmaGradient {
    pub fn zeros(num_agents: usize, num_states: usize, num_actions: usize) -> Self {
        AmaGradient {
            weights: vec![0.0; num_agents],
            boosts: SaTable::zeros(num_states, num_actions),
        }
    }

    pub fn add_scaled(&mut self, scale: f64, other: &AmaGradient) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * o;
        }
        self.boosts.add_scaled(scale, &other.boosts);
    }

    /// Adds `scale · ∂(c · ν)/∂(w,b)` given `∂(c · ν)/∂R` and the chain rule `∂R/∂w_i = r_i`.
    fn add_reward_gradient(&mut self, scale: f64, d_reward: &SaTable, profile: &RewardProfile) {
        self.boosts.add_scaled(scale, d_reward);
        for (w, r) in self.weights.iter_mut().zip(&profile.per_agent) {
            *w += scale * d_reward.dot(r);
        }
    }
}

/// Smoothed loss of one profile and its gradient.
#[derive(Clone, Debug)]
pub struct SmoothedLoss {
    pub value: f64,
    pub grad: AmaGradient,
}

/// Smoothed loss evaluated at the regularized optimal policies, without the gradient.
pub fn smoothed_loss(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    profile: &RewardProfile,
    loss: LossSpec,
    makespan_cost: Option<&SaTable>,
    cfg: &RegularizationConfig,
) -> Result<f64> {
    smoothed(mdp, marginals, params, profile, loss, makespan_cost, cfg, false).map(|s| s.value)
}

/// Gradient of the smoothed loss with respect to `(w, b)`.
///
/// Revenue uses the soft values `asw_α = V_α(Σ w r + b)` and `asw_α^{(-i)}` (whose partials are
/// the regularized occupancy measures) plus `sw(ν_α)`; welfare and makespan are linear
/// functionals of `ν_α`.
pub fn grad_smoothed_loss(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    profile: &RewardProfile,
    loss: LossSpec,
    makespan_cost: Option<&SaTable>,
    cfg: &RegularizationConfig,
) -> Result<SmoothedLoss> {
    smoothed(mdp, marginals, params, profile, loss, makespan_cost, cfg, true)
}

#[allow(clippy::too_many_arguments)]
fn smoothed(
    mdp: &TabularMdp,
    marginals: &MarginalEconomies,
    params: &AmaParams,
    profile: &RewardProfile,
    loss: LossSpec,
    makespan_cost: Option<&SaTable>,
    cfg: &RegularizationConfig,
    with_grad: bool,
) -> Result<SmoothedLoss> {
    params.validate()?;
    profile.validate()?;
    let n = params.num_agents();
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let reward = affine_reward(params, profile)?;
    let main = solve_regularized(mdp, &reward, cfg)?;
    let mut grad = AmaGradient::zeros(n, ns, na);

    let value = match loss {
        LossSpec::Revenue => {
            let total = profile.total();
            let sw = main.occupancy.nu.dot(&total);
            let inv_sum: f64 = params.weights.iter().map(|w| 1.0 / w).sum();
            let mut value = inv_sum * main.value - sw;
            if with_grad {
                let j_sw = policy_functional_grad(mdp, &main, &total, cfg.alpha)?;
                grad.add_reward_gradient(-1.0, &j_sw, profile);
                grad.add_reward_gradient(inv_sum, &main.occupancy.nu, profile);
            }
            for (i, (&w, r)) in params.weights.iter().zip(&profile.per_agent).enumerate() {
                let mut without = reward.clone();
                without.add_scaled(-w, r);
                let marginal = solve_regularized_masked(mdp, &without, marginals.mask(i), cfg)?;
                value -= marginal.value / w;
                if with_grad {
                    // ∂/∂w_i of (1/w_i)(asw_α − asw_α^{(-i)}) through the explicit 1/w_i factor.
                    grad.weights[i] -= (main.value - marginal.value) / (w * w);
                    // asw_α^{(-i)} depends on the boosts and on every weight except w_i.
                    grad.boosts.add_scaled(-1.0 / w, &marginal.occupancy.nu);
                    for (k, rk) in profile.per_agent.iter().enumerate() {
                        if k != i {
                            grad.weights[k] -= marginal.occupancy.nu.dot(rk) / w;
                        }
                    }
                }
            }
            value
        }
        LossSpec::NegWelfare => {
            let total = profile.total();
            if with_grad {
                let j = policy_functional_grad(mdp, &main, &total, cfg.alpha)?;
                grad.add_reward_gradient(-1.0, &j, profile);
            }
            -main.occupancy.nu.dot(&total)
        }
        LossSpec::Makespan => {
            let q = makespan_cost.ok_or_else(|| {
                Error::InvalidParams("makespan loss needs an environment cost table".into())
            })?;
            q.check_shape("makespan cost", ns, na)?;
            if with_grad {
                let j = policy_functional_grad(mdp, &main, q, cfg.alpha)?;
                grad.add_reward_gradient(1.0, &j, profile);
            }
            main.occupancy.nu.dot(q)
        }
    };
    Ok(SmoothedLoss { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(rewards: &[f64]) -> (TabularMdp, SaTable) {
        let na = rewards.len();
        let mdp = TabularMdp::from_successors(
            2,
            na,
            vec![vec![(1, 1.0)]; 2 * na],
            vec![1.0, 0.0],
            Horizon::Episodic {
                horizon: 1,
                state_layer: vec![0, 1],
            },
        )
        .unwrap();
        let r = SaTable::from_fn(2, na, |s, a| if s == 0 { rewards[a] } else { 0.0 });
        (mdp, r)
    }

    #[test]
    fn softmax_at_unit_temperature() {
        let (mdp, r) = one_step(&[1.0, 0.0]);
        let sol = solve_regularized(&mdp, &r, &RegularizationConfig::with_alpha(1.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((sol.policy.prob(0, 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((sol.policy.prob(0, 1) - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((sol.value - (e + 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_temperature_limit() {
        let (mdp, r) = one_step(&[1.0, 0.0]);
        let sol = solve_regularized(&mdp, &r, &RegularizationConfig::with_alpha(1e-6)).unwrap();
        assert!((sol.occupancy.nu.get(0, 0) - 1.0).abs() < 1e-4);
        assert!(sol.occupancy.nu.get(0, 1) < 1e-4);
    }

    #[test]
    fn rejects_non_positive_alpha() {
        let (mdp, r) = one_step(&[1.0, 0.0]);
        for alpha in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                solve_regularized(&mdp, &r, &RegularizationConfig::with_alpha(alpha)),
                Err(Error::InvalidRegularization(_))
            ));
        }
    }

    #[test]
    fn masked_actions_get_no_mass() {
        let (mdp, r) = one_step(&[1.0, 0.0, 0.5]);
        let mask = ActionMask::from_fn(2, 3, |_, a| a != 0);
        let sol = solve_regularized_masked(&mdp, &r, Some(&mask), &RegularizationConfig::default()).unwrap();
        assert_eq!(sol.occupancy.nu.get(0, 0), 0.0);
        assert!(sol.occupancy.nu.get(0, 2) > 0.99);
    }

    #[test]
    fn discounted_single_state_geometric() {
        let mdp = TabularMdp::from_successors(
            1,
            1,
            vec![vec![(0, 1.0)]],
            vec![1.0],
            Horizon::Discounted { gamma: 0.9 },
        )
        .unwrap();
        let r = SaTable::filled(1, 1, 1.0);
        let sol = solve_regularized(&mdp, &r, &RegularizationConfig::default()).unwrap();
        assert!((sol.value - 10.0).abs() < 1e-12);
        assert!((sol.occupancy.nu.get(0, 0) - 10.0).abs() < 1e-12);
    }
}
