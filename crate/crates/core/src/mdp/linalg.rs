use nalgebra::{DMatrix, DVector};

use super::{Policy, TabularMdp};
use crate::error::{Error, Result};

/// Solves `(I - γ P_π) x = rhs`, or its transpose `(I - γ P_πᵀ) x = rhs`, where
/// `P_π(s, s') = Σ_a π(a|s) P(s'|s,a)`.
pub(crate) fn solve_policy_system(
    mdp: &TabularMdp,
    policy: &Policy,
    transpose: bool,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let gamma = mdp.gamma_eff();
    let mut m = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for &(s2, p) in mdp.successors(s, a) {
                if transpose {
                    m[(s2, s)] -= gamma * pa * p;
                } else {
                    m[(s, s2)] -= gamma * pa * p;
                }
            }
        }
    }
    let b = DVector::from_column_slice(rhs);
    let x = m.lu().solve(&b).ok_or(Error::Singular)?;
    Ok(x.iter().copied().collect())
}
