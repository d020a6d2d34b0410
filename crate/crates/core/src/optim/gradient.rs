use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::batch::ProfileBatch;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mechanism::{AmaParams, LossSpec};
use crate::regularized::{grad_smoothed_loss, AmaGradient, RegularizationConfig, SmoothedLoss};

/// Objective value at θ together with a gradient estimate.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Gaussian-smoothing estimate `(1/K) Σ_k (F(θ + σ u_k) − F(θ)) / σ · u_k`.
pub fn zeroth_order_grad<F, R>(f: F, theta: &[f64], perturbations: usize, sigma: f64, rng: &mut R) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    R: Rng + ?Sized,
{
    if perturbations == 0 {
        return Err(Error::InvalidOptimizer("need at least one perturbation".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidOptimizer(format!("sigma must be positive, got {sigma}")));
    }
    let dirs: Vec<Vec<f64>> = (0..perturbations)
        .map(|_| (0..theta.len()).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let base = f(theta)?;
    let values = dirs
        .par_iter()
        .map(|u| {
            let shifted: Vec<f64> = theta.iter().zip(u).map(|(t, x)| t + sigma * x).collect();
            f(&shifted)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut grad = vec![0.0; theta.len()];
    for (u, v) in dirs.iter().zip(&values) {
        let scale = (v - base) / sigma / perturbations as f64;
        for (g, x) in grad.iter_mut().zip(u) {
            *g += scale * x;
        }
    }
    Ok(Estimate { value: base, grad })
}

/// Batch mean of the smoothed loss and of its analytic gradient.
pub fn first_order_grad(
    env: &Environment,
    params: &AmaParams,
    loss: LossSpec,
    batch: &ProfileBatch,
    cfg: &RegularizationConfig,
) -> Result<SmoothedLoss> {
    if batch.is_empty() {
        return Err(Error::InvalidOptimizer("gradient batch is empty".into()));
    }
    let parts = batch
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            grad_smoothed_loss(
                env.mdp(),
                env.marginals(),
                params,
                &s.profile,
                loss,
                s.loss_cost(loss),
                cfg,
            )
            .map_err(|e| batch.wrap(i, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ns, na) = params.boosts.shape();
    let mut grad = AmaGradient::zeros(params.num_agents(), ns, na);
    let mut value = 0.0;
    let scale = 1.0 / parts.len() as f64;
    for p in &parts {
        value += scale * p.value;
        grad.add_scaled(scale, &p.grad);
    }
    Ok(SmoothedLoss { value, grad })
}
