//! Outer-loop search over affine-maximizer parameters.
//!
//! Grid search ranks Sobol candidates on a fixed profile batch. The gradient methods start from
//! the best candidates of a smaller bootstrap grid, descend with freshly drawn batches every
//! step and finally select the start with the best exact loss on a held-out batch.

mod batch;
mod gradient;
mod search;
mod space;

pub use batch::{mean_loss, profile_losses, summarize, ProfileBatch};
pub use gradient::{first_order_grad, zeroth_order_grad, Estimate};
pub use search::{rank, sobol_grid_search, sobol_points, Ranked};
pub use space::{ParamSpace, SearchBounds};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mechanism::{AmaParams, LossSpec};
use crate::regularized::RegularizationConfig;
use crate::rng::{stream, tag};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vcg,
    Grid,
    Zeroth,
    First,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vcg => "vcg",
            Method::Grid => "grid",
            Method::Zeroth => "zeroth",
            Method::First => "first",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub grid_points: usize,
    pub grid_eval_profiles: usize,
    pub bootstrap_points: usize,
    pub bootstrap_profiles: usize,
    pub zo_perturbations: usize,
    pub zo_sigma: f64,
    pub zo_lr: f64,
    pub fo_lr: f64,
    /// Entropy temperature of the first-order surrogate.
    pub alpha: f64,
    pub batch_profiles: usize,
    pub num_iterations: usize,
    pub num_starts: usize,
    /// Held-out profiles for choosing among the descended starts.
    pub selection_profiles: usize,
    /// Optimize agent weights; defaults to true only for asymmetric distributions.
    pub free_weights: Option<bool>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_points: 10_000,
            grid_eval_profiles: 2_000,
            bootstrap_points: 256,
            bootstrap_profiles: 200,
            zo_perturbations: 20,
            zo_sigma: 0.05,
            zo_lr: 0.1,
            fo_lr: 1e-2,
            alpha: 1e-2,
            batch_profiles: 20,
            num_iterations: 200,
            num_starts: 1,
            selection_profiles: 10_000,
            free_weights: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("grid_points", self.grid_points),
            ("grid_eval_profiles", self.grid_eval_profiles),
            ("bootstrap_points", self.bootstrap_points),
            ("bootstrap_profiles", self.bootstrap_profiles),
            ("zo_perturbations", self.zo_perturbations),
            ("batch_profiles", self.batch_profiles),
            ("num_starts", self.num_starts),
            ("selection_profiles", self.selection_profiles),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("optimizer.{name}"), "must be at least 1"));
            }
        }
        let reals = [
            ("zo_sigma", self.zo_sigma),
            ("zo_lr", self.zo_lr),
            ("fo_lr", self.fo_lr),
            ("alpha", self.alpha),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("optimizer.{name}"), "must be a positive number"));
            }
        }
        Ok(())
    }
}

/// Descent history of one start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    /// Position in the bootstrap ranking.
    pub start: usize,
    pub initial_loss: f64,
    /// Batch loss before every step (exact for zeroth-order, smoothed for first-order).
    pub batch_losses: Vec<f64>,
    pub selection_loss: f64,
}

#[derive(Clone, Debug)]
pub struct Optimized {
    pub params: AmaParams,
    /// Loss estimate used for the final choice (grid or selection batch).
    pub estimate: f64,
    pub traces: Vec<StartTrace>,
}

/// Runs `method`; everything random is derived from `seed`.
pub fn optimize(
    env: &Environment,
    loss: LossSpec,
    method: Method,
    cfg: &OptimizerConfig,
    bounds: &SearchBounds,
    seed: u64,
) -> Result<Optimized> {
    cfg.validate()?;
    if !env.supports_loss(loss) {
        return Err(Error::config("loss", format!("`{loss:?}` is not defined for `{}`", env.spec().name())));
    }
    let free = cfg.free_weights.unwrap_or(!env.distribution().is_symmetric());
    let space = ParamSpace::new(env, free);
    bounds.validate(crate::mechanism::DEFAULT_WEIGHT_FLOOR)?;

    if method == Method::Vcg {
        let mdp = env.mdp();
        return Ok(Optimized {
            params: AmaParams::vcg(env.num_agents(), mdp.num_states(), mdp.num_actions()),
            estimate: f64::NAN,
            traces: Vec::new(),
        });
    }

    let (points, profiles) = match method {
        Method::Grid => (cfg.grid_points, cfg.grid_eval_profiles),
        _ => (cfg.bootstrap_points, cfg.bootstrap_profiles),
    };
    let grid_batch = ProfileBatch::draw(env, seed, &[tag("grid")], profiles)?;
    let ranked = sobol_grid_search(&space, bounds, points, |p| mean_loss(env, p, loss, &grid_batch))?;
    if method == Method::Grid {
        let best = &ranked[0];
        return Ok(Optimized {
            params: space.params(&best.theta)?,
            estimate: best.loss,
            traces: Vec::new(),
        });
    }

    let starts = cfg.num_starts.min(ranked.len());
    let descended = ranked[..starts]
        .par_iter()
        .enumerate()
        .map(|(k, cand)| descend(env, &space, loss, method, cfg, seed, k, cand))
        .collect::<Result<Vec<_>>>()?;

    let selection = ProfileBatch::draw(env, seed, &[tag("select")], cfg.selection_profiles)?;
    let mut traces = Vec::with_capacity(starts);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (theta, mut trace) in descended {
        trace.selection_loss = mean_loss(env, &space.params(&theta)?, loss, &selection)?;
        if best.as_ref().map_or(true, |(l, _)| trace.selection_loss < *l) {
            best = Some((trace.selection_loss, theta));
        }
        traces.push(trace);
    }
    let (estimate, theta) = best.expect("at least one start");
    Ok(Optimized {
        params: space.params(&theta)?,
        estimate,
        traces,
    })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    env: &Environment,
    space: &ParamSpace,
    loss: LossSpec,
    method: Method,
    cfg: &OptimizerConfig,
    seed: u64,
    start: usize,
    cand: &Ranked,
) -> Result<(Vec<f64>, StartTrace)> {
    let reg = RegularizationConfig::with_alpha(cfg.alpha);
    let mut theta = cand.theta.clone();
    let mut batch_losses = Vec::with_capacity(cfg.num_iterations);
    for it in 0..cfg.num_iterations as u64 {
        let batch = ProfileBatch::draw(env, seed, &[tag("descent"), start as u64, it], cfg.batch_profiles)?;
        let (value, grad, lr) = match method {
            Method::Zeroth => {
                let mut rng = stream(seed, &[tag("perturb"), start as u64, it]);
                let objective = |t: &[f64]| {
                    let mut t = t.to_vec();
                    space.project(&mut t);
                    mean_loss(env, &space.params(&t)?, loss, &batch)
                };
                let est = zeroth_order_grad(objective, &theta, cfg.zo_perturbations, cfg.zo_sigma, &mut rng)?;
                (est.value, est.grad, cfg.zo_lr)
            }
            _ => {
                let sm = first_order_grad(env, &space.params(&theta)?, loss, &batch, &reg)?;
                (sm.value, space.gradient_theta(&sm.grad), cfg.fo_lr)
            }
        };
        batch_losses.push(value);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= lr * g;
        }
        space.project(&mut theta);
    }
    Ok((
        theta,
        StartTrace {
            start,
            initial_loss: cand.loss,
            batch_losses,
            selection_loss: f64::NAN,
        },
    ))
}
