use rayon::prelude::*;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use super::space::{ParamSpace, SearchBounds};
use crate::error::{Error, Result};
use crate::mechanism::AmaParams;

const MAX_SOBOL_DIMS: usize = 1000;

/// First `count` points of the unscrambled Sobol sequence in `[0,1)^dim`, skipping the
/// leading all-zero point.
pub fn sobol_points(dim: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidOptimizer("the parameter vector is empty".into()));
    }
    if dim > MAX_SOBOL_DIMS {
        return Err(Error::InvalidOptimizer(format!(
            "Sobol search supports at most {MAX_SOBOL_DIMS} dimensions, got {dim}"
        )));
    }
    let params = if dim <= 100 {
        JoeKuoD6::minimal()
    } else {
        JoeKuoD6::standard()
    };
    Ok(Sobol::<f64>::new(dim, &params).skip(1).take(count).collect())
}

/// A candidate with its estimated loss; `index` is its position in the candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
}

/// Sorts ascending by loss; equal losses keep candidate order.
pub fn rank(candidates: Vec<(Vec<f64>, f64)>) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = candidates
        .into_iter()
        .enumerate()
        .map(|(index, (theta, loss))| Ranked { index, theta, loss })
        .collect();
    ranked.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.index.cmp(&b.index)));
    ranked
}

/// Evaluates the VCG point followed by `points − 1` Sobol points mapped into `bounds`.
pub fn sobol_grid_search<F>(space: &ParamSpace, bounds: &SearchBounds, points: usize, objective: F) -> Result<Vec<Ranked>>
where
    F: Fn(&AmaParams) -> Result<f64> + Sync,
{
    if points == 0 {
        return Err(Error::InvalidOptimizer("grid search needs at least one point".into()));
    }
    let mut candidates = vec![space.vcg_theta()];
    candidates.extend(
        sobol_points(space.dim(), points - 1)?
            .iter()
            .map(|u| space.from_unit(u, bounds)),
    );
    let losses = candidates
        .par_iter()
        .map(|theta| objective(&space.params(theta)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rank(candidates.into_iter().zip(losses).collect()))
}
