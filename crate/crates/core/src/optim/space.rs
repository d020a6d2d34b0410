use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mechanism::{AmaParams, DEFAULT_WEIGHT_FLOOR};
use crate::regularized::AmaGradient;
use crate::table::SaTable;

/// Box from which grid candidates are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBounds {
    pub boost_lo: f64,
    pub boost_hi: f64,
    pub weight_lo: f64,
    pub weight_hi: f64,
}

impl SearchBounds {
    /// Boosts in `±H·v̄` and weights in `[floor, 2]`.
    pub fn default_for(env: &Environment) -> Self {
        let scale = env.horizon_scale() * env.distribution().max_value();
        SearchBounds {
            boost_lo: -scale,
            boost_hi: scale,
            weight_lo: DEFAULT_WEIGHT_FLOOR,
            weight_hi: 2.0,
        }
    }

    pub fn validate(&self, weight_floor: f64) -> Result<()> {
        let finite = [self.boost_lo, self.boost_hi, self.weight_lo, self.weight_hi]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("bounds", "all bounds must be finite"));
        }
        if self.boost_lo >= self.boost_hi {
            return Err(Error::config("bounds.boost_lo", "boost_lo must be below boost_hi"));
        }
        if self.weight_lo >= self.weight_hi {
            return Err(Error::config("bounds.weight_lo", "weight_lo must be below weight_hi"));
        }
        if self.weight_lo < weight_floor {
            return Err(Error::config(
                "bounds.weight_lo",
                format!("weight_lo must be at least the weight floor {weight_floor}"),
            ));
        }
        Ok(())
    }
}

/// Flat coordinates `θ = (boosts on free entries, weights if free)` of an affine maximizer.
#[derive(Clone, Debug)]
pub struct ParamSpace {
    num_agents: usize,
    shape: (usize, usize),
    boost_entries: Vec<(usize, usize)>,
    free_weights: bool,
    weight_floor: f64,
}

impl ParamSpace {
    pub fn new(env: &Environment, free_weights: bool) -> Self {
        ParamSpace {
            num_agents: env.num_agents(),
            shape: (env.mdp().num_states(), env.mdp().num_actions()),
            boost_entries: env.boost_mask().entries(),
            free_weights,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn dim(&self) -> usize {
        self.boost_entries.len() + if self.free_weights { self.num_agents } else { 0 }
    }

    pub fn free_weights(&self) -> bool {
        self.free_weights
    }

    pub fn boost_entries(&self) -> &[(usize, usize)] {
        &self.boost_entries
    }

    pub fn params(&self, theta: &[f64]) -> Result<AmaParams> {
        if theta.len() != self.dim() {
            return Err(Error::shape("parameter vector", self.dim(), theta.len()));
        }
        let mut boosts = SaTable::zeros(self.shape.0, self.shape.1);
        for (&(s, a), &v) in self.boost_entries.iter().zip(theta) {
            boosts.set(s, a, v);
        }
        let weights = if self.free_weights {
            theta[self.boost_entries.len()..].to_vec()
        } else {
            vec![1.0; self.num_agents]
        };
        let params = AmaParams {
            weights,
            boosts,
            weight_floor: self.weight_floor,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn theta(&self, params: &AmaParams) -> Vec<f64> {
        let mut theta: Vec<f64> = self
            .boost_entries
            .iter()
            .map(|&(s, a)| params.boosts.get(s, a))
            .collect();
        if self.free_weights {
            theta.extend_from_slice(&params.weights);
        }
        theta
    }

    /// θ of the VCG mechanism.
    pub fn vcg_theta(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.boost_entries.len()];
        if self.free_weights {
            theta.extend(std::iter::repeat(1.0).take(self.num_agents));
        }
        theta
    }

    /// Affine image of a point of the unit cube in the search box.
    pub fn from_unit(&self, u: &[f64], bounds: &SearchBounds) -> Vec<f64> {
        let nb = self.boost_entries.len();
        u.iter()
            .enumerate()
            .map(|(k, &x)| {
                let (lo, hi) = if k < nb {
                    (bounds.boost_lo, bounds.boost_hi)
                } else {
                    (bounds.weight_lo, bounds.weight_hi)
                };
                lo + x * (hi - lo)
            })
            .collect()
    }

    /// Clamps weight coordinates to `[weight_floor, ∞)`.
    pub fn project(&self, theta: &mut [f64]) {
        if self.free_weights {
            let nb = self.boost_entries.len();
            for w in &mut theta[nb..] {
                *w = w.max(self.weight_floor);
            }
        }
    }

    /// Restriction of a full gradient to the free coordinates.
    pub fn gradient_theta(&self, grad: &AmaGradient) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .boost_entries
            .iter()
            .map(|&(s, a)| grad.boosts.get(s, a))
            .collect();
        if self.free_weights {
            g.extend_from_slice(&grad.weights);
        }
        g
    }
}
