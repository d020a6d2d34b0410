use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real table indexed by `(state, action)`, stored row-major by state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl SaTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        SaTable {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(
                "state-action table",
                num_states * num_actions,
                values.len(),
            ));
        }
        Ok(SaTable {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        SaTable {
            num_states,
            num_actions,
            values,
        }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sum(&self, s: usize) -> f64 {
        self.row(s).iter().sum()
    }

    pub fn dot(&self, other: &SaTable) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &SaTable) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += scale * y;
        }
    }

    pub fn scaled(&self, scale: f64) -> SaTable {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= scale);
        out
    }

    pub fn max_abs_diff(&self, other: &SaTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, what: &'static str, num_states: usize, num_actions: usize) -> Result<()> {
        if self.shape() != (num_states, num_actions) {
            return Err(Error::shape(
                what,
                format!("{num_states}x{num_actions}"),
                format!("{}x{}", self.num_states, self.num_actions),
            ));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for SaTable {
    type Output = f64;

    #[inline]
    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.values[s * self.num_actions + a]
    }
}

impl IndexMut<(usize, usize)> for SaTable {
    #[inline]
    fn index_mut(&mut self, (s, a): (usize, usize)) -> &mut f64 {
        &mut self.values[s * self.num_actions + a]
    }
}

/// Reward table fed to the inner solvers: the combined objective coefficient per state-action pair.
pub type ScalarReward = SaTable;

/// Per-state set of actions the inner solver may choose from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    num_states: usize,
    num_actions: usize,
    allowed: Vec<bool>,
}

impl ActionMask {
    pub fn all(num_states: usize, num_actions: usize) -> Self {
        ActionMask {
            num_states,
            num_actions,
            allowed: vec![true; num_states * num_actions],
        }
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                allowed.push(f(s, a));
            }
        }
        ActionMask {
            num_states,
            num_actions,
            allowed,
        }
    }

    #[inline]
    pub fn allows(&self, s: usize, a: usize) -> bool {
        self.allowed[s * self.num_actions + a]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&b| b).count()
    }

    /// Allowed `(state, action)` pairs in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .filter(|&(s, a)| self.allows(s, a))
            .collect()
    }
}
