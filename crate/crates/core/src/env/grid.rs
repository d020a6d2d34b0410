//! Discounted gridworld in which agents collect replenishing rewards at goal cells.

use crate::error::{Error, Result};
use crate::mdp::{Horizon, TabularMdp};
use crate::mechanism::RewardProfile;
use crate::table::SaTable;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Cells are indexed `row * side + col`; moves into a wall leave the position unchanged.
#[derive(Clone, Debug)]
pub struct Gridworld {
    side: usize,
    n: usize,
    start: usize,
    mdp: TabularMdp,
}

pub fn build_gridworld(side: usize, n: usize, gamma: f64, start: (usize, usize)) -> Result<Gridworld> {
    if side < 2 {
        return Err(Error::InvalidMdp(format!("gridworld side must be at least 2, got {side}")));
    }
    if side > 256 {
        return Err(Error::InvalidMdp(format!("gridworld side {side} is too large")));
    }
    if n == 0 {
        return Err(Error::InvalidMdp("gridworld needs at least one agent".into()));
    }
    if start.0 >= side || start.1 >= side {
        return Err(Error::InvalidMdp(format!(
            "start cell {start:?} is outside a {side}x{side} grid"
        )));
    }
    let ns = side * side;
    let mut successors = Vec::with_capacity(ns * 4);
    for cell in 0..ns {
        let (r, c) = (cell / side, cell % side);
        for a in 0..4 {
            let (r2, c2) = match a {
                UP => (r.saturating_sub(1), c),
                DOWN => ((r + 1).min(side - 1), c),
                LEFT => (r, c.saturating_sub(1)),
                _ => (r, (c + 1).min(side - 1)),
            };
            successors.push(vec![(r2 * side + c2, 1.0)]);
        }
    }
    let start_cell = start.0 * side + start.1;
    let mut initial = vec![0.0; ns];
    initial[start_cell] = 1.0;
    let mdp = TabularMdp::from_successors(ns, 4, successors, initial, Horizon::Discounted { gamma })?;
    Ok(Gridworld {
        side,
        n,
        start: start_cell,
        mdp,
    })
}

impl Gridworld {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// `r_i(goal_i, a) = value_i` for every action `a`, 0 elsewhere.
    pub fn encode(&self, goals: &[(usize, f64)]) -> Result<RewardProfile> {
        if goals.len() != self.n {
            return Err(Error::shape("agent goals", self.n, goals.len()));
        }
        let ns = self.mdp.num_states();
        let per_agent = goals
            .iter()
            .map(|&(cell, value)| {
                if cell >= ns {
                    return Err(Error::InvalidParams(format!("goal cell {cell} is outside the grid")));
                }
                Ok(SaTable::from_fn(ns, 4, |s, _| if s == cell { value } else { 0.0 }))
            })
            .collect::<Result<Vec<_>>>()?;
        RewardProfile::new(per_agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walls_are_self_loops() {
        let g = build_gridworld(2, 1, 0.9, (0, 0)).unwrap();
        assert_eq!(g.mdp().num_states(), 4);
        assert_eq!(g.mdp().successors(0, UP), &[(0, 1.0)]);
        assert_eq!(g.mdp().successors(0, RIGHT), &[(1, 1.0)]);
        assert_eq!(g.mdp().successors(3, DOWN), &[(3, 1.0)]);
    }

    #[test]
    fn shared_goal_adds_up() {
        let g = build_gridworld(3, 2, 0.9, (0, 0)).unwrap();
        let p = g.encode(&[(4, 0.3), (4, 0.5)]).unwrap();
        assert!((p.total().get(4, 2) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_start() {
        assert!(build_gridworld(3, 1, 0.9, (3, 0)).is_err());
        assert!(build_gridworld(1, 1, 0.9, (0, 0)).is_err());
    }
}
