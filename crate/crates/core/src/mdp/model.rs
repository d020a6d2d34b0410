use crate::error::{Error, Result};
use crate::table::ActionMask;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Time structure of an MDP.
#[derive(Clone, Debug, PartialEq)]
pub enum Horizon {
    /// `horizon` decision layers; `state_layer[s]` is the time step encoded in state `s`.
    /// States in layer `horizon` are terminal: they absorb and carry no occupancy mass.
    Episodic {
        horizon: usize,
        state_layer: Vec<usize>,
    },
    Discounted {
        gamma: f64,
    },
}

/// Finite MDP with a known transition kernel, stored as sparse successor lists.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    succ_offsets: Vec<usize>,
    succ: Vec<(usize, f64)>,
    initial: Vec<f64>,
    horizon: Horizon,
    /// Episodic only: states grouped by layer, `layers[horizon]` holds the terminal states.
    layers: Vec<Vec<usize>>,
}

impl TabularMdp {
    /// Builds from a dense kernel laid out as `transition[(s * A + a) * S + s']`.
    pub fn from_dense(
        num_states: usize,
        num_actions: usize,
        transition: &[f64],
        initial: Vec<f64>,
        horizon: Horizon,
    ) -> Result<Self> {
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::shape(
                "transition kernel",
                num_states * num_actions * num_states,
                transition.len(),
            ));
        }
        let successors = (0..num_states * num_actions)
            .map(|sa| {
                transition[sa * num_states..(sa + 1) * num_states]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(s2, &p)| (s2, p))
                    .collect()
            })
            .collect();
        Self::from_successors(num_states, num_actions, successors, initial, horizon)
    }

    /// Builds from one successor list per `(s, a)` pair in row-major order.
    pub fn from_successors(
        num_states: usize,
        num_actions: usize,
        successors: Vec<Vec<(usize, f64)>>,
        initial: Vec<f64>,
        horizon: Horizon,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("state and action counts must be positive".into()));
        }
        if successors.len() != num_states * num_actions {
            return Err(Error::shape(
                "successor lists",
                num_states * num_actions,
                successors.len(),
            ));
        }
        if initial.len() != num_states {
            return Err(Error::shape("initial distribution", num_states, initial.len()));
        }

        let mut succ_offsets = Vec::with_capacity(successors.len() + 1);
        let mut succ = Vec::new();
        succ_offsets.push(0);
        for (sa, row) in successors.into_iter().enumerate() {
            let (s, a) = (sa / num_actions, sa % num_actions);
            let mut total = 0.0;
            for (s2, p) in row {
                if s2 >= num_states {
                    return Err(Error::InvalidMdp(format!(
                        "transition ({s},{a}) targets state {s2} out of range"
                    )));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidMdp(format!(
                        "transition ({s},{a})->{s2} has invalid probability {p}"
                    )));
                }
                if p > 0.0 {
                    succ.push((s2, p));
                }
                total += p;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMdp(format!(
                    "transition row ({s},{a}) sums to {total}"
                )));
            }
            succ_offsets.push(succ.len());
        }

        check_distribution(&initial)?;

        let mut mdp = TabularMdp {
            num_states,
            num_actions,
            succ_offsets,
            succ,
            initial,
            horizon,
            layers: Vec::new(),
        };
        mdp.layers = mdp.validate_horizon()?;
        Ok(mdp)
    }

    fn validate_horizon(&self) -> Result<Vec<Vec<usize>>> {
        match &self.horizon {
            Horizon::Discounted { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0 && *gamma < 1.0) {
                    return Err(Error::InvalidMdp(format!("discount {gamma} outside (0,1)")));
                }
                Ok(Vec::new())
            }
            Horizon::Episodic {
                horizon,
                state_layer,
            } => {
                let horizon = *horizon;
                if horizon == 0 {
                    return Err(Error::InvalidMdp("episodic horizon must be positive".into()));
                }
                if state_layer.len() != self.num_states {
                    return Err(Error::shape("state layers", self.num_states, state_layer.len()));
                }
                let mut layers = vec![Vec::new(); horizon + 1];
                for (s, &t) in state_layer.iter().enumerate() {
                    if t > horizon {
                        return Err(Error::InvalidMdp(format!(
                            "state {s} has layer {t} beyond horizon {horizon}"
                        )));
                    }
                    layers[t].push(s);
                }
                for (s, &p) in self.initial.iter().enumerate() {
                    if p > 0.0 && state_layer[s] != 0 {
                        return Err(Error::InvalidMdp(format!(
                            "initial mass on state {s} outside layer 0"
                        )));
                    }
                }
                for s in 0..self.num_states {
                    let t = state_layer[s];
                    for a in 0..self.num_actions {
                        for &(s2, _) in self.successors(s, a) {
                            let ok = if t == horizon {
                                s2 == s
                            } else {
                                state_layer[s2] == t + 1
                            };
                            if !ok {
                                return Err(Error::InvalidMdp(format!(
                                    "transition ({s},{a})->{s2} breaks the layer order (layers {t} -> {})",
                                    state_layer[s2]
                                )));
                            }
                        }
                    }
                }
                Ok(layers)
            }
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

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn is_episodic(&self) -> bool {
        matches!(self.horizon, Horizon::Episodic { .. })
    }

    /// Discount applied in the flow constraint: 1 for episodic MDPs.
    pub fn gamma_eff(&self) -> f64 {
        match self.horizon {
            Horizon::Episodic { .. } => 1.0,
            Horizon::Discounted { gamma } => gamma,
        }
    }

    /// Total visitation mass of any feasible occupancy measure.
    pub fn total_mass(&self) -> f64 {
        match self.horizon {
            Horizon::Episodic { horizon, .. } => horizon as f64,
            Horizon::Discounted { gamma } => 1.0 / (1.0 - gamma),
        }
    }

    /// Episodic decision layers (terminal layer excluded) in time order.
    pub fn decision_layers(&self) -> &[Vec<usize>] {
        match self.horizon {
            Horizon::Episodic { horizon, .. } => &self.layers[..horizon],
            Horizon::Discounted { .. } => &[],
        }
    }

    pub fn layer_of(&self, s: usize) -> Option<usize> {
        match &self.horizon {
            Horizon::Episodic { state_layer, .. } => Some(state_layer[s]),
            Horizon::Discounted { .. } => None,
        }
    }

    /// Terminal states absorb and never carry occupancy mass.
    pub fn is_terminal(&self, s: usize) -> bool {
        match &self.horizon {
            Horizon::Episodic {
                horizon,
                state_layer,
            } => state_layer[s] == *horizon,
            Horizon::Discounted { .. } => false,
        }
    }

    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        let sa = s * self.num_actions + a;
        &self.succ[self.succ_offsets[sa]..self.succ_offsets[sa + 1]]
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .filter(|(t, _)| *t == s2)
            .map(|(_, p)| p)
            .sum()
    }

    /// Time horizon used for scaling boost boxes: `T` episodic, `1/(1-gamma)` discounted.
    pub fn effective_horizon(&self) -> f64 {
        self.total_mass()
    }

    pub(crate) fn check_mask(&self, mask: &ActionMask) -> Result<()> {
        if mask.shape() != (self.num_states, self.num_actions) {
            return Err(Error::shape(
                "action mask",
                format!("{}x{}", self.num_states, self.num_actions),
                format!("{}x{}", mask.shape().0, mask.shape().1),
            ));
        }
        for s in 0..self.num_states {
            if self.is_terminal(s) {
                continue;
            }
            if !(0..self.num_actions).any(|a| mask.allows(s, a)) {
                return Err(Error::InvalidMdp(format!("action mask leaves state {s} without actions")));
            }
        }
        Ok(())
    }
}

fn check_distribution(initial: &[f64]) -> Result<()> {
    let mut total = 0.0;
    for (s, &p) in initial.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidMdp(format!("initial mass {p} on state {s}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidMdp(format!("initial distribution sums to {total}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer(targets: [usize; 2]) -> Result<TabularMdp> {
        // state 0 in layer 0, states 1, 2 terminal
        let successors = vec![
            vec![(targets[0], 1.0)],
            vec![(targets[1], 1.0)],
            vec![(1, 1.0)],
            vec![(1, 1.0)],
            vec![(2, 1.0)],
            vec![(2, 1.0)],
        ];
        TabularMdp::from_successors(
            3,
            2,
            successors,
            vec![1.0, 0.0, 0.0],
            Horizon::Episodic {
                horizon: 1,
                state_layer: vec![0, 1, 1],
            },
        )
    }

    #[test]
    fn accepts_forward_layering() {
        let mdp = two_layer([1, 2]).unwrap();
        assert_eq!(mdp.total_mass(), 1.0);
        assert!(mdp.is_terminal(2));
        assert_eq!(mdp.decision_layers(), &[vec![0]]);
    }

    #[test]
    fn rejects_backward_edge() {
        assert!(two_layer([0, 2]).is_err());
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let err = TabularMdp::from_successors(
            1,
            1,
            vec![vec![(0, 0.5)]],
            vec![1.0],
            Horizon::Discounted { gamma: 0.9 },
        );
        assert!(matches!(err, Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn rejects_bad_initial_and_gamma() {
        let sel = |init: Vec<f64>, gamma| {
            TabularMdp::from_successors(
                1,
                1,
                vec![vec![(0, 1.0)]],
                init,
                Horizon::Discounted { gamma },
            )
        };
        assert!(sel(vec![0.9], 0.9).is_err());
        assert!(sel(vec![1.0], 1.0).is_err());
        assert!(sel(vec![-0.0 + 1.0], 0.5).is_ok());
    }

    #[test]
    fn dense_round_trips_probabilities() {
        let mdp = TabularMdp::from_dense(
            2,
            1,
            &[0.25, 0.75, 0.0, 1.0],
            vec![1.0, 0.0],
            Horizon::Discounted { gamma: 0.5 },
        )
        .unwrap();
        assert_eq!(mdp.prob(0, 0, 1), 0.75);
        assert_eq!(mdp.prob(1, 0, 0), 0.0);
    }
}
