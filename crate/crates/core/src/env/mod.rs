//! The three benchmark settings, their type distributions and profile encoders.

mod grid;
mod sales;
mod tasks;

pub use grid::{build_gridworld, Gridworld, DOWN, LEFT, RIGHT, UP};
pub use sales::{build_sequential_sales, SequentialSales};
pub use tasks::{build_task_scheduling, makespan, TaskScheduling};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::mechanism::{LossSpec, MarginalEconomies, RewardProfile};
use crate::table::{ActionMask, SaTable};

fn default_gamma() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    SequentialSales {
        n: usize,
        m: usize,
    },
    TaskScheduling {
        n: usize,
        tasks: usize,
    },
    Gridworld {
        side: usize,
        n: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        /// `[row, col]`
        #[serde(default)]
        start: [usize; 2],
    },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::SequentialSales { .. } => "sequential_sales",
            EnvSpec::TaskScheduling { .. } => "task_scheduling",
            EnvSpec::Gridworld { .. } => "gridworld",
        }
    }

    pub fn num_agents(&self) -> usize {
        match *self {
            EnvSpec::SequentialSales { n, .. }
            | EnvSpec::TaskScheduling { n, .. }
            | EnvSpec::Gridworld { n, .. } => n,
        }
    }

    /// Size parameter reported next to `n`: items, tasks or grid side.
    pub fn size(&self) -> usize {
        match *self {
            EnvSpec::SequentialSales { m, .. } => m,
            EnvSpec::TaskScheduling { tasks, .. } => tasks,
            EnvSpec::Gridworld { side, .. } => side,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Every type entry i.i.d. uniform on `[lo, hi]`.
    UniformSymmetric { lo: f64, hi: f64 },
    /// Agent `i`'s entries uniform on `[0, hi[i]]`.
    UniformAsymmetric { hi: Vec<f64> },
    /// Goal uniform over the cells other than the start, value uniform on `[0, 1]`.
    GridworldGoal,
}

impl DistributionSpec {
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, DistributionSpec::UniformAsymmetric { .. })
    }

    pub fn max_value(&self) -> f64 {
        match self {
            DistributionSpec::UniformSymmetric { hi, .. } => *hi,
            DistributionSpec::UniformAsymmetric { hi } => hi.iter().copied().fold(0.0, f64::max),
            DistributionSpec::GridworldGoal => 1.0,
        }
    }

    fn support(&self, agent: usize) -> (f64, f64) {
        match self {
            DistributionSpec::UniformSymmetric { lo, hi } => (*lo, *hi),
            DistributionSpec::UniformAsymmetric { hi } => (0.0, hi[agent]),
            DistributionSpec::GridworldGoal => (0.0, 1.0),
        }
    }

    fn validate(&self, num_agents: usize) -> Result<()> {
        match self {
            DistributionSpec::UniformSymmetric { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::config(
                        "distribution",
                        format!("need finite lo < hi, got lo={lo} hi={hi}"),
                    ));
                }
            }
            DistributionSpec::UniformAsymmetric { hi } => {
                if hi.len() != num_agents {
                    return Err(Error::config(
                        "distribution.hi",
                        format!("expected {num_agents} entries, got {}", hi.len()),
                    ));
                }
                if let Some(bad) = hi.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
                    return Err(Error::config("distribution.hi", format!("entries must be positive, got {bad}")));
                }
            }
            DistributionSpec::GridworldGoal => {}
        }
        Ok(())
    }
}

/// Private type of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    /// Value for one item.
    Value(f64),
    /// Processing time of every task.
    Durations(Vec<f64>),
    Goal { cell: usize, value: f64 },
}

/// One sampled type profile and everything the mechanism needs from it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub types: Vec<AgentType>,
    pub profile: RewardProfile,
    /// Linear makespan cost, task scheduling only.
    pub makespan_cost: Option<SaTable>,
}

impl Sample {
    pub fn loss_cost(&self, loss: LossSpec) -> Option<&SaTable> {
        match loss {
            LossSpec::Makespan => self.makespan_cost.as_ref(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layout {
    Sales(SequentialSales),
    Tasks(TaskScheduling),
    Grid(Gridworld),
}

/// A built environment paired with its type distribution.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    distribution: DistributionSpec,
    layout: Layout,
    marginals: MarginalEconomies,
    boost_mask: ActionMask,
}

impl Environment {
    pub fn new(spec: &EnvSpec, distribution: &DistributionSpec) -> Result<Self> {
        let layout = match *spec {
            EnvSpec::SequentialSales { n, m } => Layout::Sales(build_sequential_sales(n, m)?),
            EnvSpec::TaskScheduling { n, tasks } => Layout::Tasks(build_task_scheduling(n, tasks)?),
            EnvSpec::Gridworld { side, n, gamma, start } => {
                Layout::Grid(build_gridworld(side, n, gamma, (start[0], start[1]))?)
            }
        };
        let grid_env = matches!(layout, Layout::Grid(_));
        let grid_dist = matches!(distribution, DistributionSpec::GridworldGoal);
        if grid_env != grid_dist {
            return Err(Error::config(
                "distribution",
                format!("distribution does not fit environment `{}`", spec.name()),
            ));
        }
        distribution.validate(spec.num_agents())?;
        let marginals = match &layout {
            Layout::Tasks(t) => t.marginals(),
            _ => MarginalEconomies::unrestricted(spec.num_agents()),
        };
        let mdp = match &layout {
            Layout::Sales(e) => e.mdp(),
            Layout::Tasks(e) => e.mdp(),
            Layout::Grid(e) => e.mdp(),
        };
        let boost_mask = ActionMask::from_fn(mdp.num_states(), mdp.num_actions(), |s, _| !mdp.is_terminal(s));
        Ok(Environment {
            spec: spec.clone(),
            distribution: distribution.clone(),
            layout,
            marginals,
            boost_mask,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn distribution(&self) -> &DistributionSpec {
        &self.distribution
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn mdp(&self) -> &TabularMdp {
        match &self.layout {
            Layout::Sales(e) => e.mdp(),
            Layout::Tasks(e) => e.mdp(),
            Layout::Grid(e) => e.mdp(),
        }
    }

    pub fn marginals(&self) -> &MarginalEconomies {
        &self.marginals
    }

    /// Entries that carry a free boost: every action of every non-terminal state.
    pub fn boost_mask(&self) -> &ActionMask {
        &self.boost_mask
    }

    pub fn num_agents(&self) -> usize {
        self.spec.num_agents()
    }

    /// Horizon length `T` for episodic settings, `1/(1−γ)` for discounted ones.
    pub fn horizon_scale(&self) -> f64 {
        self.mdp().effective_horizon()
    }

    pub fn supports_loss(&self, loss: LossSpec) -> bool {
        loss != LossSpec::Makespan || matches!(self.layout, Layout::Tasks(_))
    }

    pub fn sample_agent<R: Rng + ?Sized>(&self, agent: usize, rng: &mut R) -> AgentType {
        let (lo, hi) = self.distribution.support(agent);
        match &self.layout {
            Layout::Sales(_) => AgentType::Value(rng.gen_range(lo..hi)),
            Layout::Tasks(t) => AgentType::Durations((0..t.num_tasks()).map(|_| rng.gen_range(lo..hi)).collect()),
            Layout::Grid(g) => {
                let cells = g.side() * g.side();
                let mut cell = rng.gen_range(0..cells - 1);
                if cell >= g.start() {
                    cell += 1;
                }
                AgentType::Goal {
                    cell,
                    value: rng.gen_range(lo..hi),
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sample> {
        let types = (0..self.num_agents()).map(|i| self.sample_agent(i, rng)).collect();
        self.encode(types)
    }

    pub fn encode(&self, types: Vec<AgentType>) -> Result<Sample> {
        if types.len() != self.num_agents() {
            return Err(Error::shape("agent types", self.num_agents(), types.len()));
        }
        let mismatch = || Error::InvalidParams(format!("agent type does not fit `{}`", self.spec.name()));
        let (profile, makespan_cost) = match &self.layout {
            Layout::Sales(e) => {
                let values = types
                    .iter()
                    .map(|t| match t {
                        AgentType::Value(v) => Ok(*v),
                        _ => Err(mismatch()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                (e.encode(&values)?, None)
            }
            Layout::Tasks(e) => {
                let durations = types
                    .iter()
                    .map(|t| match t {
                        AgentType::Durations(d) => Ok(d.clone()),
                        _ => Err(mismatch()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                (e.encode(&durations)?, Some(e.makespan_cost(&durations)?))
            }
            Layout::Grid(e) => {
                let goals = types
                    .iter()
                    .map(|t| match t {
                        AgentType::Goal { cell, value } => Ok((*cell, *value)),
                        _ => Err(mismatch()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                (e.encode(&goals)?, None)
            }
        };
        Ok(Sample {
            types,
            profile,
            makespan_cost,
        })
    }
}
