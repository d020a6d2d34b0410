//! Online assignment of arriving tasks to workers, scored by makespan.

use crate::error::{Error, Result};
use crate::mdp::{Horizon, TabularMdp};
use crate::mechanism::{MarginalEconomies, RewardProfile};
use crate::table::{ActionMask, SaTable};

const MAX_STATES: usize = 1 << 20;

/// Task `τ` (0-based) arrives at time `τ`; action `i` assigns it to worker `i`.
///
/// States are full assignment histories, so the layer-`τ` states are the `n^τ` sequences of
/// workers that received tasks `0..τ`.
#[derive(Clone, Debug)]
pub struct TaskScheduling {
    n: usize,
    tasks: usize,
    mdp: TabularMdp,
    layer_offsets: Vec<usize>,
}

pub fn build_task_scheduling(n: usize, tasks: usize) -> Result<TaskScheduling> {
    if n == 0 || tasks == 0 {
        return Err(Error::InvalidMdp(format!(
            "task scheduling needs n >= 1 and T >= 1, got n={n} T={tasks}"
        )));
    }
    let mut layer_offsets = Vec::with_capacity(tasks + 2);
    let mut total = 0usize;
    let mut width = 1usize;
    for _ in 0..=tasks {
        layer_offsets.push(total);
        total = total
            .checked_add(width)
            .filter(|&t| t <= MAX_STATES)
            .ok_or_else(|| Error::InvalidMdp("task scheduling state space too large".into()))?;
        width = width.saturating_mul(n);
    }
    layer_offsets.push(total);

    let mut successors = Vec::with_capacity(total * n);
    let mut state_layer = Vec::with_capacity(total);
    for tau in 0..=tasks {
        for code in 0..layer_offsets[tau + 1] - layer_offsets[tau] {
            state_layer.push(tau);
            let s = layer_offsets[tau] + code;
            for a in 0..n {
                let next = if tau == tasks {
                    s
                } else {
                    layer_offsets[tau + 1] + code * n + a
                };
                successors.push(vec![(next, 1.0)]);
            }
        }
    }
    let mut initial = vec![0.0; total];
    initial[0] = 1.0;
    let mdp = TabularMdp::from_successors(
        total,
        n,
        successors,
        initial,
        Horizon::Episodic {
            horizon: tasks,
            state_layer,
        },
    )?;
    Ok(TaskScheduling {
        n,
        tasks,
        mdp,
        layer_offsets,
    })
}

/// Largest remaining backlog right after the last assignment.
///
/// Rounds have unit length and every worker works through its own backlog at unit rate, so
/// between consecutive arrivals each backlog shrinks by one (never below zero).
/// `durations[i][τ]` is worker `i`'s time for task `τ`.
pub fn makespan(durations: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let mut backlog = vec![0.0_f64; durations.len()];
    for (tau, &worker) in assignment.iter().enumerate() {
        if tau > 0 {
            backlog.iter_mut().for_each(|b| *b = (*b - 1.0).max(0.0));
        }
        backlog[worker] += durations[worker][tau];
    }
    backlog.into_iter().fold(0.0, f64::max)
}

impl TaskScheduling {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn num_workers(&self) -> usize {
        self.n
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks
    }

    /// Layer and assignment history of state `s`.
    pub fn history(&self, s: usize) -> (usize, Vec<usize>) {
        let tau = self.layer_offsets.partition_point(|&o| o <= s) - 1;
        let mut code = s - self.layer_offsets[tau];
        let mut hist = vec![0; tau];
        for slot in hist.iter_mut().rev() {
            *slot = code % self.n;
            code /= self.n;
        }
        (tau, hist)
    }

    /// Terminal state reached by a complete assignment.
    pub fn state_of(&self, history: &[usize]) -> Option<usize> {
        if history.len() > self.tasks || history.iter().any(|&w| w >= self.n) {
            return None;
        }
        let code = history.iter().fold(0, |c, &w| c * self.n + w);
        Some(self.layer_offsets[history.len()] + code)
    }

    fn check_durations(&self, durations: &[Vec<f64>]) -> Result<()> {
        if durations.len() != self.n {
            return Err(Error::shape("worker durations", self.n, durations.len()));
        }
        for d in durations {
            if d.len() != self.tasks {
                return Err(Error::shape("task durations", self.tasks, d.len()));
            }
            if d.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("task durations"));
            }
        }
        Ok(())
    }

    /// `r_i(s, i) = −durations[i][τ]` at the layer-`τ` states, 0 elsewhere.
    pub fn encode(&self, durations: &[Vec<f64>]) -> Result<RewardProfile> {
        self.check_durations(durations)?;
        let ns = self.mdp.num_states();
        let per_agent = (0..self.n)
            .map(|i| {
                SaTable::from_fn(ns, self.n, |s, a| match self.mdp.layer_of(s) {
                    Some(tau) if a == i && tau < self.tasks => -durations[i][tau],
                    _ => 0.0,
                })
            })
            .collect();
        RewardProfile::new(per_agent)
    }

    /// Cost table `q` with `q · ν` equal to the expected makespan of the induced assignment.
    pub fn makespan_cost(&self, durations: &[Vec<f64>]) -> Result<SaTable> {
        self.check_durations(durations)?;
        let mut q = SaTable::zeros(self.mdp.num_states(), self.n);
        let last = self.tasks - 1;
        for s in self.layer_offsets[last]..self.layer_offsets[last + 1] {
            let (_, mut hist) = self.history(s);
            for a in 0..self.n {
                hist.push(a);
                q.set(s, a, makespan(durations, &hist));
                hist.pop();
            }
        }
        Ok(q)
    }

    /// In agent `i`'s marginal economy no task may go to `i`. With a single worker the marginal
    /// economy is left unrestricted since some worker must take every task.
    pub fn marginals(&self) -> MarginalEconomies {
        if self.n < 2 {
            return MarginalEconomies::unrestricted(self.n);
        }
        let masks = (0..self.n)
            .map(|i| {
                ActionMask::from_fn(self.mdp.num_states(), self.n, |s, a| {
                    self.mdp.is_terminal(s) || a != i
                })
            })
            .collect();
        MarginalEconomies::restricted(masks)
    }
}
