//! Desk-scale sparse-reward environments and the delayed-reward wrapper.

mod chain;
mod delayed;
mod grid;
mod point_mass;

pub use chain::Chain;
pub use delayed::{Delayed, DelayedState};
pub use grid::SparseGrid;
pub use point_mass::{PointMass, PointMassConfig};

use crate::error::{Result, SorsError};
use crate::mdp::{MdpSpec, Observation, TableReward};

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    /// Environment reward as emitted, after any delay.
    pub sparse_reward: f64,
    /// Hand-designed dense baseline signal; never shown to reward inference.
    pub dense_reward_hand: f64,
    /// Episode over, by termination or by the step cap.
    pub done: bool,
    /// `done` because of the step cap rather than a terminal state.
    pub truncated: bool,
}

pub trait Environment: Send {
    fn name(&self) -> String;

    fn num_actions(&self) -> usize;

    /// Length of every observation's feature vector.
    fn feature_dim(&self) -> usize;

    /// Maximum steps per episode.
    fn step_cap(&self) -> usize;

    fn reset(&mut self) -> Observation;

    /// Errors if called after `done` without an intervening `reset`.
    fn step(&mut self, action: usize) -> Result<StepResult>;

    /// Number of discrete states, `None` for continuous environments.
    fn num_states(&self) -> Option<usize> {
        None
    }

    /// Observation for a discrete state id, for finite environments.
    fn observation_of(&self, _state: usize) -> Option<Observation> {
        None
    }

    /// True when every nonzero sparse reward arrives on the terminating
    /// step, which makes any reward delay a no-op on the reward stream.
    fn rewards_only_on_termination(&self) -> bool {
        false
    }

    /// Dynamics as an [`MdpSpec`] plus the sparse reward table consistent
    /// with `step`.
    fn as_mdp_spec(&self, _gamma: f64) -> Result<(MdpSpec, TableReward)> {
        Err(SorsError::Unsupported(format!(
            "{} has continuous features and no finite MDP form",
            self.name()
        )))
    }

    fn clone_box(&self) -> Box<dyn Environment>;
}

impl Environment for Box<dyn Environment> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn step_cap(&self) -> usize {
        (**self).step_cap()
    }
    fn reset(&mut self) -> Observation {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<StepResult> {
        (**self).step(action)
    }
    fn num_states(&self) -> Option<usize> {
        (**self).num_states()
    }
    fn observation_of(&self, state: usize) -> Option<Observation> {
        (**self).observation_of(state)
    }
    fn rewards_only_on_termination(&self) -> bool {
        (**self).rewards_only_on_termination()
    }
    fn as_mdp_spec(&self, gamma: f64) -> Result<(MdpSpec, TableReward)> {
        (**self).as_mdp_spec(gamma)
    }
    fn clone_box(&self) -> Box<dyn Environment> {
        (**self).clone_box()
    }
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<()> {
    if action < num_actions {
        Ok(())
    } else {
        Err(crate::error::contract(format!(
            "action {action} out of range ({num_actions} actions)"
        )))
    }
}

pub(crate) fn stepped_after_done() -> SorsError {
    crate::error::contract("step called on a finished episode; call reset first")
}

/// Builds the finite MDP of a deterministic environment from its successor
/// function; the sparse reward is 1 on entering the goal.
pub(crate) fn finite_spec(
    num_states: usize,
    num_actions: usize,
    initial: usize,
    goal: usize,
    next: impl Fn(usize, usize) -> usize,
    gamma: f64,
) -> Result<(MdpSpec, TableReward)> {
    let mdp = MdpSpec::deterministic(num_states, num_actions, &next, initial, &[goal], gamma)?;
    let reward = TableReward::from_fn(num_states, num_actions, |s, a| {
        if s != goal && next(s, a) == goal {
            1.0
        } else {
            0.0
        }
    });
    Ok((mdp, reward))
}
