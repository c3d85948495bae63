use super::{Environment, StepResult};
use crate::error::{contract, Result, SorsError};
use crate::mdp::{MdpSpec, Observation, TableReward};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedState {
    pub accumulator: f64,
    pub steps_since_emit: usize,
    pub period: usize,
}

/// Accumulates the wrapped environment's sparse reward and emits the sum
/// every `period` steps or when the episode ends, whichever comes first.
/// The hand-designed dense channel passes through undelayed.
#[derive(Clone, Debug)]
pub struct Delayed<E> {
    inner: E,
    state: DelayedState,
}

impl<E: Environment> Delayed<E> {
    pub fn new(inner: E, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(contract("delay period must be at least 1"));
        }
        Ok(Self {
            inner,
            state: DelayedState {
                accumulator: 0.0,
                steps_since_emit: 0,
                period,
            },
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn state(&self) -> DelayedState {
        self.state
    }
}

impl<E: Environment + Clone + 'static> Environment for Delayed<E> {
    fn name(&self) -> String {
        format!("{}-delay{}", self.inner.name(), self.state.period)
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn step_cap(&self) -> usize {
        self.inner.step_cap()
    }

    fn reset(&mut self) -> Observation {
        self.state.accumulator = 0.0;
        self.state.steps_since_emit = 0;
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        let mut result = self.inner.step(action)?;
        self.state.accumulator += result.sparse_reward;
        self.state.steps_since_emit += 1;
        if self.state.steps_since_emit == self.state.period || result.done {
            result.sparse_reward = self.state.accumulator;
            self.state.accumulator = 0.0;
            self.state.steps_since_emit = 0;
        } else {
            result.sparse_reward = 0.0;
        }
        Ok(result)
    }

    fn num_states(&self) -> Option<usize> {
        self.inner.num_states()
    }

    fn observation_of(&self, state: usize) -> Option<Observation> {
        self.inner.observation_of(state)
    }

    fn rewards_only_on_termination(&self) -> bool {
        self.inner.rewards_only_on_termination()
    }

    /// The delayed stream is history dependent, so a Markov reward table
    /// exists only when the delay cannot move any reward.
    fn as_mdp_spec(&self, gamma: f64) -> Result<(MdpSpec, TableReward)> {
        if self.state.period == 1 || self.inner.rewards_only_on_termination() {
            self.inner.as_mdp_spec(gamma)
        } else {
            Err(SorsError::Unsupported(
                "delayed rewards of this environment are not Markov in the state".into(),
            ))
        }
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
