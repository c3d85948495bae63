use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;

use rand::RngCore;

use super::policy::{greedy_action, sample_boltzmann};
use super::replay::{Replay, ReplayTransition};
use crate::error::Result;
use crate::mdp::Observation;
use crate::reward::RewardEnsemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    /// Sample from the Boltzmann distribution `exp(Q / alpha)`.
    Explore,
    /// Lowest-index argmax.
    Greedy,
}

/// Reward attached to a replayed transition at update time.
pub trait TransitionReward {
    fn reward(&self, transition: &ReplayTransition, recorded: f64) -> Result<f64>;
}

/// The reward the environment emitted, for the baseline modes.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecordedReward;

impl TransitionReward for RecordedReward {
    fn reward(&self, _transition: &ReplayTransition, recorded: f64) -> Result<f64> {
        Ok(recorded)
    }
}

/// `r_theta(s, a)` from the live ensemble. The ensemble is borrowed
/// immutably, so it cannot change while this value exists; values for
/// discrete states are memoised for that lifetime.
pub struct LearnedReward<'a> {
    ensemble: &'a RewardEnsemble<f64>,
    memo: RefCell<HashMap<(usize, usize), f64>>,
}

impl<'a> LearnedReward<'a> {
    pub fn new(ensemble: &'a RewardEnsemble<f64>) -> Self {
        Self {
            ensemble,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn evaluate(&self, obs: &Observation, action: usize) -> Result<f64> {
        let Some(s) = obs.discrete else {
            return self.ensemble.reward_for(&obs.features, action);
        };
        if let Some(&v) = self.memo.borrow().get(&(s, action)) {
            return Ok(v);
        }
        let v = self.ensemble.reward_for(&obs.features, action)?;
        self.memo.borrow_mut().insert((s, action), v);
        Ok(v)
    }
}

impl TransitionReward for LearnedReward<'_> {
    fn reward(&self, transition: &ReplayTransition, _recorded: f64) -> Result<f64> {
        self.evaluate(&transition.state, transition.action)
    }
}

/// Value-based backend plugged into the training loop.
pub trait Agent: Send {
    fn q_values(&self, obs: &Observation) -> Result<Vec<f64>>;

    /// Exploration temperature.
    fn temperature(&self) -> f64;

    fn act(&self, obs: &Observation, mode: ActMode, rng: &mut dyn RngCore) -> Result<usize> {
        let q = self.q_values(obs)?;
        Ok(match mode {
            ActMode::Greedy => greedy_action(&q),
            ActMode::Explore => sample_boltzmann(&q, self.temperature(), rng),
        })
    }

    /// One update from a minibatch drawn out of `replay`; returns a scalar
    /// progress statistic (loss or mean absolute change).
    fn update(&mut self, replay: &Replay, reward: &dyn TransitionReward, rng: &mut dyn RngCore) -> Result<f64>;

    fn write_snapshot(&self, w: &mut dyn Write) -> Result<()>;

    fn clone_box(&self) -> Box<dyn Agent>;
}
