use rand::Rng;

use crate::error::{contract, Result};
use crate::mdp::Observation;

/// One environment transition. Rewards are deliberately absent: the
/// learned reward changes during training, so it is evaluated at update
/// time instead.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayTransition {
    pub state: Observation,
    pub action: usize,
    pub next_state: Observation,
    /// True termination; step-cap truncations still bootstrap.
    pub terminal: bool,
}

/// Ring buffer of transitions. A parallel column keeps the reward the
/// environment emitted, read only by the baseline modes that train on the
/// environment's own signal.
#[derive(Clone, Debug)]
pub struct Replay {
    transitions: Vec<ReplayTransition>,
    recorded: Vec<f64>,
    capacity: usize,
    next: usize,
}

impl Replay {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(contract("replay capacity must be positive"));
        }
        Ok(Self {
            transitions: Vec::new(),
            recorded: Vec::new(),
            capacity,
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, transition: ReplayTransition, recorded_reward: f64) {
        if self.transitions.len() < self.capacity {
            self.transitions.push(transition);
            self.recorded.push(recorded_reward);
        } else {
            self.transitions[self.next] = transition;
            self.recorded[self.next] = recorded_reward;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> (&ReplayTransition, f64) {
        (&self.transitions[idx], self.recorded[idx])
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.transitions.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.gen_range(0..self.transitions.len())).collect()
    }
}
