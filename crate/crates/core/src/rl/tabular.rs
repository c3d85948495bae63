use std::io::{Read, Write};

use rand::RngCore;

use super::agent::{Agent, TransitionReward};
use super::replay::{Replay, ReplayTransition};
use crate::error::{contract, Result, SorsError};
use crate::mdp::Observation;
use crate::nn::codec::{read_matrix, write_matrix};
use crate::scalar::soft_max_value;

/// Dense `num_states x num_actions` table of action values.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_snapshot<W: Write + ?Sized>(&self, mut w: &mut W) -> Result<()> {
        write_matrix(&mut w, self.num_states, self.num_actions, &self.values)
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self> {
        let (num_states, num_actions, values) = read_matrix(r)?;
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }
}

fn discrete(obs: &Observation) -> Result<usize> {
    obs.discrete
        .ok_or_else(|| SorsError::Unsupported("tabular backend needs discrete states".into()))
}

/// Entropy-regularised Q-learning update:
/// `Q(s,a) <- (1 - lr) Q(s,a) + lr * (r + gamma * alpha * ln sum exp(Q(s',.) / alpha))`,
/// with the bootstrap term dropped on terminal transitions.
pub fn soft_q_step(
    table: &mut QTable,
    transition: &ReplayTransition,
    reward: f64,
    lr: f64,
    gamma: f64,
    alpha: f64,
) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(contract("temperature must be positive"));
    }
    if !(0.0..=1.0).contains(&lr) {
        return Err(contract("learning rate must lie in [0, 1]"));
    }
    let s = discrete(&transition.state)?;
    let a = transition.action;
    let target = if transition.terminal {
        reward
    } else {
        let next = discrete(&transition.next_state)?;
        reward + gamma * soft_max_value(table.row(next), alpha)
    };
    let q = table.get(s, a);
    table.set(s, a, (1.0 - lr) * q + lr * target);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularConfig {
    pub learning_rate: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Transitions replayed per update.
    pub batch_size: usize,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            alpha: 0.01,
            gamma: 0.99,
            batch_size: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TabularSoftQ {
    table: QTable,
    config: TabularConfig,
}

impl TabularSoftQ {
    pub fn new(num_states: usize, num_actions: usize, config: TabularConfig) -> Self {
        Self {
            table: QTable::zeros(num_states, num_actions),
            config,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut QTable {
        &mut self.table
    }
}

impl Agent for TabularSoftQ {
    fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        let s = discrete(obs)?;
        if s >= self.table.num_states() {
            return Err(contract(format!("state {s} out of range")));
        }
        Ok(self.table.row(s).to_vec())
    }

    fn temperature(&self) -> f64 {
        self.config.alpha
    }

    fn update(&mut self, replay: &Replay, reward: &dyn TransitionReward, rng: &mut dyn RngCore) -> Result<f64> {
        let mut total_td = 0.0;
        let idx = replay.sample_indices(self.config.batch_size, rng);
        for &i in &idx {
            let (tr, recorded) = replay.get(i);
            let r = reward.reward(tr, recorded)?;
            let before = self.table.get(discrete(&tr.state)?, tr.action);
            soft_q_step(
                &mut self.table,
                tr,
                r,
                self.config.learning_rate,
                self.config.gamma,
                self.config.alpha,
            )?;
            total_td += (self.table.get(discrete(&tr.state)?, tr.action) - before).abs();
        }
        Ok(if idx.is_empty() { 0.0 } else { total_td / idx.len() as f64 })
    }

    fn write_snapshot(&self, w: &mut dyn Write) -> Result<()> {
        self.table.write_snapshot(w)
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
