use std::io::Write;

use rand::{Rng, RngCore};

use super::agent::{Agent, TransitionReward};
use super::replay::{Replay, ReplayTransition};
use crate::error::{contract, Result};
use crate::mdp::Observation;
use crate::nn::codec::write_mlp;
use crate::nn::{Activation, Adam, AdamConfig, Mlp};
use crate::scalar::soft_max_value;

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralQConfig {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub alpha: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Updates between copies of the online network into the target.
    pub target_period: u64,
}

impl Default for NeuralQConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            adam: AdamConfig::default(),
            alpha: 0.01,
            gamma: 0.99,
            batch_size: 100,
            target_period: 100,
        }
    }
}

/// Soft Q-network over state features with one output per action, trained
/// against a periodically copied target network.
#[derive(Clone, Debug)]
pub struct NeuralQ {
    online: Mlp<f64>,
    target: Mlp<f64>,
    opt: Adam<f64>,
    config: NeuralQConfig,
    updates: u64,
}

impl NeuralQ {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        num_actions: usize,
        config: NeuralQConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if !(config.alpha > 0.0) || config.batch_size == 0 || config.target_period == 0 {
            return Err(contract("neural Q needs alpha > 0, batch size and target period > 0"));
        }
        let mut layers: Vec<(usize, Activation)> = config.hidden.iter().map(|&h| (h, Activation::Relu)).collect();
        layers.push((num_actions, Activation::Identity));
        let online = Mlp::new(feature_dim, &layers, rng)?;
        Ok(Self {
            target: online.clone(),
            opt: Adam::new(online.num_params(), config.adam),
            online,
            config,
            updates: 0,
        })
    }

    pub fn online(&self) -> &Mlp<f64> {
        &self.online
    }

    pub fn target(&self) -> &Mlp<f64> {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn config(&self) -> &NeuralQConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.opt.set_learning_rate(learning_rate);
    }

    /// Soft Bellman regression targets under the target network.
    pub fn targets(&self, minibatch: &[(&ReplayTransition, f64)]) -> Result<Vec<f64>> {
        minibatch
            .iter()
            .map(|&(tr, r)| {
                if tr.terminal {
                    Ok(r)
                } else {
                    let next = self.target.forward(&tr.next_state.features)?;
                    Ok(r + self.config.gamma * soft_max_value(&next, self.config.alpha))
                }
            })
            .collect()
    }

    /// Mean of `0.5 * (Q(s, a) - y)^2` over the batch.
    pub fn loss(&self, minibatch: &[(&ReplayTransition, f64)], targets: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (&(tr, _), &y) in minibatch.iter().zip(targets) {
            let q = self.online.forward(&tr.state.features)?;
            total += 0.5 * (q[tr.action] - y).powi(2);
        }
        Ok(total / minibatch.len() as f64)
    }

    /// One Adam step on the squared soft-Bellman residual with the given
    /// rewards; copies the target every `target_period` updates. Returns the
    /// pre-step loss.
    pub fn neural_q_update(&mut self, minibatch: &[(&ReplayTransition, f64)]) -> Result<f64> {
        let targets = self.targets(minibatch)?;
        self.fit_step(minibatch, &targets)
    }

    /// One Adam step towards fixed regression targets.
    pub fn fit_step(&mut self, minibatch: &[(&ReplayTransition, f64)], targets: &[f64]) -> Result<f64> {
        if minibatch.is_empty() || minibatch.len() != targets.len() {
            return Err(contract("neural update needs a nonempty minibatch with one target each"));
        }
        let n = minibatch.len() as f64;
        let mut grads = vec![0.0; self.online.num_params()];
        let mut loss = 0.0;
        let mut upstream = vec![0.0; self.online.output_dim()];
        for (&(tr, _), &y) in minibatch.iter().zip(targets) {
            let trace = self.online.forward_trace(&tr.state.features)?;
            let err = trace.output()[tr.action] - y;
            loss += 0.5 * err * err;
            upstream.iter_mut().for_each(|u| *u = 0.0);
            upstream[tr.action] = err / n;
            self.online.backward(&trace, &upstream, &mut grads)?;
        }
        self.opt.step(self.online.params_mut(), &grads)?;
        self.updates += 1;
        if self.updates % self.config.target_period == 0 {
            self.target = self.online.clone();
        }
        Ok(loss / n)
    }
}

impl Agent for NeuralQ {
    fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.online.forward(&obs.features)
    }

    fn temperature(&self) -> f64 {
        self.config.alpha
    }

    fn update(&mut self, replay: &Replay, reward: &dyn TransitionReward, rng: &mut dyn RngCore) -> Result<f64> {
        if replay.is_empty() {
            return Ok(0.0);
        }
        let idx = replay.sample_indices(self.config.batch_size, rng);
        let batch = idx
            .iter()
            .map(|&i| {
                let (tr, recorded) = replay.get(i);
                reward.reward(tr, recorded).map(|r| (tr, r))
            })
            .collect::<Result<Vec<_>>>()?;
        self.neural_q_update(&batch)
    }

    /// Online network, then target network, both as MLP blocks.
    fn write_snapshot(&self, w: &mut dyn Write) -> Result<()> {
        let mut w = w;
        write_mlp(&mut w, &self.online)?;
        write_mlp(&mut w, &self.target)
    }

    fn clone_box(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
