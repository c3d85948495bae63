//! Learned dense reward: an ensemble of MLP trunks with unit-norm linear
//! heads, trained with a pairwise logistic loss on trajectory preferences.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;

use crate::buffer::{LabeledPair, Preference};
use crate::error::{contract, Result, SorsError};
use crate::mdp::{Observation, RewardFn, Trajectory};
use crate::nn::codec::{read_matrix, read_mlp, read_u32, write_matrix, write_mlp, write_u32};
use crate::nn::{Activation, Adam, AdamConfig, Mlp};
use crate::scalar::{logistic, softplus, Scalar};

/// `P(i preferred over j) = exp(R_i) / (exp(R_i) + exp(R_j))`, evaluated as
/// the logistic of `R_i - R_j`.
pub fn pair_probability<T: Scalar>(return_i: T, return_j: T) -> Result<T> {
    if !return_i.is_finite() || !return_j.is_finite() {
        return Err(contract("pair probability of non-finite returns"));
    }
    Ok(logistic(return_i - return_j))
}

/// How learned returns are accumulated inside the pairwise loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReturnMode {
    Discounted(f64),
    Undiscounted,
}

impl ReturnMode {
    fn gamma(self) -> f64 {
        match self {
            ReturnMode::Discounted(g) => g,
            ReturnMode::Undiscounted => 1.0,
        }
    }
}

/// Maps `(state features, action)` to the model input: the features
/// followed by a one-hot action code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputEncoder {
    pub state_dim: usize,
    pub num_actions: usize,
}

impl InputEncoder {
    pub fn new(state_dim: usize, num_actions: usize) -> Self {
        Self {
            state_dim,
            num_actions,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.num_actions
    }

    pub fn encode<T: Scalar>(&self, features: &[f64], action: usize) -> Result<Vec<T>> {
        if features.len() != self.state_dim {
            return Err(SorsError::DimensionMismatch {
                expected: self.state_dim,
                actual: features.len(),
            });
        }
        if action >= self.num_actions {
            return Err(contract(format!("action {action} out of range")));
        }
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend(features.iter().map(|&f| T::lit(f)));
        input.extend((0..self.num_actions).map(|a| if a == action { T::one() } else { T::zero() }));
        Ok(input)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub ensemble_size: usize,
    pub adam: AdamConfig,
    pub return_mode: ReturnMode,
}

impl Default for RewardModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            feature_dim: 4,
            ensemble_size: 4,
            adam: AdamConfig::default(),
            return_mode: ReturnMode::Discounted(0.99),
        }
    }
}

/// `r(x) = w . phi(x)` with a tanh trunk `phi` and `|w| = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNet<T> {
    trunk: Mlp<T>,
    head: Vec<T>,
}

impl<T: Scalar> RewardNet<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], feature_dim: usize, rng: &mut R) -> Result<Self> {
        let layers: Vec<(usize, Activation)> = hidden
            .iter()
            .chain(std::iter::once(&feature_dim))
            .map(|&n| (n, Activation::Tanh))
            .collect();
        let trunk = Mlp::new(input_dim, &layers, rng)?;
        let mut head: Vec<T> = (0..feature_dim).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        if normalize(&mut head).is_err() {
            head = vec![T::zero(); feature_dim];
            head[0] = T::one();
        }
        Ok(Self { trunk, head })
    }

    /// Builds a net from an explicit trunk and head; the head is normalised.
    pub fn from_parts(trunk: Mlp<T>, mut head: Vec<T>) -> Result<Self> {
        if head.len() != trunk.output_dim() {
            return Err(SorsError::DimensionMismatch {
                expected: trunk.output_dim(),
                actual: head.len(),
            });
        }
        normalize(&mut head)?;
        Ok(Self { trunk, head })
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp<T> {
        &mut self.trunk
    }

    pub fn head(&self) -> &[T] {
        &self.head
    }

    pub fn reward(&self, input: &[T]) -> Result<T> {
        let phi = self.trunk.forward(input)?;
        Ok(dot(&self.head, &phi))
    }

    /// Learned return of a trajectory.
    pub fn learned_return(&self, encoder: &InputEncoder, mode: ReturnMode, traj: &Trajectory) -> Result<T> {
        let plan = BatchPlan::build(encoder, mode, std::iter::once(traj))?;
        let rewards = plan
            .inputs
            .iter()
            .map(|x| self.reward(x))
            .collect::<Result<Vec<T>>>()?;
        Ok(plan.trajectory_return(0, &rewards))
    }

    /// Mean negative log-likelihood of the labels over the batch.
    pub fn pair_loss(&self, encoder: &InputEncoder, mode: ReturnMode, pairs: &[LabeledPair]) -> Result<T> {
        Ok(self.loss_and_grad(encoder, mode, pairs, false)?.0)
    }

    /// Loss together with its gradient with respect to the trunk parameters
    /// and the head vector.
    pub fn pair_loss_grad(
        &self,
        encoder: &InputEncoder,
        mode: ReturnMode,
        pairs: &[LabeledPair],
    ) -> Result<(T, Vec<T>, Vec<T>)> {
        let (loss, grads) = self.loss_and_grad(encoder, mode, pairs, true)?;
        let (trunk, head) = grads.expect("gradients requested");
        Ok((loss, trunk, head))
    }

    #[allow(clippy::type_complexity)]
    fn loss_and_grad(
        &self,
        encoder: &InputEncoder,
        mode: ReturnMode,
        pairs: &[LabeledPair],
        with_grad: bool,
    ) -> Result<(T, Option<(Vec<T>, Vec<T>)>)> {
        if pairs.is_empty() {
            return Err(contract("pair loss over an empty batch"));
        }
        // Repeated (state, action) inputs are evaluated once; a trajectory's
        // learned return is a weighted sum over its distinct inputs.
        let plan = BatchPlan::build(
            encoder,
            mode,
            pairs.iter().flat_map(|p| [p.first.as_ref(), p.second.as_ref()]),
        )?;
        let traces = plan
            .inputs
            .iter()
            .map(|x| self.trunk.forward_trace(x))
            .collect::<Result<Vec<_>>>()?;
        let rewards: Vec<T> = traces.iter().map(|tr| dot(&self.head, tr.output())).collect();

        let n = T::lit(pairs.len() as f64);
        let mut loss = T::zero();
        let mut d_return = vec![T::zero(); plan.trajectories.len()];
        for (k, pair) in pairs.iter().enumerate() {
            let (pref, other) = match pair.preferred {
                Preference::First => (2 * k, 2 * k + 1),
                Preference::Second => (2 * k + 1, 2 * k),
            };
            let margin = plan.trajectory_return(pref, &rewards) - plan.trajectory_return(other, &rewards);
            loss += softplus(-margin);
            // d softplus(-m) / dm = -sigmoid(-m)
            let slope = logistic(-margin) / n;
            d_return[pref] -= slope;
            d_return[other] += slope;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(SorsError::NonFiniteGradient);
        }
        if !with_grad {
            return Ok((loss, None));
        }

        let mut d_reward = vec![T::zero(); plan.inputs.len()];
        for (traj, &g) in plan.trajectories.iter().zip(&d_return) {
            for &(u, c) in traj {
                d_reward[u] += g * c;
            }
        }
        let mut trunk_grad = vec![T::zero(); self.trunk.num_params()];
        let mut head_grad = vec![T::zero(); self.head.len()];
        for (trace, &g) in traces.iter().zip(&d_reward) {
            if g == T::zero() {
                continue;
            }
            for (hg, &phi) in head_grad.iter_mut().zip(trace.output()) {
                *hg += g * phi;
            }
            let upstream: Vec<T> = self.head.iter().map(|&w| w * g).collect();
            self.trunk.backward(trace, &upstream, &mut trunk_grad)?;
        }
        Ok((loss, Some((trunk_grad, head_grad))))
    }

    fn project_head(&mut self) -> Result<()> {
        normalize(&mut self.head)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn normalize<T: Scalar>(v: &mut [T]) -> Result<()> {
    let norm = v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(contract("cannot project a zero or non-finite vector onto the unit sphere"));
    }
    // Already unit up to rounding; dividing again would only add drift.
    if (norm - T::one()).abs() <= T::lit(4.0) * T::epsilon() {
        return Ok(());
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Distinct model inputs of a set of trajectories and, per trajectory, the
/// discount weight accumulated on each of them.
struct BatchPlan<T> {
    inputs: Vec<Vec<T>>,
    trajectories: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> BatchPlan<T> {
    fn build<'a>(
        encoder: &InputEncoder,
        mode: ReturnMode,
        trajectories: impl Iterator<Item = &'a Trajectory>,
    ) -> Result<Self> {
        let gamma = T::lit(mode.gamma());
        let mut index: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut plans = Vec::new();
        for traj in trajectories {
            let mut weights: Vec<(usize, T)> = Vec::new();
            let mut slot: HashMap<usize, usize> = HashMap::new();
            let mut discount = T::one();
            for step in traj.steps() {
                let key = (
                    step.obs.features.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
                    step.action,
                );
                let u = match index.get(&key) {
                    Some(&u) => u,
                    None => {
                        inputs.push(encoder.encode(&step.obs.features, step.action)?);
                        index.insert(key, inputs.len() - 1);
                        inputs.len() - 1
                    }
                };
                match slot.get(&u) {
                    Some(&k) => weights[k].1 += discount,
                    None => {
                        slot.insert(u, weights.len());
                        weights.push((u, discount));
                    }
                }
                discount *= gamma;
            }
            plans.push(weights);
        }
        Ok(Self {
            inputs,
            trajectories: plans,
        })
    }

    fn trajectory_return(&self, k: usize, rewards: &[T]) -> T {
        self.trajectories[k]
            .iter()
            .fold(T::zero(), |acc, &(u, c)| acc + c * rewards[u])
    }
}

#[derive(Clone, Debug)]
struct Member<T> {
    net: RewardNet<T>,
    trunk_opt: Adam<T>,
    head_opt: Adam<T>,
}

impl<T: Scalar> Member<T> {
    fn new(net: RewardNet<T>, adam: AdamConfig) -> Self {
        Self {
            trunk_opt: Adam::new(net.trunk.num_params(), adam),
            head_opt: Adam::new(net.head.len(), adam),
            net,
        }
    }
}

/// Ensemble of reward nets; its reward is the mean of the members.
#[derive(Clone, Debug)]
pub struct RewardEnsemble<T> {
    members: Vec<Member<T>>,
    encoder: InputEncoder,
    mode: ReturnMode,
}

impl<T: Scalar> RewardEnsemble<T> {
    pub fn new<R: Rng + ?Sized>(encoder: InputEncoder, config: &RewardModelConfig, rng: &mut R) -> Result<Self> {
        if config.ensemble_size == 0 {
            return Err(contract("ensemble needs at least one member"));
        }
        let members = (0..config.ensemble_size)
            .map(|_| {
                RewardNet::new(encoder.input_dim(), &config.hidden, config.feature_dim, rng)
                    .map(|net| Member::new(net, config.adam))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            encoder,
            mode: config.return_mode,
        })
    }

    pub fn from_nets(encoder: InputEncoder, nets: Vec<RewardNet<T>>, adam: AdamConfig, mode: ReturnMode) -> Result<Self> {
        if nets.is_empty() {
            return Err(contract("ensemble needs at least one member"));
        }
        for net in &nets {
            if net.trunk.input_dim() != encoder.input_dim() {
                return Err(SorsError::DimensionMismatch {
                    expected: encoder.input_dim(),
                    actual: net.trunk.input_dim(),
                });
            }
        }
        Ok(Self {
            members: nets.into_iter().map(|n| Member::new(n, adam)).collect(),
            encoder,
            mode,
        })
    }

    pub fn encoder(&self) -> &InputEncoder {
        &self.encoder
    }

    pub fn return_mode(&self) -> ReturnMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, k: usize) -> &RewardNet<T> {
        &self.members[k].net
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        for m in &mut self.members {
            m.trunk_opt.set_learning_rate(learning_rate);
            m.head_opt.set_learning_rate(learning_rate);
        }
    }

    /// Mean member reward on an already-encoded input.
    pub fn dense_reward(&self, input: &[T]) -> Result<T> {
        let mut total = T::zero();
        for m in &self.members {
            total += m.net.reward(input)?;
        }
        Ok(total / T::lit(self.members.len() as f64))
    }

    pub fn reward_for(&self, features: &[f64], action: usize) -> Result<T> {
        self.dense_reward(&self.encoder.encode::<T>(features, action)?)
    }

    /// Ensemble-mean learned return under the training return mode.
    pub fn learned_return(&self, traj: &Trajectory) -> Result<T> {
        let plan = BatchPlan::build(&self.encoder, self.mode, std::iter::once(traj))?;
        let rewards = plan
            .inputs
            .iter()
            .map(|x| self.dense_reward(x))
            .collect::<Result<Vec<T>>>()?;
        Ok(plan.trajectory_return(0, &rewards))
    }

    pub fn member_pair_loss(&self, k: usize, pairs: &[LabeledPair]) -> Result<T> {
        self.members[k].net.pair_loss(&self.encoder, self.mode, pairs)
    }

    /// One Adam step per member, member `k` on `batches[k]`, followed by
    /// re-projection of every head onto the unit sphere. Returns the mean
    /// pre-update loss over members.
    pub fn update(&mut self, batches: &[Vec<LabeledPair>]) -> Result<T> {
        if batches.len() != self.members.len() {
            return Err(SorsError::DimensionMismatch {
                expected: self.members.len(),
                actual: batches.len(),
            });
        }
        let mut total = T::zero();
        for (member, batch) in self.members.iter_mut().zip(batches) {
            let (loss, trunk_grad, head_grad) = member.net.pair_loss_grad(&self.encoder, self.mode, batch)?;
            member.trunk_opt.step(member.net.trunk.params_mut(), &trunk_grad)?;
            member.head_opt.step(&mut member.net.head, &head_grad)?;
            member.net.project_head()?;
            total += loss;
        }
        Ok(total / T::lit(self.members.len() as f64))
    }

    /// Fraction of pairs whose preferred trajectory gets the strictly
    /// larger ensemble learned return. `None` for an empty pair list.
    pub fn ranking_accuracy(&self, pairs: &[LabeledPair]) -> Result<Option<f64>> {
        if pairs.is_empty() {
            return Ok(None);
        }
        // Pairs share trajectories, so evaluate each one once.
        let mut cache: HashMap<*const Trajectory, T> = HashMap::new();
        let mut learned = |t: &Arc<Trajectory>| -> Result<T> {
            if let Some(&v) = cache.get(&Arc::as_ptr(t)) {
                return Ok(v);
            }
            let v = self.learned_return(t)?;
            cache.insert(Arc::as_ptr(t), v);
            Ok(v)
        };
        let mut correct = 0usize;
        for pair in pairs {
            let a = learned(&pair.first)?;
            let b = learned(&pair.second)?;
            let ok = match pair.preferred {
                Preference::First => a > b,
                Preference::Second => b > a,
            };
            correct += usize::from(ok);
        }
        Ok(Some(correct as f64 / pairs.len() as f64))
    }

    /// Member count, state size and action count (`u32` each), then per
    /// member the trunk as an MLP block and the head as a `1 x F` matrix.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        write_u32(w, self.members.len() as u32)?;
        write_u32(w, self.encoder.state_dim as u32)?;
        write_u32(w, self.encoder.num_actions as u32)?;
        for m in &self.members {
            write_mlp(w, &m.net.trunk)?;
            write_matrix(w, 1, m.net.head.len(), &m.net.head)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R, adam: AdamConfig, mode: ReturnMode) -> Result<Self> {
        let count = read_u32(r)? as usize;
        let encoder = InputEncoder::new(read_u32(r)? as usize, read_u32(r)? as usize);
        let mut nets = Vec::with_capacity(count);
        for _ in 0..count {
            let trunk: Mlp<T> = read_mlp(r)?;
            let (rows, _, head) = read_matrix(r)?;
            if rows != 1 {
                return Err(SorsError::Snapshot("head block must be a single row".into()));
            }
            nets.push(RewardNet::from_parts(trunk, head)?);
        }
        Self::from_nets(encoder, nets, adam, mode)
    }
}

impl<T: Scalar> RewardFn for RewardEnsemble<T> {
    /// # Panics
    /// If the observation does not match the encoder.
    fn reward(&self, obs: &Observation, action: usize) -> f64 {
        self.reward_for(&obs.features, action)
            .expect("observation matches the reward model input")
            .as_f64()
    }
}
