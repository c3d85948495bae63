//! The training loop: random warm-up, then experience collection with
//! periodic reward-inference phases and periodic RL phases.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::{LabeledPair, TrajectoryBuffer};
use crate::env::{Environment, StepResult};
use crate::error::{contract, Result, SorsError};
use crate::mdp::{Observation, Step, Trajectory, DEFAULT_TIE_TOLERANCE};
use crate::reward::{InputEncoder, ReturnMode, RewardEnsemble, RewardModelConfig};
use crate::rl::{
    ActMode, Agent, LearnedReward, NeuralQ, NeuralQConfig, RecordedReward, Replay, ReplayTransition, TabularConfig,
    TabularSoftQ, TransitionReward,
};

/// Which reward the agent is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// The environment's (delayed) sparse reward.
    Sparse,
    /// The learned ensemble reward.
    Sors,
    /// The environment's hand-designed dense reward.
    HandDense,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Sparse => "sparse",
            RunMode::Sors => "sors",
            RunMode::HandDense => "hand_dense",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sparse" => Ok(RunMode::Sparse),
            "sors" => Ok(RunMode::Sors),
            "hand_dense" => Ok(RunMode::HandDense),
            other => Err(format!("unknown mode `{other}` (expected sparse, sors or hand_dense)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendConfig {
    Tabular(TabularConfig),
    Neural(NeuralQConfig),
}

impl BackendConfig {
    pub fn gamma(&self) -> f64 {
        match self {
            BackendConfig::Tabular(c) => c.gamma,
            BackendConfig::Neural(c) => c.gamma,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SorsConfig {
    pub mode: RunMode,
    /// Total environment steps, warm-up included.
    pub total_steps: usize,
    pub initial_random_steps: usize,
    pub reward_period: usize,
    pub reward_updates: usize,
    /// Pairs in each member's minibatch.
    pub pairs_per_batch: usize,
    pub policy_period: usize,
    pub policy_updates: usize,
    /// Episodes kept for reward inference.
    pub buffer_capacity: usize,
    /// Probability that a finished episode goes to the held-out buffer.
    pub holdout_fraction: f64,
    pub replay_capacity: usize,
    pub eval_period: usize,
    pub eval_episodes: usize,
    pub tie_tolerance: f64,
    pub backend: BackendConfig,
    pub reward: RewardModelConfig,
    pub seed: u64,
    /// Print a line to stderr at each evaluation.
    pub progress: bool,
}

impl Default for SorsConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Sors,
            total_steps: 100_000,
            initial_random_steps: 2000,
            reward_period: 1000,
            reward_updates: 100,
            pairs_per_batch: 10,
            policy_period: 50,
            policy_updates: 50,
            buffer_capacity: 200,
            holdout_fraction: 0.2,
            replay_capacity: 100_000,
            eval_period: 1000,
            eval_episodes: 1,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
            backend: BackendConfig::Tabular(TabularConfig::default()),
            reward: RewardModelConfig::default(),
            seed: 0,
            progress: false,
        }
    }
}

impl SorsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_steps", self.total_steps),
            ("reward_period", self.reward_period),
            ("reward_updates", self.reward_updates),
            ("pairs_per_batch", self.pairs_per_batch),
            ("policy_period", self.policy_period),
            ("policy_updates", self.policy_updates),
            ("buffer_capacity", self.buffer_capacity),
            ("replay_capacity", self.replay_capacity),
            ("eval_period", self.eval_period),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(contract(format!("{name} must be positive")));
            }
        }
        if self.total_steps < self.initial_random_steps {
            return Err(contract("total_steps must be at least initial_random_steps"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(contract("holdout_fraction must lie in [0, 1)"));
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(contract("tie_tolerance must be non-negative"));
        }
        Ok(())
    }

    /// Discount used to rank episodes by sparse return.
    pub fn ranking_gamma(&self) -> f64 {
        match self.reward.return_mode {
            ReturnMode::Discounted(g) => g,
            ReturnMode::Undiscounted => 1.0,
        }
    }

    /// Number of reward phases a run attempts.
    pub fn reward_phase_count(&self) -> usize {
        self.total_steps / self.reward_period
    }

    pub fn policy_phase_count(&self) -> usize {
        self.total_steps / self.policy_period
    }
}

#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub step: usize,
    /// Mean undiscounted sparse return of the greedy rollouts.
    pub sparse_return: f64,
    /// Mean learned return of the same rollouts, when an ensemble is trained.
    pub learned_return: Option<f64>,
    pub wall_clock: Duration,
}

impl PartialEq for EvalRecord {
    fn eq(&self, other: &Self) -> bool {
        self.step == other.step
            && self.sparse_return.to_bits() == other.sparse_return.to_bits()
            && self.learned_return.map(f64::to_bits) == other.learned_return.map(f64::to_bits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardPhaseRecord {
    pub step: usize,
    /// `None` when the phase was skipped for lack of rankable pairs.
    pub mean_loss: Option<f64>,
    pub holdout_accuracy: Option<f64>,
}

impl RewardPhaseRecord {
    pub fn skipped(&self) -> bool {
        self.mean_loss.is_none()
    }
}

/// Everything a run reports. Equality ignores wall-clock times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub evaluations: Vec<EvalRecord>,
    pub reward_phases: Vec<RewardPhaseRecord>,
    pub policy_phases: usize,
    /// Ranking accuracy on all rankable held-out pairs at the end of the run.
    pub final_holdout_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub learned_returns: Option<Vec<f64>>,
    pub trajectories: Vec<Trajectory>,
}

impl Evaluation {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    pub fn mean_learned_return(&self) -> Option<f64> {
        self.learned_returns
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Rolls out `episodes` episodes on a fresh copy of `env` and records the
/// environment's sparse reward, undiscounted.
pub fn evaluate(
    agent: &dyn Agent,
    env: &dyn Environment,
    episodes: usize,
    mode: ActMode,
    rng: &mut dyn rand::RngCore,
    ensemble: Option<&RewardEnsemble<f64>>,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(contract("evaluation needs at least one episode"));
    }
    let mut env = env.clone_box();
    let mut out = Evaluation {
        returns: Vec::with_capacity(episodes),
        learned_returns: ensemble.map(|_| Vec::with_capacity(episodes)),
        trajectories: Vec::with_capacity(episodes),
    };
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut steps = Vec::new();
        let mut total = 0.0;
        loop {
            let action = agent.act(&obs, mode, rng)?;
            let res = env.step(action)?;
            total += res.sparse_reward;
            steps.push(Step::new(obs, action, res.sparse_reward));
            obs = res.observation;
            if res.done {
                break;
            }
        }
        let traj = Trajectory::new(steps, 1.0)?;
        if let (Some(ens), Some(learned)) = (ensemble, out.learned_returns.as_mut()) {
            learned.push(ens.learned_return(&traj)?);
        }
        out.returns.push(total);
        out.trajectories.push(traj);
    }
    Ok(out)
}

/// Episodes never used for training, kept as a uniform reservoir sample of
/// the distinct episodes routed here during the run. Repeats of an episode
/// already offered are ignored.
#[derive(Clone, Debug)]
pub struct Holdout {
    capacity: usize,
    gamma: f64,
    tie_tol: f64,
    seen: u64,
    fingerprints: HashSet<u64>,
    episodes: Vec<Arc<Trajectory>>,
}

impl Holdout {
    pub fn new(capacity: usize, gamma: f64, tie_tol: f64) -> Self {
        Self {
            capacity,
            gamma,
            tie_tol,
            seen: 0,
            fingerprints: HashSet::new(),
            episodes: Vec::new(),
        }
    }

    pub fn offer<R: Rng + ?Sized>(&mut self, traj: Trajectory, rng: &mut R) {
        if !self.fingerprints.insert(fingerprint(&traj)) {
            return;
        }
        self.seen += 1;
        if self.episodes.len() < self.capacity {
            self.episodes.push(Arc::new(traj));
        } else {
            let k = rng.gen_range(0..self.seen);
            if (k as usize) < self.capacity {
                self.episodes[k as usize] = Arc::new(traj);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Arc<Trajectory>] {
        &self.episodes
    }

    /// Every pair of held-out episodes with distinct sparse returns.
    pub fn rankable_pairs(&self) -> Result<Vec<LabeledPair>> {
        let mut buffer = TrajectoryBuffer::new(self.capacity, self.gamma)?.with_tie_tolerance(self.tie_tol);
        for e in &self.episodes {
            buffer.append(e.clone())?;
        }
        Ok(buffer.rankable_pairs())
    }
}

fn fingerprint(traj: &Trajectory) -> u64 {
    let mut h = DefaultHasher::new();
    for step in traj.steps() {
        for x in &step.obs.features {
            x.to_bits().hash(&mut h);
        }
        step.action.hash(&mut h);
    }
    h.finish()
}

/// Tracks the episode in progress while stepping an environment.
struct Rollout {
    obs: Observation,
    steps: Vec<Step>,
}

impl Rollout {
    fn start(env: &mut dyn Environment) -> Self {
        Self {
            obs: env.reset(),
            steps: Vec::new(),
        }
    }

    /// Steps the environment; returns the transition and, when the episode
    /// ends, the finished trajectory.
    fn step(
        &mut self,
        env: &mut dyn Environment,
        action: usize,
        gamma: f64,
    ) -> Result<(ReplayTransition, StepResult, Option<Trajectory>)> {
        let res = env.step(action)?;
        let transition = ReplayTransition {
            state: self.obs.clone(),
            action,
            next_state: res.observation.clone(),
            terminal: res.done && !res.truncated,
        };
        self.steps
            .push(Step::new(std::mem::replace(&mut self.obs, res.observation.clone()), action, res.sparse_reward));
        let finished = if res.done {
            self.obs = env.reset();
            Some(Trajectory::new(std::mem::take(&mut self.steps), gamma)?)
        } else {
            None
        };
        Ok((transition, res, finished))
    }
}

/// Runs a uniform-random policy for `steps` steps and appends every episode
/// that finishes; a trailing unfinished episode is dropped.
pub fn collect_initial<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    buffer: &mut TrajectoryBuffer,
    steps: usize,
    rng: &mut R,
) -> Result<()> {
    if steps == 0 {
        return Ok(());
    }
    let mut rollout = Rollout::start(env);
    for _ in 0..steps {
        let action = rng.gen_range(0..env.num_actions());
        if let (_, _, Some(traj)) = rollout.step(env, action, buffer.gamma())? {
            buffer.append(traj)?;
        }
    }
    Ok(())
}

/// Independent random stream `stream` of a run seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_ACT: u64 = 1;
const STREAM_REWARD: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// Builds the agent the config asks for, sized to `env`.
pub fn build_agent(config: &SorsConfig, env: &dyn Environment) -> Result<Box<dyn Agent>> {
    match &config.backend {
        BackendConfig::Tabular(c) => {
            let n = env.num_states().ok_or_else(|| {
                SorsError::Unsupported(format!("tabular backend needs a finite environment, got {}", env.name()))
            })?;
            Ok(Box::new(TabularSoftQ::new(n, env.num_actions(), c.clone())))
        }
        BackendConfig::Neural(c) => {
            let mut rng = rng_stream(config.seed, STREAM_INIT);
            Ok(Box::new(NeuralQ::new(env.feature_dim(), env.num_actions(), c.clone(), &mut rng)?))
        }
    }
}

pub fn build_ensemble(config: &SorsConfig, env: &dyn Environment) -> Result<RewardEnsemble<f64>> {
    // Separate from the agent's stream so both modes draw the same agent.
    let mut rng = rng_stream(config.seed.wrapping_add(1 << 32), STREAM_INIT);
    RewardEnsemble::new(InputEncoder::new(env.feature_dim(), env.num_actions()), &config.reward, &mut rng)
}

/// Result of [`run_from_config`]: the log plus the trained models.
pub struct RunOutput {
    pub log: RunLog,
    pub agent: Box<dyn Agent>,
    pub ensemble: Option<RewardEnsemble<f64>>,
    pub holdout: Holdout,
}

/// Builds agent and (in `sors` mode) ensemble from the config, then runs.
pub fn run_from_config(config: &SorsConfig, env: &mut dyn Environment) -> Result<RunOutput> {
    let mut agent = build_agent(config, env)?;
    let mut ensemble = match config.mode {
        RunMode::Sors => Some(build_ensemble(config, env)?),
        _ => None,
    };
    let (log, holdout) = run_with_holdout(config, env, agent.as_mut(), ensemble.as_mut())?;
    Ok(RunOutput {
        log,
        agent,
        ensemble,
        holdout,
    })
}

pub fn run(
    config: &SorsConfig,
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    ensemble: Option<&mut RewardEnsemble<f64>>,
) -> Result<RunLog> {
    run_with_holdout(config, env, agent, ensemble).map(|(log, _)| log)
}

fn run_with_holdout(
    config: &SorsConfig,
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    ensemble: Option<&mut RewardEnsemble<f64>>,
) -> Result<(RunLog, Holdout)> {
    config.validate()?;
    let shaping = config.mode == RunMode::Sors;
    let mut ensemble = if shaping {
        Some(ensemble.ok_or_else(|| contract("sors mode needs a reward ensemble"))?)
    } else {
        None
    };
    if let Some(ens) = ensemble.as_deref() {
        if ens.encoder() != &InputEncoder::new(env.feature_dim(), env.num_actions()) {
            return Err(contract("ensemble input size does not match the environment"));
        }
    }

    let started = Instant::now();
    let gamma = config.ranking_gamma();
    let mut buffer = TrajectoryBuffer::new(config.buffer_capacity, gamma)?.with_tie_tolerance(config.tie_tolerance);
    let mut holdout = Holdout::new(config.buffer_capacity, gamma, config.tie_tolerance);
    let mut replay = Replay::new(config.replay_capacity)?;
    let mut act_rng = rng_stream(config.seed, STREAM_ACT);
    let mut reward_rng = rng_stream(config.seed, STREAM_REWARD);
    let mut replay_rng = rng_stream(config.seed, STREAM_REPLAY);
    let mut eval_rng = rng_stream(config.seed, STREAM_EVAL);
    let mut log = RunLog::default();
    let mut rollout = Rollout::start(env);

    // Steps count from the start of the warm-up. Updates fire on their
    // periods throughout; the warm-up only swaps the policy for uniform actions.
    for i in 1..=config.total_steps {
        let action = if i <= config.initial_random_steps {
            act_rng.gen_range(0..env.num_actions())
        } else {
            agent.act(&rollout.obs, ActMode::Explore, &mut act_rng)?
        };
        let (transition, res, finished) = rollout.step(env, action, gamma)?;
        let recorded = match config.mode {
            RunMode::HandDense => res.dense_reward_hand,
            _ => res.sparse_reward,
        };
        replay.push(transition, recorded);
        if let (true, Some(traj)) = (shaping, finished) {
            if reward_rng.gen::<f64>() < config.holdout_fraction {
                holdout.offer(traj, &mut reward_rng);
            } else {
                buffer.append(traj)?;
            }
        }
        if let Some(ens) = ensemble.as_deref_mut() {
            if i % config.reward_period == 0 {
                let record = reward_phase(config, ens, &buffer, &holdout, &mut reward_rng, i)?;
                log.reward_phases.push(record);
            }
        }

        if i % config.policy_period == 0 {
            let source: Box<dyn TransitionReward + '_> = match ensemble.as_deref() {
                Some(ens) => Box::new(LearnedReward::new(ens)),
                None => Box::new(RecordedReward),
            };
            for _ in 0..config.policy_updates {
                agent.update(&replay, source.as_ref(), &mut replay_rng)?;
            }
            log.policy_phases += 1;
        }

        if i % config.eval_period == 0 {
            let eval = evaluate(
                agent,
                env,
                config.eval_episodes,
                ActMode::Greedy,
                &mut eval_rng,
                ensemble.as_deref(),
            )?;
            let record = EvalRecord {
                step: i,
                sparse_return: eval.mean_return(),
                learned_return: eval.mean_learned_return(),
                wall_clock: started.elapsed(),
            };
            if config.progress {
                eprintln!(
                    "seed {} {} step {} return {}",
                    config.seed, config.mode, record.step, record.sparse_return
                );
            }
            log.evaluations.push(record);
        }
    }

    if let Some(ens) = ensemble.as_deref() {
        log.final_holdout_accuracy = ens.ranking_accuracy(&holdout.rankable_pairs()?)?;
    }
    Ok((log, holdout))
}

fn reward_phase<R: Rng + ?Sized>(
    config: &SorsConfig,
    ens: &mut RewardEnsemble<f64>,
    buffer: &TrajectoryBuffer,
    holdout: &Holdout,
    rng: &mut R,
    step: usize,
) -> Result<RewardPhaseRecord> {
    let mut total = 0.0;
    for _ in 0..config.reward_updates {
        let mut batches = Vec::with_capacity(ens.len());
        for _ in 0..ens.len() {
            match buffer.sample_pairs(config.pairs_per_batch, rng) {
                Ok(b) => batches.push(b),
                Err(SorsError::NoRankablePairs) => {
                    if config.progress {
                        eprintln!("seed {} step {step}: no rankable pairs, reward phase skipped", config.seed);
                    }
                    return Ok(RewardPhaseRecord {
                        step,
                        mean_loss: None,
                        holdout_accuracy: None,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        total += ens.update(&batches)?;
    }
    Ok(RewardPhaseRecord {
        step,
        mean_loss: Some(total / config.reward_updates as f64),
        holdout_accuracy: ens.ranking_accuracy(&holdout.rankable_pairs()?)?,
    })
}
