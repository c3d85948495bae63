//! Base RL algorithms consuming the (possibly learned) reward: exact value
//! iteration, tabular soft Q-learning, and a neural soft Q-learner with a
//! target network.

mod agent;
mod neural;
mod policy;
mod replay;
mod tabular;
mod value_iteration;

pub use agent::{ActMode, Agent, LearnedReward, RecordedReward, TransitionReward};
pub use neural::{NeuralQ, NeuralQConfig};
pub use policy::{boltzmann_probabilities, greedy_action, sample_boltzmann, PolicySet};
pub use replay::{Replay, ReplayTransition};
pub use tabular::{soft_q_step, QTable, TabularConfig, TabularSoftQ};
pub use value_iteration::{value_iteration, ValueIteration, ValueIterationResult};
