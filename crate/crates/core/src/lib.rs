//! Sparse-reward RL with learned, order-consistent dense rewards.
//!
//! Rewards are inferred from pairwise trajectory comparisons labelled by the
//! sparse return, then handed to a soft Q-learning agent. The [`verify`]
//! module checks on small MDPs that rewards inducing the same trajectory
//! order induce the same optimal policies.

pub mod buffer;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod nn;
pub mod reward;
pub mod rl;
pub mod scalar;
pub mod training;
pub mod verify;

pub use error::{Result, SorsError};
pub use scalar::Scalar;

pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type RewardNet64 = reward::RewardNet<f64>;
pub type RewardNet32 = reward::RewardNet<f32>;
pub type RewardEnsemble64 = reward::RewardEnsemble<f64>;
pub type RewardEnsemble32 = reward::RewardEnsemble<f32>;
