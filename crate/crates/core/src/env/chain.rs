use super::{check_action, finite_spec, stepped_after_done, Environment, StepResult};
use crate::error::{contract, Result};
use crate::mdp::{MdpSpec, Observation, TableReward};

/// `n` states on a line. Action 0 moves left (clamped at 0), action 1 moves
/// right; entering state `n - 1` pays 1 and ends the episode. Episodes are
/// capped at `4n` steps.
#[derive(Clone, Debug)]
pub struct Chain {
    n: usize,
    cap: usize,
    state: usize,
    t: usize,
    done: bool,
}

impl Chain {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(contract("a chain needs at least two states"));
        }
        Ok(Self::with_cap(n, 4 * n))
    }

    pub fn with_cap(n: usize, cap: usize) -> Self {
        Self {
            n,
            cap: cap.max(1),
            state: 0,
            t: 0,
            done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self) -> usize {
        self.state
    }

    fn goal(&self) -> usize {
        self.n - 1
    }

    fn next(&self, s: usize, a: usize) -> usize {
        if s == self.goal() {
            s
        } else if a == 0 {
            s.saturating_sub(1)
        } else {
            s + 1
        }
    }

    fn obs(&self, s: usize) -> Observation {
        Observation::new(vec![s as f64 / (self.n - 1) as f64], Some(s))
    }
}

impl Environment for Chain {
    fn name(&self) -> String {
        format!("chain{}", self.n)
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn feature_dim(&self) -> usize {
        1
    }

    fn step_cap(&self) -> usize {
        self.cap
    }

    fn reset(&mut self) -> Observation {
        self.state = 0;
        self.t = 0;
        self.done = false;
        self.obs(0)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(stepped_after_done());
        }
        check_action(action, 2)?;
        self.state = self.next(self.state, action);
        self.t += 1;
        let reached = self.state == self.goal();
        let truncated = !reached && self.t >= self.cap;
        self.done = reached || truncated;
        Ok(StepResult {
            observation: self.obs(self.state),
            sparse_reward: if reached { 1.0 } else { 0.0 },
            dense_reward_hand: -((self.goal() - self.state) as f64) / (self.n - 1) as f64,
            done: self.done,
            truncated,
        })
    }

    fn num_states(&self) -> Option<usize> {
        Some(self.n)
    }

    fn observation_of(&self, state: usize) -> Option<Observation> {
        (state < self.n).then(|| self.obs(state))
    }

    fn rewards_only_on_termination(&self) -> bool {
        true
    }

    fn as_mdp_spec(&self, gamma: f64) -> Result<(MdpSpec, TableReward)> {
        finite_spec(self.n, 2, 0, self.goal(), |s, a| self.next(s, a), gamma)
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
