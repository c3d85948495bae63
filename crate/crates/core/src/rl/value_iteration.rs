use super::policy::PolicySet;
use super::tabular::QTable;
use crate::error::{contract, Result, SorsError};
use crate::mdp::{MdpSpec, Observation, RewardFn};

#[derive(Clone, Debug)]
pub struct ValueIterationResult {
    pub q: QTable,
    /// Sup-norm Bellman residual `|TQ - Q|` of the returned table.
    pub residual: f64,
    pub iterations: usize,
    pub policies: PolicySet,
}

/// Exact dynamic programming on a finite MDP. Terminal states end the
/// episode after their own step: `Q(s, a) = r(s, a)` there.
#[derive(Clone, Debug)]
pub struct ValueIteration {
    pub tol: f64,
    pub tie_tol: f64,
    pub max_iterations: usize,
}

impl ValueIteration {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            tie_tol: 1e-9,
            max_iterations: 100_000,
        }
    }

    pub fn with_tie_tolerance(mut self, tie_tol: f64) -> Self {
        self.tie_tol = tie_tol;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn solve<R: RewardFn + ?Sized>(&self, mdp: &MdpSpec, r: &R) -> Result<ValueIterationResult> {
        if !(self.tol > 0.0) {
            return Err(contract("value iteration tolerance must be positive"));
        }
        let rewards = reward_table(mdp, r);
        let mut q = QTable::zeros(mdp.num_states(), mdp.num_actions());
        let mut residual = f64::INFINITY;
        for it in 1..=self.max_iterations {
            let next = bellman(mdp, &rewards, &q);
            residual = next.max_abs_diff(&q);
            q = next;
            if residual <= self.tol {
                let residual = bellman(mdp, &rewards, &q).max_abs_diff(&q);
                let policies = self.policies(mdp, &q);
                return Ok(ValueIterationResult {
                    q,
                    residual,
                    iterations: it,
                    policies,
                });
            }
        }
        Err(SorsError::NoConvergence {
            iterations: self.max_iterations,
            residual,
        })
    }

    /// Optimal values over complete trajectories of at most `horizon` steps:
    /// `Q_1 = r`, `Q_k = r + gamma E[max Q_{k-1}]` away from terminals.
    pub fn solve_horizon<R: RewardFn + ?Sized>(
        &self,
        mdp: &MdpSpec,
        r: &R,
        horizon: usize,
    ) -> Result<(QTable, PolicySet)> {
        if horizon == 0 {
            return Err(contract("horizon must be positive"));
        }
        let rewards = reward_table(mdp, r);
        let mut q = rewards.clone();
        for _ in 1..horizon {
            q = bellman(mdp, &rewards, &q);
        }
        let policies = self.policies(mdp, &q);
        Ok((q, policies))
    }

    fn policies(&self, mdp: &MdpSpec, q: &QTable) -> PolicySet {
        PolicySet::from_values(
            mdp.num_states(),
            mdp.num_actions(),
            |s, a| q.get(s, a),
            |s| mdp.is_terminal(s),
            self.tie_tol,
        )
    }
}

/// [`ValueIteration::solve`] with default tie tolerance and iteration cap.
pub fn value_iteration<R: RewardFn + ?Sized>(mdp: &MdpSpec, r: &R, tol: f64) -> Result<ValueIterationResult> {
    ValueIteration::new(tol).solve(mdp, r)
}

fn reward_table<R: RewardFn + ?Sized>(mdp: &MdpSpec, r: &R) -> QTable {
    let mut table = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        let obs = Observation::discrete(s);
        for a in 0..mdp.num_actions() {
            table.set(s, a, r.reward(&obs, a));
        }
    }
    table
}

fn bellman(mdp: &MdpSpec, rewards: &QTable, q: &QTable) -> QTable {
    let values: Vec<f64> = (0..mdp.num_states())
        .map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut next = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let mut v = rewards.get(s, a);
            if !mdp.is_terminal(s) {
                let expected: f64 = mdp.distribution(s, a).iter().map(|&(s2, p)| p * values[s2]).sum();
                v += mdp.gamma() * expected;
            }
            next.set(s, a, v);
        }
    }
    next
}
