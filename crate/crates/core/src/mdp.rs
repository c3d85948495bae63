//! Reward-free MDPs, trajectories and the trajectory order induced by a
//! reward function.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{contract, Result, SorsError};

/// Default tolerance under which two returns are considered tied.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// What an agent (or a reward function) sees of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Feature vector consumed by neural components. May be empty for
    /// purely tabular states.
    pub features: Vec<f64>,
    /// State id for finite environments.
    pub discrete: Option<usize>,
}

impl Observation {
    pub fn new(features: Vec<f64>, discrete: Option<usize>) -> Self {
        Self { features, discrete }
    }

    /// Observation of a finite state that has no feature encoding.
    pub fn discrete(state: usize) -> Self {
        Self {
            features: Vec::new(),
            discrete: Some(state),
        }
    }

    pub fn continuous(features: Vec<f64>) -> Self {
        Self {
            features,
            discrete: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub action: usize,
    pub sparse_reward: f64,
}

impl Step {
    pub fn new(obs: Observation, action: usize, sparse_reward: f64) -> Self {
        Self {
            obs,
            action,
            sparse_reward,
        }
    }
}

/// A complete sequence of steps, indexed from `t = 1` regardless of where
/// it began, with its sparse return cached.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
    gamma: f64,
    sparse_return: f64,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, gamma: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(contract("trajectory must contain at least one step"));
        }
        check_gamma(gamma)?;
        let sparse_return = discount_sum(steps.iter().map(|s| s.sparse_reward), gamma);
        Ok(Self {
            steps,
            gamma,
            sparse_return,
        })
    }

    /// Builds a trajectory over bare state ids, e.g. for enumeration.
    pub fn from_states(pairs: &[(usize, usize)], gamma: f64) -> Result<Self> {
        let steps = pairs
            .iter()
            .map(|&(s, a)| Step::new(Observation::discrete(s), a, 0.0))
            .collect();
        Self::new(steps, gamma)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Discount used for the cached sparse return.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Sparse return under the discount the trajectory was built with.
    pub fn cached_sparse_return(&self) -> f64 {
        self.sparse_return
    }
}

/// Evaluable reward `r(s, a)`. Implementations must be deterministic.
pub trait RewardFn {
    fn reward(&self, obs: &Observation, action: usize) -> f64;
}

impl<F> RewardFn for F
where
    F: Fn(&Observation, usize) -> f64,
{
    fn reward(&self, obs: &Observation, action: usize) -> f64 {
        self(obs, action)
    }
}

/// Reward stored as a `num_states x num_actions` table, looked up by the
/// observation's discrete state id.
#[derive(Clone, Debug, PartialEq)]
pub struct TableReward {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl TableReward {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_fn(num_states: usize, num_actions: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut table = Self::zeros(num_states, num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                table.set(s, a, f(s, a));
            }
        }
        table
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Returns `factor * self`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

impl RewardFn for TableReward {
    /// # Panics
    /// If the observation carries no discrete state id.
    fn reward(&self, obs: &Observation, action: usize) -> f64 {
        let state = obs
            .discrete
            .expect("table-backed reward needs a discrete state id");
        self.get(state, action)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(contract(format!("discount must lie in (0, 1], got {gamma}")))
    }
}

fn discount_sum(rewards: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// `sum_t gamma^(t-1) r(s_t, a_t)` over the trajectory's own time origin.
pub fn discounted_return<R: RewardFn + ?Sized>(traj: &Trajectory, r: &R, gamma: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(contract("discounted return of an empty trajectory"));
    }
    check_gamma(gamma)?;
    Ok(discount_sum(
        traj.steps.iter().map(|s| r.reward(&s.obs, s.action)),
        gamma,
    ))
}

/// Discounted return of the sparse rewards recorded inline.
pub fn sparse_return(traj: &Trajectory, gamma: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(contract("sparse return of an empty trajectory"));
    }
    check_gamma(gamma)?;
    Ok(discount_sum(traj.steps.iter().map(|s| s.sparse_reward), gamma))
}

/// Three-way comparison of two returns with an absolute tie tolerance.
pub fn compare_returns(a: f64, b: f64, tol: f64) -> Ordering {
    if a < b - tol {
        Ordering::Less
    } else if a > b + tol {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

/// Compares two trajectories by their return under `r`.
pub fn order_compare<R: RewardFn + ?Sized>(
    tau_i: &Trajectory,
    tau_j: &Trajectory,
    r: &R,
    gamma: f64,
    tol: f64,
) -> Result<Ordering> {
    if !(tol >= 0.0) {
        return Err(contract(format!("tie tolerance must be non-negative, got {tol}")));
    }
    let ri = discounted_return(tau_i, r, gamma)?;
    let rj = discounted_return(tau_j, r, gamma)?;
    Ok(compare_returns(ri, rj, tol))
}

/// Finite reward-free MDP `<S, A, T, gamma>`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    /// `transitions[s * num_actions + a]` lists `(next_state, probability)`.
    transitions: Vec<Vec<(usize, f64)>>,
    initial_state: usize,
    terminal: Vec<bool>,
    gamma: f64,
    deterministic: bool,
}

impl MdpSpec {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        initial_state: usize,
        terminal_states: &[usize],
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(contract("an MDP needs at least one state and one action"));
        }
        check_gamma(gamma)?;
        if transitions.len() != num_states * num_actions {
            return Err(SorsError::DimensionMismatch {
                expected: num_states * num_actions,
                actual: transitions.len(),
            });
        }
        if initial_state >= num_states {
            return Err(contract(format!("initial state {initial_state} out of range")));
        }
        let mut terminal = vec![false; num_states];
        for &s in terminal_states {
            if s >= num_states {
                return Err(contract(format!("terminal state {s} out of range")));
            }
            terminal[s] = true;
        }
        let mut deterministic = true;
        for (idx, dist) in transitions.iter().enumerate() {
            let (s, a) = (idx / num_actions, idx % num_actions);
            if dist.is_empty() {
                return Err(contract(format!("no transition defined for ({s}, {a})")));
            }
            let mut total = 0.0;
            for &(next, p) in dist {
                if next >= num_states {
                    return Err(contract(format!("transition ({s}, {a}) -> {next} out of range")));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(contract(format!("invalid probability {p} on ({s}, {a})")));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(contract(format!(
                    "transition distribution of ({s}, {a}) sums to {total}"
                )));
            }
            if dist.iter().filter(|&&(_, p)| p > 0.0).count() != 1 {
                deterministic = false;
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            initial_state,
            terminal,
            gamma,
            deterministic,
        })
    }

    /// Deterministic MDP from a `next_state(s, a)` function.
    pub fn deterministic(
        num_states: usize,
        num_actions: usize,
        next_state: impl Fn(usize, usize) -> usize,
        initial_state: usize,
        terminal_states: &[usize],
        gamma: f64,
    ) -> Result<Self> {
        let mut transitions = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                transitions.push(vec![(next_state(s, a), 1.0)]);
            }
        }
        Self::new(num_states, num_actions, transitions, initial_state, terminal_states, gamma)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states).filter(|&s| self.terminal[s])
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn distribution(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state * self.num_actions + action]
    }

    /// Successor under deterministic dynamics, `None` if `(s, a)` is stochastic.
    pub fn next_state(&self, state: usize, action: usize) -> Option<usize> {
        let mut support = self
            .distribution(state, action)
            .iter()
            .filter(|&&(_, p)| p > 0.0);
        match (support.next(), support.next()) {
            (Some(&(next, _)), None) => Some(next),
            _ => None,
        }
    }

    /// Same dynamics under a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }
}

/// Parsed MDP description file: dynamics plus the two rewards under test.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpFile {
    pub mdp: MdpSpec,
    pub r1: TableReward,
    pub r2: TableReward,
}

impl MdpFile {
    /// Parses the line-oriented text format:
    ///
    /// ```text
    /// states 3 actions 2 gamma 0.9
    /// T 0 1 1          # deterministic transition
    /// T 1 0 0 0.5      # optional probability column
    /// terminal 2
    /// R1 1 1 1.0
    /// R2 1 1 2.0
    /// ```
    ///
    /// Missing reward entries are zero. Every `(s, a)` needs at least one
    /// `T` line; several lines for the same pair define a distribution.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize, f64)> = None;
        let mut transitions: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut terminal = Vec::new();
        let mut r1 = TableReward::zeros(0, 0);
        let mut r2 = TableReward::zeros(0, 0);
        let mut initial = 0;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| SorsError::Parse {
                line: line_no,
                message,
            };
            if tokens[0] == "states" {
                if header.is_some() {
                    return Err(err("duplicate header".into()));
                }
                if tokens.len() != 6 || tokens[2] != "actions" || tokens[4] != "gamma" {
                    return Err(err("expected `states N actions M gamma G`".into()));
                }
                let n = parse_num::<usize>(tokens[1], line_no)?;
                let m = parse_num::<usize>(tokens[3], line_no)?;
                let g = parse_num::<f64>(tokens[5], line_no)?;
                header = Some((n, m, g));
                transitions = vec![Vec::new(); n * m];
                r1 = TableReward::zeros(n, m);
                r2 = TableReward::zeros(n, m);
                continue;
            }
            let Some((n, m, _)) = header else {
                return Err(err("header `states N actions M gamma G` must come first".into()));
            };
            let state_in_range = |s: usize| {
                if s < n {
                    Ok(s)
                } else {
                    Err(err(format!("state {s} out of range (states {n})")))
                }
            };
            let action_in_range = |a: usize| {
                if a < m {
                    Ok(a)
                } else {
                    Err(err(format!("action {a} out of range (actions {m})")))
                }
            };
            match tokens[0] {
                "T" => {
                    if tokens.len() != 4 && tokens.len() != 5 {
                        return Err(err("expected `T s a s' [p]`".into()));
                    }
                    let s = state_in_range(parse_num(tokens[1], line_no)?)?;
                    let a = action_in_range(parse_num(tokens[2], line_no)?)?;
                    let next = state_in_range(parse_num(tokens[3], line_no)?)?;
                    let p = if tokens.len() == 5 {
                        parse_num::<f64>(tokens[4], line_no)?
                    } else {
                        1.0
                    };
                    transitions[s * m + a].push((next, p));
                }
                "terminal" => {
                    if tokens.len() != 2 {
                        return Err(err("expected `terminal s`".into()));
                    }
                    terminal.push(state_in_range(parse_num(tokens[1], line_no)?)?);
                }
                "initial" => {
                    if tokens.len() != 2 {
                        return Err(err("expected `initial s`".into()));
                    }
                    initial = state_in_range(parse_num(tokens[1], line_no)?)?;
                }
                "R1" | "R2" => {
                    if tokens.len() != 4 {
                        return Err(err(format!("expected `{} s a v`", tokens[0])));
                    }
                    let s = state_in_range(parse_num(tokens[1], line_no)?)?;
                    let a = action_in_range(parse_num(tokens[2], line_no)?)?;
                    let v = parse_num::<f64>(tokens[3], line_no)?;
                    if !v.is_finite() {
                        return Err(err(format!("non-finite reward {v}")));
                    }
                    if tokens[0] == "R1" {
                        r1.set(s, a, v);
                    } else {
                        r2.set(s, a, v);
                    }
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }

        let Some((n, m, gamma)) = header else {
            return Err(SorsError::Parse {
                line: 0,
                message: "missing header `states N actions M gamma G`".into(),
            });
        };
        for (idx, dist) in transitions.iter().enumerate() {
            if dist.is_empty() {
                return Err(SorsError::Parse {
                    line: 0,
                    message: format!("no `T` line for state {} action {}", idx / m, idx % m),
                });
            }
        }
        let mdp = MdpSpec::new(n, m, transitions, initial, &terminal, gamma)?;
        Ok(Self { mdp, r1, r2 })
    }
}

fn parse_num<T: std::str::FromStr>(token: &str, line: usize) -> Result<T> {
    token.parse().map_err(|_| SorsError::Parse {
        line,
        message: format!("cannot parse `{token}` as a number"),
    })
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            match step.obs.discrete {
                Some(s) => write!(f, "({s},{})", step.action)?,
                None => write!(f, "(?,{})", step.action)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj_with_rewards(rewards: &[f64]) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| Step::new(Observation::discrete(t), 0, r))
            .collect();
        Trajectory::new(steps, 1.0).unwrap()
    }

    /// Reward that reads back the sparse reward recorded at each state id.
    fn recorded(traj: &Trajectory) -> impl Fn(&Observation, usize) -> f64 + '_ {
        move |obs: &Observation, _| traj.steps()[obs.discrete.unwrap()].sparse_reward
    }

    #[test]
    fn discounted_return_examples() {
        let t = traj_with_rewards(&[1.0, 2.0, 3.0]);
        assert_eq!(discounted_return(&t, &recorded(&t), 1.0).unwrap(), 6.0);
        let t = traj_with_rewards(&[1.0, 2.0]);
        assert_eq!(discounted_return(&t, &recorded(&t), 0.5).unwrap(), 2.0);
        let t = traj_with_rewards(&[5.0]);
        for g in [0.1, 0.5, 0.99, 1.0] {
            assert_eq!(discounted_return(&t, &recorded(&t), g).unwrap(), 5.0);
        }
    }

    #[test]
    fn sparse_return_examples() {
        assert_eq!(sparse_return(&traj_with_rewards(&[0.0, 0.0, 3.0]), 1.0).unwrap(), 3.0);
        assert_eq!(sparse_return(&traj_with_rewards(&[0.0; 6]), 0.9).unwrap(), 0.0);
        let r = sparse_return(&traj_with_rewards(&[0.0, 0.0, 3.0]), 0.9).unwrap();
        assert!((r - 2.43).abs() < 1e-12);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(matches!(Trajectory::new(vec![], 1.0), Err(SorsError::Contract(_))));
    }

    #[test]
    fn invalid_gamma_is_rejected() {
        let t = traj_with_rewards(&[1.0]);
        assert!(sparse_return(&t, 0.0).is_err());
        assert!(sparse_return(&t, 1.5).is_err());
    }

    #[test]
    fn order_compare_examples() {
        let r = |obs: &Observation, _| obs.discrete.unwrap() as f64;
        let one = Trajectory::from_states(&[(1, 0)], 1.0).unwrap();
        let two = Trajectory::from_states(&[(2, 0)], 1.0).unwrap();
        assert_eq!(order_compare(&one, &two, &r, 1.0, 0.0).unwrap(), Ordering::Less);
        assert_eq!(order_compare(&two, &two, &r, 1.0, 0.0).unwrap(), Ordering::Equal);
        assert_eq!(compare_returns(2.0 + 1e-9, 2.0, 1e-6), Ordering::Equal);
        assert!(order_compare(&one, &two, &r, 1.0, -1.0).is_err());
    }

    #[test]
    fn cached_sparse_return_matches_recomputation() {
        let steps = (0..7)
            .map(|t| Step::new(Observation::discrete(t), 0, (t % 3) as f64))
            .collect();
        let t = Trajectory::new(steps, 0.9).unwrap();
        assert!((t.cached_sparse_return() - sparse_return(&t, 0.9).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn parses_mdp_file() {
        let text = "\
# three state chain
states 3 actions 2 gamma 0.9
T 0 0 0
T 0 1 1
T 1 0 0
T 1 1 2
T 2 0 2
T 2 1 2
terminal 2
R1 2 0 1
R1 2 1 1
R2 2 0 2.5
";
        let file = MdpFile::parse(text).unwrap();
        assert_eq!(file.mdp.num_states(), 3);
        assert!(file.mdp.is_deterministic());
        assert!(file.mdp.is_terminal(2));
        assert_eq!(file.r1.get(2, 1), 1.0);
        assert_eq!(file.r2.get(2, 0), 2.5);
        assert_eq!(file.r2.get(2, 1), 0.0);
        assert_eq!(file.mdp.next_state(1, 1), Some(2));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "states 1 actions 1 gamma 1\nT 0 0 4\n";
        match MdpFile::parse(text) {
            Err(SorsError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(MdpFile::parse("T 0 0 0\n").is_err());
        assert!(MdpFile::parse("states 2 actions 1 gamma 1\nT 0 0 1\n").is_err());
    }

    #[test]
    fn stochastic_transitions_clear_deterministic_flag() {
        let text = "states 2 actions 1 gamma 0.9\nT 0 0 0 0.5\nT 0 0 1 0.5\nT 1 0 1\n";
        let file = MdpFile::parse(text).unwrap();
        assert!(!file.mdp.is_deterministic());
        assert_eq!(file.mdp.next_state(0, 0), None);
    }

    #[test]
    fn distributions_must_sum_to_one() {
        let bad = MdpSpec::new(1, 1, vec![vec![(0, 0.7)]], 0, &[], 0.9);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn return_is_linear_in_reward(
            rewards in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..12),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            gamma in 0.05..1.0f64,
        ) {
            let steps = (0..rewards.len())
                .map(|t| Step::new(Observation::discrete(t), 0, 0.0))
                .collect();
            let traj = Trajectory::new(steps, gamma).unwrap();
            let r1 = |o: &Observation, _| rewards[o.discrete.unwrap()].0;
            let r2 = |o: &Observation, _| rewards[o.discrete.unwrap()].1;
            let combo = |o: &Observation, act| a * r1(o, act) + b * r2(o, act);
            let lhs = discounted_return(&traj, &combo, gamma).unwrap();
            let rhs = a * discounted_return(&traj, &r1, gamma).unwrap()
                + b * discounted_return(&traj, &r2, gamma).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn order_compare_is_antisymmetric(
            x in prop::collection::vec(-3.0..3.0f64, 1..6),
            y in prop::collection::vec(-3.0..3.0f64, 1..6),
            tol in 0.0..0.5f64,
        ) {
            let mk = |v: &[f64], offset: usize| {
                let steps = v.iter().enumerate()
                    .map(|(t, _)| Step::new(Observation::discrete(offset + t), 0, 0.0))
                    .collect();
                Trajectory::new(steps, 0.9).unwrap()
            };
            let table: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
            let r = |o: &Observation, _| table[o.discrete.unwrap()];
            let ti = mk(&x, 0);
            let tj = mk(&y, x.len());
            let fwd = order_compare(&ti, &tj, &r, 0.9, tol).unwrap();
            let bwd = order_compare(&tj, &ti, &r, 0.9, tol).unwrap();
            prop_assert_eq!(fwd, bwd.reverse());
        }

        #[test]
        fn constant_reward_undiscounted_is_length_times_constant(
            len in 1usize..40,
            c in -4i32..4,
        ) {
            let traj = Trajectory::from_states(&vec![(0, 0); len], 1.0).unwrap();
            let c = c as f64;
            let r = move |_: &Observation, _| c;
            prop_assert_eq!(discounted_return(&traj, &r, 1.0).unwrap(), c * len as f64);
        }
    }
}
