//! Brute-force checks of total-order equivalence between reward functions
//! and of the optimal-policy sets they induce on small deterministic MDPs.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{contract, Result, SorsError};
use crate::mdp::{compare_returns, discounted_return, MdpSpec, RewardFn, Trajectory};
use crate::rl::{PolicySet, QTable};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug)]
pub struct EnumeratedTrajectory {
    pub start: (usize, usize),
    pub trajectory: Trajectory,
    /// Reached the horizon or ended at a terminal state.
    pub complete: bool,
}

/// Every trajectory of length `1..=horizon` that a deterministic MDP can
/// produce from each `(s, a)`. A step taken at a terminal state is the last
/// step of its trajectory.
#[derive(Clone, Debug)]
pub struct TrajectorySet {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    trajectories: Vec<EnumeratedTrajectory>,
    /// `ranges[s * num_actions + a]` indexes the trajectories starting at `(s, a)`.
    ranges: Vec<std::ops::Range<usize>>,
}

impl TrajectorySet {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EnumeratedTrajectory> {
        self.trajectories.iter()
    }

    pub fn starting_at(&self, state: usize, action: usize) -> &[EnumeratedTrajectory] {
        &self.trajectories[self.ranges[state * self.num_actions + action].clone()]
    }

    pub fn count_of_length(&self, state: usize, action: usize, length: usize) -> usize {
        self.starting_at(state, action)
            .iter()
            .filter(|t| t.trajectory.len() == length)
            .count()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// Number of trajectories [`enumerate_trajectories`] would produce.
pub fn trajectory_count(mdp: &MdpSpec, horizon: usize) -> Result<u128> {
    let next = deterministic_successors(mdp)?;
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    // counts[s * m + a] = trajectories of length <= k starting at (s, a)
    let mut counts = vec![1u128; n * m];
    for _ in 1..horizon {
        let per_state: Vec<u128> = (0..n)
            .map(|s| counts[s * m..(s + 1) * m].iter().fold(0u128, |acc, &c| acc.saturating_add(c)))
            .collect();
        counts = (0..n * m)
            .map(|idx| {
                let s = idx / m;
                if mdp.is_terminal(s) {
                    1
                } else {
                    per_state[next[idx]].saturating_add(1)
                }
            })
            .collect();
    }
    Ok(counts.iter().fold(0u128, |acc, &c| acc.saturating_add(c)))
}

pub fn enumerate_trajectories(mdp: &MdpSpec, horizon: usize) -> Result<TrajectorySet> {
    enumerate_trajectories_capped(mdp, horizon, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_trajectories_capped(mdp: &MdpSpec, horizon: usize, cap: u128) -> Result<TrajectorySet> {
    if horizon == 0 {
        return Err(contract("horizon must be positive"));
    }
    let next = deterministic_successors(mdp)?;
    let required = trajectory_count(mdp, horizon)?;
    if required > cap {
        return Err(SorsError::Capacity { required, cap });
    }
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let mut trajectories = Vec::with_capacity(required as usize);
    let mut ranges = Vec::with_capacity(n * m);
    let mut path = Vec::with_capacity(horizon);
    for s in 0..n {
        for a in 0..m {
            let begin = trajectories.len();
            path.clear();
            extend(mdp, &next, horizon, (s, a), &mut path, &mut trajectories)?;
            ranges.push(begin..trajectories.len());
        }
    }
    Ok(TrajectorySet {
        horizon,
        num_states: n,
        num_actions: m,
        trajectories,
        ranges,
    })
}

fn extend(
    mdp: &MdpSpec,
    next: &[usize],
    horizon: usize,
    step: (usize, usize),
    path: &mut Vec<(usize, usize)>,
    out: &mut Vec<EnumeratedTrajectory>,
) -> Result<()> {
    path.push(step);
    let (s, a) = step;
    let complete = path.len() == horizon || mdp.is_terminal(s);
    out.push(EnumeratedTrajectory {
        start: path[0],
        trajectory: Trajectory::from_states(path, mdp.gamma())?,
        complete,
    });
    if !complete {
        let s2 = next[s * mdp.num_actions() + a];
        for a2 in 0..mdp.num_actions() {
            extend(mdp, next, horizon, (s2, a2), path, out)?;
        }
    }
    path.pop();
    Ok(())
}

fn deterministic_successors(mdp: &MdpSpec) -> Result<Vec<usize>> {
    if !mdp.is_deterministic() {
        return Err(SorsError::Unsupported(
            "trajectory enumeration requires deterministic dynamics".into(),
        ));
    }
    let mut next = Vec::with_capacity(mdp.num_states() * mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            next.push(mdp.next_state(s, a).expect("deterministic MDP has a unique successor"));
        }
    }
    Ok(next)
}

/// A pair of trajectories ordered differently by two rewards.
#[derive(Clone, Debug)]
pub struct Violation {
    pub first: Trajectory,
    pub second: Trajectory,
    /// Returns of `(first, second)` under the first reward.
    pub returns_r1: (f64, f64),
    /// Returns of `(first, second)` under the second reward.
    pub returns_r2: (f64, f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] vs [{}]: r1 returns {} / {}, r2 returns {} / {}",
            self.first, self.second, self.returns_r1.0, self.returns_r1.1, self.returns_r2.0, self.returns_r2.1
        )
    }
}

/// Returns of every trajectory in the set under `r`.
pub fn returns<R: RewardFn + ?Sized>(set: &TrajectorySet, r: &R, gamma: f64) -> Result<Vec<f64>> {
    set.iter().map(|t| discounted_return(&t.trajectory, r, gamma)).collect()
}

/// Checks that `r1` and `r2` order every pair of trajectories in the set
/// the same way, ties included. Runs in `O(n log n)` and agrees exactly with
/// comparing all ordered pairs under [`compare_returns`].
pub fn total_order_equivalent<R1, R2>(
    set: &TrajectorySet,
    r1: &R1,
    r2: &R2,
    gamma: f64,
    tol: f64,
) -> Result<Option<Violation>>
where
    R1: RewardFn + ?Sized,
    R2: RewardFn + ?Sized,
{
    if set.is_empty() {
        return Err(contract("equivalence check over an empty trajectory set"));
    }
    let x = returns(set, r1, gamma)?;
    let y = returns(set, r2, gamma)?;
    Ok(first_disagreement(&x, &y, tol).map(|(i, j)| Violation {
        first: set.trajectories[i].trajectory.clone(),
        second: set.trajectories[j].trajectory.clone(),
        returns_r1: (x[i], x[j]),
        returns_r2: (y[i], y[j]),
    }))
}

/// Finds `(i, j)` with `compare_returns(x[i], x[j]) != compare_returns(y[i], y[j])`.
pub fn first_disagreement(x: &[f64], y: &[f64], tol: f64) -> Option<(usize, usize)> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let min_table = RangeExtreme::new(&ys, |a, b| a < b);
    let max_table = RangeExtreme::new(&ys, |a, b| a > b);

    for p in 0..n {
        // Sorted positions q with compare_returns(xs[q], xs[p]) == Less form a
        // prefix, those with Greater a suffix, the Equal block sits between.
        let lo = xs.partition_point(|&v| v < xs[p] - tol);
        let hi = xs.partition_point(|&v| !(v > xs[p] + tol));
        let below = ys[p] - tol;
        let above = ys[p] + tol;
        if lo > 0 {
            let q = max_table.query(0, lo);
            if !(ys[q] < below) {
                return Some((order[q], order[p]));
            }
        }
        if hi < n {
            let q = min_table.query(hi, n);
            if !(ys[q] > above) {
                return Some((order[q], order[p]));
            }
        }
        let q_min = min_table.query(lo, hi);
        if ys[q_min] < below {
            return Some((order[q_min], order[p]));
        }
        let q_max = max_table.query(lo, hi);
        if ys[q_max] > above {
            return Some((order[q_max], order[p]));
        }
    }
    None
}

/// Sparse table answering arg-extreme queries on half-open ranges.
struct RangeExtreme<'a> {
    values: &'a [f64],
    levels: Vec<Vec<usize>>,
    better: fn(f64, f64) -> bool,
}

impl<'a> RangeExtreme<'a> {
    fn new(values: &'a [f64], better: fn(f64, f64) -> bool) -> Self {
        let mut levels = vec![(0..values.len()).collect::<Vec<_>>()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().expect("level 0 exists");
            let level = (0..=values.len() - 2 * width)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + width]);
                    if better(values[b], values[a]) {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            levels.push(level);
            width *= 2;
        }
        Self { values, levels, better }
    }

    /// Index of the extreme over `start..end` (nonempty).
    fn query(&self, start: usize, end: usize) -> usize {
        let k = (usize::BITS - 1 - (end - start).leading_zeros()) as usize;
        let a = self.levels[k][start];
        let b = self.levels[k][end - (1 << k)];
        if (self.better)(self.values[b], self.values[a]) {
            b
        } else {
            a
        }
    }
}

/// Fraction of unordered trajectory pairs on which the two rewards agree.
pub fn order_agreement<R1, R2>(set: &TrajectorySet, r1: &R1, r2: &R2, gamma: f64, tol: f64) -> Result<f64>
where
    R1: RewardFn + ?Sized,
    R2: RewardFn + ?Sized,
{
    let x = returns(set, r1, gamma)?;
    let y = returns(set, r2, gamma)?;
    let n = x.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            agree += u64::from(compare_returns(x[i], x[j], tol) == compare_returns(y[i], y[j], tol));
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// `Q*(s, a)` as the best return over complete trajectories from `(s, a)`.
pub fn optimal_q<R: RewardFn + ?Sized>(set: &TrajectorySet, r: &R, gamma: f64) -> Result<QTable> {
    let mut q = QTable::zeros(set.num_states, set.num_actions);
    for s in 0..set.num_states {
        for a in 0..set.num_actions {
            let mut best = f64::NEG_INFINITY;
            for t in set.starting_at(s, a).iter().filter(|t| t.complete) {
                best = best.max(discounted_return(&t.trajectory, r, gamma)?);
            }
            q.set(s, a, best);
        }
    }
    Ok(q)
}

/// Deterministic policies whose action at every non-terminal state attains
/// the horizon-`H` optimum within `tol`.
pub fn optimal_policy_set<R: RewardFn + ?Sized>(
    mdp: &MdpSpec,
    r: &R,
    horizon: usize,
    gamma: f64,
    tol: f64,
) -> Result<PolicySet> {
    let set = enumerate_trajectories(mdp, horizon)?;
    policy_set_from(&set, mdp, r, gamma, tol)
}

fn policy_set_from<R: RewardFn + ?Sized>(
    set: &TrajectorySet,
    mdp: &MdpSpec,
    r: &R,
    gamma: f64,
    tol: f64,
) -> Result<PolicySet> {
    let q = optimal_q(set, r, gamma)?;
    Ok(PolicySet::from_values(
        mdp.num_states(),
        mdp.num_actions(),
        |s, a| q.get(s, a),
        |s| mdp.is_terminal(s),
        tol,
    ))
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub first_violation: Option<Violation>,
    pub optimal_sets_equal: bool,
    pub policies_r1: PolicySet,
    pub policies_r2: PolicySet,
    pub trajectory_count: usize,
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "equivalent: {}", self.equivalent)?;
        writeln!(f, "optimal_sets_equal: {}", self.optimal_sets_equal)?;
        writeln!(f, "trajectories: {}", self.trajectory_count)?;
        writeln!(f, "optimal_policies_r1: {} [{}]", self.policies_r1.count(), self.policies_r1)?;
        writeln!(f, "optimal_policies_r2: {} [{}]", self.policies_r2.count(), self.policies_r2)?;
        match &self.first_violation {
            Some(v) => writeln!(f, "violation: {v}"),
            None => writeln!(f, "violation: none"),
        }
    }
}

/// Runs the equivalence check and compares optimal-policy sets. An
/// equivalent pair with different optimal sets is reported as an error.
pub fn verify_theorem<R1, R2>(
    mdp: &MdpSpec,
    r1: &R1,
    r2: &R2,
    horizon: usize,
    gamma: f64,
    tol: f64,
) -> Result<EquivalenceReport>
where
    R1: RewardFn + ?Sized,
    R2: RewardFn + ?Sized,
{
    let set = enumerate_trajectories(mdp, horizon)?;
    let first_violation = total_order_equivalent(&set, r1, r2, gamma, tol)?;
    let policies_r1 = policy_set_from(&set, mdp, r1, gamma, tol)?;
    let policies_r2 = policy_set_from(&set, mdp, r2, gamma, tol)?;
    let report = EquivalenceReport {
        equivalent: first_violation.is_none(),
        first_violation,
        optimal_sets_equal: policies_r1 == policies_r2,
        policies_r1,
        policies_r2,
        trajectory_count: set.len(),
    };
    if report.equivalent && !report.optimal_sets_equal {
        return Err(SorsError::TheoremViolation(format!(
            "r1 optimal set [{}], r2 optimal set [{}]",
            report.policies_r1, report.policies_r2
        )));
    }
    Ok(report)
}

/// Sort order helper used by tests and reports.
pub fn cmp_returns(a: f64, b: f64, tol: f64) -> Ordering {
    compare_returns(a, b, tol)
}
