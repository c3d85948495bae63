#![allow(dead_code)]

pub mod gradcheck;

use std::cmp::Ordering;

use rand::Rng;
use sors_core::mdp::{compare_returns, MdpSpec, TableReward};

/// Random deterministic MDP with up to `max_states` states and `max_actions`
/// actions; each state is terminal with probability 0.3.
pub fn random_mdp<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize) -> MdpSpec {
    let n = rng.gen_range(1..=max_states);
    let m = rng.gen_range(1..=max_actions);
    let next: Vec<usize> = (0..n * m).map(|_| rng.gen_range(0..n)).collect();
    let terminals: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
    let gamma = [0.5, 0.9, 1.0][rng.gen_range(0..3)];
    MdpSpec::deterministic(n, m, |s, a| next[s * m + a], 0, &terminals, gamma).unwrap()
}

/// Integer rewards in `[-2, 2]`.
pub fn random_reward<R: Rng>(rng: &mut R, mdp: &MdpSpec) -> TableReward {
    let m = mdp.num_actions();
    let values: Vec<f64> = (0..mdp.num_states() * m).map(|_| rng.gen_range(-2..=2) as f64).collect();
    TableReward::from_fn(mdp.num_states(), m, |s, a| values[s * m + a])
}

/// Compares every ordered pair directly.
pub fn pairwise_equivalent(x: &[f64], y: &[f64], tol: f64) -> bool {
    for i in 0..x.len() {
        for j in 0..x.len() {
            if compare_returns(x[i], x[j], tol) != compare_returns(y[i], y[j], tol) {
                return false;
            }
        }
    }
    true
}

pub fn orders_differ(x: (f64, f64), y: (f64, f64), tol: f64) -> bool {
    compare_returns(x.0, x.1, tol) != compare_returns(y.0, y.1, tol)
}

/// Counts trajectories of length `1..=h` from `(s, a)` by direct recursion
/// over successors.
pub fn recursive_count(mdp: &MdpSpec, s: usize, a: usize, h: usize) -> u64 {
    if h == 1 || mdp.is_terminal(s) {
        return 1;
    }
    let s2 = mdp.next_state(s, a).unwrap();
    1 + (0..mdp.num_actions()).map(|a2| recursive_count(mdp, s2, a2, h - 1)).sum::<u64>()
}

/// Best return over complete trajectories from `(s, a)` by recursion.
pub fn recursive_best(mdp: &MdpSpec, r: &TableReward, s: usize, a: usize, h: usize, gamma: f64) -> f64 {
    let here = r.get(s, a);
    if h == 1 || mdp.is_terminal(s) {
        return here;
    }
    let s2 = mdp.next_state(s, a).unwrap();
    here + gamma
        * (0..mdp.num_actions())
            .map(|a2| recursive_best(mdp, r, s2, a2, h - 1, gamma))
            .fold(f64::NEG_INFINITY, f64::max)
}

/// Relative error for finite-difference checks. The 1e-3 floor turns the
/// check into an absolute one for near-zero gradients, where central
/// differences carry ~1e-11 of rounding noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn ordering_of(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}
