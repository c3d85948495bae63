use std::fmt;

use rand::Rng;

use crate::scalar::soft_max_value;

/// Lowest-index argmax.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = a;
        }
    }
    best
}

/// `exp(Q / alpha) / sum exp(Q / alpha)`.
pub fn boltzmann_probabilities(q: &[f64], alpha: f64) -> Vec<f64> {
    let log_z = soft_max_value(q, alpha) / alpha;
    q.iter().map(|&v| (v / alpha - log_z).exp()).collect()
}

pub fn sample_boltzmann<R: Rng + ?Sized>(q: &[f64], alpha: f64, rng: &mut R) -> usize {
    let probs = boltzmann_probabilities(q, alpha);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // Rounding left the cumulative sum just below u.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// All deterministic policies that act optimally at every non-terminal
/// state, stored as the product of per-state optimal action sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySet {
    /// `None` at terminal states, where the action is irrelevant.
    per_state: Vec<Option<Vec<usize>>>,
}

impl PolicySet {
    /// Per state, every action whose value is within `tie_tol` of the max.
    pub fn from_values(
        num_states: usize,
        num_actions: usize,
        value: impl Fn(usize, usize) -> f64,
        is_terminal: impl Fn(usize) -> bool,
        tie_tol: f64,
    ) -> Self {
        let per_state = (0..num_states)
            .map(|s| {
                if is_terminal(s) {
                    return None;
                }
                let row: Vec<f64> = (0..num_actions).map(|a| value(s, a)).collect();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((0..num_actions).filter(|&a| row[a] >= max - tie_tol).collect())
            })
            .collect();
        Self { per_state }
    }

    pub fn num_states(&self) -> usize {
        self.per_state.len()
    }

    pub fn optimal_actions(&self, state: usize) -> Option<&[usize]> {
        self.per_state[state].as_deref()
    }

    /// Number of distinct deterministic policies in the set.
    pub fn count(&self) -> u128 {
        self.per_state
            .iter()
            .flatten()
            .fold(1u128, |acc, actions| acc.saturating_mul(actions.len() as u128))
    }

    pub fn is_unique(&self) -> bool {
        self.count() == 1
    }

    /// Whether `policy` (one action per state) belongs to the set; entries
    /// at terminal states are ignored.
    pub fn contains(&self, policy: &[usize]) -> bool {
        policy.len() == self.per_state.len()
            && self
                .per_state
                .iter()
                .zip(policy)
                .all(|(opt, a)| opt.as_ref().map_or(true, |acts| acts.contains(a)))
    }

    /// Enumerates the member policies, with action 0 at terminal states.
    pub fn policies(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(self.per_state.len())];
        for opt in &self.per_state {
            let choices: &[usize] = opt.as_deref().unwrap_or(&[0]);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

impl fmt::Display for PolicySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, opt) in self.per_state.iter().enumerate() {
            if s > 0 {
                write!(f, " ")?;
            }
            match opt {
                None => write!(f, "s{s}=terminal")?,
                Some(acts) => {
                    let list: Vec<String> = acts.iter().map(|a| a.to_string()).collect();
                    write!(f, "s{s}={{{}}}", list.join(","))?
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_action(&[0.0, 10.0]), 1);
        assert_eq!(greedy_action(&[1.0, 1.0]), 0);
        assert_eq!(greedy_action(&[-1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn boltzmann_probabilities_sum_to_one() {
        for q in [vec![0.0, 0.0], vec![1e3, -1e3, 0.0], vec![0.1, 0.2, 0.3, 0.4]] {
            for alpha in [1e-3, 0.1, 1.0, 50.0] {
                let p = boltzmann_probabilities(&q, alpha);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_boltzmann_passes_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            counts[sample_boltzmann(&[0.0, 0.0], 0.1, &mut rng)] += 1;
        }
        let expected = n as f64 / 2.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1 degree of freedom: p > 0.001 iff chi2 < 10.828.
        assert!(chi2 < 10.828, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn policy_set_counts_and_membership() {
        let q = [[1.0, 1.0], [0.0, 2.0], [5.0, 5.0]];
        let set = PolicySet::from_values(3, 2, |s, a| q[s][a], |s| s == 2, 1e-9);
        assert_eq!(set.count(), 2);
        assert!(set.contains(&[0, 1, 1]));
        assert!(set.contains(&[1, 1, 0]));
        assert!(!set.contains(&[1, 0, 0]));
        assert_eq!(set.policies(), vec![vec![0, 1, 0], vec![1, 1, 0]]);
        assert_eq!(set.to_string(), "s0={0,1} s1={1} s2=terminal");
    }
}
