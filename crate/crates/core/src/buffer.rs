//! FIFO store of complete episodes, the source of self-labelled trajectory
//! pairs.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{contract, Result, SorsError};
use crate::mdp::{sparse_return, Trajectory, DEFAULT_TIE_TOLERANCE};

/// Attempts per pair before sampling gives up with `NoRankablePairs`.
pub const PAIR_RETRY_CAP: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preference {
    First,
    Second,
}

/// Two trajectories whose sparse returns differ by more than the tie
/// tolerance, labelled with the one that has the larger return.
#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub first: Arc<Trajectory>,
    pub second: Arc<Trajectory>,
    pub preferred: Preference,
}

impl LabeledPair {
    pub fn preferred(&self) -> &Trajectory {
        match self.preferred {
            Preference::First => &self.first,
            Preference::Second => &self.second,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub id: u64,
    pub trajectory: Arc<Trajectory>,
    pub sparse_return: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryBuffer {
    entries: VecDeque<Entry>,
    capacity: usize,
    inserted: u64,
    gamma: f64,
    tie_tol: f64,
}

impl TrajectoryBuffer {
    pub fn new(capacity: usize, gamma: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(contract("buffer capacity must be positive"));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            inserted: 0,
            gamma,
            tie_tol: DEFAULT_TIE_TOLERANCE,
        })
    }

    pub fn with_tie_tolerance(mut self, tol: f64) -> Self {
        self.tie_tol = tol;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of trajectories ever appended.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie_tol
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter()
    }

    /// Stores a complete episode, evicting the oldest one when full.
    pub fn append(&mut self, trajectory: impl Into<Arc<Trajectory>>) -> Result<()> {
        let trajectory = trajectory.into();
        let sparse_return = sparse_return(&trajectory, self.gamma)?;
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(Entry {
            id: self.inserted,
            trajectory,
            sparse_return,
        });
        self.inserted += 1;
        Ok(())
    }

    pub fn view(&self) -> BufferView {
        BufferView {
            entries: self.entries.iter().cloned().collect(),
            tie_tol: self.tie_tol,
        }
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<LabeledPair>> {
        sample_pairs(&self.entries.iter().collect::<Vec<_>>(), self.tie_tol, n, rng)
    }

    /// Splits the current contents into disjoint train and evaluation views.
    /// The evaluation view gets `floor(fraction * len)` entries, clamped to
    /// `[1, len - 1]`; the training view gets the rest.
    pub fn holdout_split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(BufferView, BufferView)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(contract(format!("holdout fraction must lie in (0, 1), got {fraction}")));
        }
        let n = self.entries.len();
        if n < 2 {
            return Err(contract("holdout split needs at least two trajectories"));
        }
        let eval_count = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let (eval_idx, train_idx) = order.split_at(eval_count);
        let pick = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            BufferView {
                entries: idx.into_iter().map(|i| self.entries[i].clone()).collect(),
                tie_tol: self.tie_tol,
            }
        };
        Ok((pick(train_idx), pick(eval_idx)))
    }

    /// Writes every stored episode in a line-oriented text format: a
    /// `# episode <id> return <R>` line, then one line per step with the
    /// space-separated state features, a tab, the action id, a tab, and the
    /// sparse reward.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in &self.entries {
            writeln!(w, "# episode {} return {}", e.id, e.sparse_return)?;
            for step in e.trajectory.steps() {
                let features: Vec<String> = step.obs.features.iter().map(|f| f.to_string()).collect();
                writeln!(w, "{}\t{}\t{}", features.join(" "), step.action, step.sparse_reward)?;
            }
        }
        Ok(())
    }
}

/// Read-only subset of a buffer's entries.
#[derive(Clone, Debug)]
pub struct BufferView {
    entries: Vec<Entry>,
    tie_tol: f64,
}

impl BufferView {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<LabeledPair>> {
        sample_pairs(&self.entries.iter().collect::<Vec<_>>(), self.tie_tol, n, rng)
    }

    /// Every unordered pair with distinct sparse returns.
    pub fn rankable_pairs(&self) -> Vec<LabeledPair> {
        rankable_pairs(&self.entries.iter().collect::<Vec<_>>(), self.tie_tol)
    }
}

impl TrajectoryBuffer {
    pub fn rankable_pairs(&self) -> Vec<LabeledPair> {
        rankable_pairs(&self.entries.iter().collect::<Vec<_>>(), self.tie_tol)
    }
}

fn label(a: &Entry, b: &Entry, tol: f64) -> Option<LabeledPair> {
    let preferred = if a.sparse_return > b.sparse_return + tol {
        Preference::First
    } else if b.sparse_return > a.sparse_return + tol {
        Preference::Second
    } else {
        return None;
    };
    Some(LabeledPair {
        first: a.trajectory.clone(),
        second: b.trajectory.clone(),
        preferred,
    })
}

fn rankable_pairs(entries: &[&Entry], tol: f64) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            if let Some(p) = label(entries[i], entries[j], tol) {
                out.push(p);
            }
        }
    }
    out
}

fn sample_pairs<R: Rng + ?Sized>(entries: &[&Entry], tol: f64, n: usize, rng: &mut R) -> Result<Vec<LabeledPair>> {
    if n == 0 {
        return Err(contract("must sample at least one pair"));
    }
    if entries.len() < 2 {
        return Err(SorsError::NoRankablePairs);
    }
    let (lo, hi) = entries.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.sparse_return), hi.max(e.sparse_return))
    });
    if hi - lo <= tol {
        return Err(SorsError::NoRankablePairs);
    }
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut found = None;
        for _ in 0..PAIR_RETRY_CAP {
            let i = rng.gen_range(0..entries.len());
            let mut j = rng.gen_range(0..entries.len() - 1);
            if j >= i {
                j += 1;
            }
            if let Some(p) = label(entries[i], entries[j], tol) {
                found = Some(p);
                break;
            }
        }
        pairs.push(found.ok_or(SorsError::NoRankablePairs)?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Observation, Step};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(tag: usize, rewards: &[f64]) -> Trajectory {
        let steps = rewards
            .iter()
            .map(|&r| Step::new(Observation::new(vec![tag as f64], Some(tag)), 0, r))
            .collect();
        Trajectory::new(steps, 1.0).unwrap()
    }

    fn tags(buffer: &TrajectoryBuffer) -> Vec<usize> {
        buffer
            .entries()
            .map(|e| e.trajectory.steps()[0].obs.discrete.unwrap())
            .collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut b = TrajectoryBuffer::new(2, 1.0).unwrap();
        b.append(episode(0, &[0.0])).unwrap();
        assert_eq!(b.len(), 1);
        b.append(episode(1, &[0.0])).unwrap();
        b.append(episode(2, &[0.0])).unwrap();
        assert_eq!(tags(&b), vec![1, 2]);
        assert_eq!(b.inserted(), 3);
    }

    #[test]
    fn caches_sparse_return() {
        let mut b = TrajectoryBuffer::new(4, 1.0).unwrap();
        b.append(episode(0, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(b.entries().next().unwrap().sparse_return, 1.0);
    }

    #[test]
    fn two_distinct_returns_always_prefer_the_better() {
        let mut b = TrajectoryBuffer::new(4, 1.0).unwrap();
        b.append(episode(0, &[0.0])).unwrap();
        b.append(episode(1, &[1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in b.sample_pairs(200, &mut rng).unwrap() {
            assert_eq!(p.preferred().steps()[0].obs.discrete, Some(1));
        }
    }

    #[test]
    fn all_tied_is_no_rankable_pairs() {
        let mut b = TrajectoryBuffer::new(4, 1.0).unwrap();
        for k in 0..3 {
            b.append(episode(k, &[0.5])).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample_pairs(1, &mut rng), Err(SorsError::NoRankablePairs)));
        let mut single = TrajectoryBuffer::new(4, 1.0).unwrap();
        single.append(episode(0, &[1.0])).unwrap();
        assert!(matches!(single.sample_pairs(1, &mut rng), Err(SorsError::NoRankablePairs)));
    }

    #[test]
    fn tied_pairs_are_rejected() {
        // Returns {0, 0, 1}: the (0, 0) pair is never emitted, so every pair
        // contains the return-1 episode, which is always preferred.
        let mut b = TrajectoryBuffer::new(4, 1.0).unwrap();
        b.append(episode(0, &[0.0])).unwrap();
        b.append(episode(1, &[0.0])).unwrap();
        b.append(episode(2, &[1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = b.sample_pairs(10_000, &mut rng).unwrap();
        for p in &pairs {
            let ids = [p.first.steps()[0].obs.discrete, p.second.steps()[0].obs.discrete];
            assert!(ids.contains(&Some(2)));
            assert_eq!(p.preferred().steps()[0].obs.discrete, Some(2));
        }
    }

    #[test]
    fn holdout_split_sizes_and_determinism() {
        let mut b = TrajectoryBuffer::new(10, 1.0).unwrap();
        for k in 0..10 {
            b.append(episode(k, &[k as f64])).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, eval) = b.holdout_split(0.5, &mut rng).unwrap();
        assert_eq!((train.len(), eval.len()), (5, 5));
        let (train, eval) = b.holdout_split(0.2, &mut rng).unwrap();
        assert_eq!((train.len(), eval.len()), (8, 2));
        let mut all = train.ids();
        all.extend(eval.ids());
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u64>>());

        let split = |seed| {
            let (t, e) = b.holdout_split(0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            (t.ids(), e.ids())
        };
        assert_eq!(split(7), split(7));
        assert!(b.holdout_split(1.0, &mut rng).is_err());
    }

    #[test]
    fn rankable_pairs_are_exhaustive() {
        let mut b = TrajectoryBuffer::new(10, 1.0).unwrap();
        for (k, r) in [0.0, 0.0, 1.0, 2.0].iter().enumerate() {
            b.append(episode(k, &[*r])).unwrap();
        }
        // 6 unordered pairs minus the single tie.
        assert_eq!(b.rankable_pairs().len(), 5);
    }

    #[test]
    fn dump_format() {
        let mut b = TrajectoryBuffer::new(2, 1.0).unwrap();
        b.append(episode(3, &[0.0, 1.0])).unwrap();
        let mut out = Vec::new();
        b.dump(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "# episode 0 return 1\n3\t0\t0\n3\t0\t1\n");
    }

    proptest! {
        #[test]
        fn contents_are_last_capacity_appends(capacity in 1usize..8, count in 0usize..30) {
            let mut b = TrajectoryBuffer::new(capacity, 1.0).unwrap();
            for k in 0..count {
                b.append(episode(k, &[0.0])).unwrap();
                prop_assert!(b.len() <= capacity);
            }
            let expected: Vec<usize> = (count.saturating_sub(capacity)..count).collect();
            prop_assert_eq!(tags(&b), expected);
        }

        #[test]
        fn sampled_pairs_respect_labels_and_are_reproducible(
            returns in prop::collection::vec(0u8..4, 2..12),
            seed in any::<u64>(),
        ) {
            let mut b = TrajectoryBuffer::new(16, 1.0).unwrap();
            for (k, &r) in returns.iter().enumerate() {
                b.append(episode(k, &[r as f64])).unwrap();
            }
            let run = |seed| b.sample_pairs(20, &mut ChaCha8Rng::seed_from_u64(seed));
            match run(seed) {
                Ok(pairs) => {
                    let again = run(seed).unwrap();
                    for (p, q) in pairs.iter().zip(&again) {
                        prop_assert!(Arc::ptr_eq(&p.first, &q.first) && Arc::ptr_eq(&p.second, &q.second));
                        let (a, c) = (p.first.cached_sparse_return(), p.second.cached_sparse_return());
                        prop_assert!((a - c).abs() > DEFAULT_TIE_TOLERANCE);
                        let pref = p.preferred().cached_sparse_return();
                        prop_assert_eq!(pref, a.max(c));
                    }
                }
                Err(SorsError::NoRankablePairs) => {
                    prop_assert!(returns.iter().all(|&r| r == returns[0]));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
