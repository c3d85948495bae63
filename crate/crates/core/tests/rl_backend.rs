mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sors_core::mdp::{MdpSpec, Observation, TableReward};
use sors_core::nn::AdamConfig;
use sors_core::rl::{
    value_iteration, Agent, NeuralQ, NeuralQConfig, RecordedReward, Replay, ReplayTransition, TabularConfig,
    TabularSoftQ,
};

fn chain3(gamma: f64) -> (MdpSpec, TableReward) {
    let mdp = MdpSpec::deterministic(
        3,
        2,
        |s, a| if s == 2 { 2 } else if a == 1 { s + 1 } else { s.saturating_sub(1) },
        0,
        &[2],
        gamma,
    )
    .unwrap();
    let r = TableReward::from_fn(3, 2, |s, _| if s == 2 { 1.0 } else { 0.0 });
    (mdp, r)
}

fn log_sum_exp_value(q: &[f64], alpha: f64) -> f64 {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + alpha * q.iter().map(|v| ((v - m) / alpha).exp()).sum::<f64>().ln()
}

/// Replay holding every transition of a finite deterministic MDP once.
fn full_replay(mdp: &MdpSpec, r: &TableReward) -> Replay {
    let mut replay = Replay::new(mdp.num_states() * mdp.num_actions()).unwrap();
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let next = mdp.next_state(s, a).unwrap();
            let tr = ReplayTransition {
                state: Observation::discrete(s),
                action: a,
                next_state: Observation::discrete(next),
                terminal: mdp.is_terminal(s),
            };
            replay.push(tr, r.get(s, a));
        }
    }
    replay
}

#[test]
fn value_iteration_on_the_three_state_chain() {
    let (mdp, r) = chain3(0.9);
    let sol = value_iteration(&mdp, &r, 1e-12).unwrap();
    // Right from 0 reaches the rewarding terminal after two discounted steps.
    assert!((sol.q.get(0, 1) - 0.81).abs() < 1e-10);
    assert!((sol.q.get(1, 1) - 0.9).abs() < 1e-10);
    assert!((sol.q.get(2, 0) - 1.0).abs() < 1e-10);
    assert!((sol.q.get(0, 0) - 0.9 * 0.81).abs() < 1e-10);
    assert!(sol.policies.contains(&[1, 1, 0]));
}

#[test]
fn tabular_soft_q_reaches_the_soft_fixed_point_and_tracks_value_iteration() {
    let (mdp, r) = chain3(0.9);
    let alpha = 1e-3;
    let config = TabularConfig {
        learning_rate: 0.5,
        alpha,
        gamma: 0.9,
        batch_size: 50,
    };
    let mut agent = TabularSoftQ::new(3, 2, config);
    let replay = full_replay(&mdp, &r);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2_000 {
        agent.update(&replay, &RecordedReward, &mut rng).unwrap();
    }

    // Soft value iteration, computed here independently.
    let mut soft = [[0.0f64; 2]; 3];
    for _ in 0..10_000 {
        let mut next = soft;
        for s in 0..3 {
            for a in 0..2 {
                next[s][a] = r.get(s, a);
                if !mdp.is_terminal(s) {
                    let s2 = mdp.next_state(s, a).unwrap();
                    next[s][a] += 0.9 * log_sum_exp_value(&soft[s2], alpha);
                }
            }
        }
        soft = next;
    }
    let hard = value_iteration(&mdp, &r, 1e-12).unwrap();
    // The soft backup exceeds the hard one by at most alpha ln|A| per step.
    let entropy_gap = alpha * 2f64.ln() / (1.0 - 0.9);
    for s in 0..3 {
        for a in 0..2 {
            let q = agent.table().get(s, a);
            assert!((q - soft[s][a]).abs() < 1e-9, "soft fixed point ({s},{a}): {q} vs {}", soft[s][a]);
            let diff = q - hard.q.get(s, a);
            assert!((-1e-9..=entropy_gap).contains(&diff), "({s},{a}) gap {diff}");
        }
    }
}

#[test]
fn scaled_rewards_keep_greedy_policy_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 50 {
        let mdp = common::random_mdp(&mut rng, 6, 3);
        if mdp.gamma() >= 1.0 {
            continue;
        }
        let r = common::random_reward(&mut rng, &mdp);
        let a = value_iteration(&mdp, &r, 1e-12).unwrap();
        let b = value_iteration(&mdp, &r.scaled(2.0), 1e-12).unwrap();
        assert_eq!(a.policies, b.policies);
        for s in 0..mdp.num_states() {
            for act in 0..mdp.num_actions() {
                assert!((2.0 * a.q.get(s, act) - b.q.get(s, act)).abs() < 1e-8);
            }
        }
        checked += 1;
    }
}

fn features(x: f64) -> Observation {
    Observation::continuous(vec![x, 1.0 - x])
}

fn neural(target_period: u64, seed: u64) -> NeuralQ {
    let config = NeuralQConfig {
        hidden: vec![8],
        adam: AdamConfig::default().with_learning_rate(1e-2),
        alpha: 0.3,
        gamma: 0.8,
        batch_size: 4,
        target_period,
    };
    NeuralQ::new(2, 3, config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn neural_targets_match_the_soft_bellman_closed_form() {
    let q = neural(100, 1);
    let live = ReplayTransition {
        state: features(0.2),
        action: 1,
        next_state: features(0.7),
        terminal: false,
    };
    let end = ReplayTransition {
        terminal: true,
        ..live.clone()
    };
    let targets = q.targets(&[(&live, 0.5), (&end, -1.0)]).unwrap();
    let next = q.target().forward(&[0.7, 0.3]).unwrap();
    let expected = 0.5 + 0.8 * log_sum_exp_value(&next, 0.3);
    assert!((targets[0] - expected).abs() < 1e-12);
    assert_eq!(targets[1], -1.0);
}

#[test]
fn neural_fit_reduces_the_regression_loss() {
    let mut q = neural(1_000, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let transitions: Vec<ReplayTransition> = (0..16)
        .map(|_| ReplayTransition {
            state: features(rng.gen_range(0.0..1.0)),
            action: rng.gen_range(0..3),
            next_state: features(0.0),
            terminal: true,
        })
        .collect();
    let batch: Vec<(&ReplayTransition, f64)> = transitions.iter().map(|t| (t, t.state.features[0] * 2.0)).collect();
    let targets: Vec<f64> = batch.iter().map(|b| b.1).collect();
    let before = q.loss(&batch, &targets).unwrap();
    for _ in 0..500 {
        q.fit_step(&batch, &targets).unwrap();
    }
    let after = q.loss(&batch, &targets).unwrap();
    assert!(after < 0.05 * before, "loss {before} -> {after}");
}

#[test]
fn target_network_is_copied_every_period() {
    let mut q = neural(5, 4);
    let initial = q.target().params().to_vec();
    let tr = ReplayTransition {
        state: features(0.4),
        action: 0,
        next_state: features(0.9),
        terminal: false,
    };
    for k in 1..=12u64 {
        q.neural_q_update(&[(&tr, 1.0)]).unwrap();
        let synced = q.target().params() == q.online().params();
        if k % 5 == 0 {
            assert!(synced, "update {k}");
        } else {
            assert!(!synced, "update {k}");
        }
        if k < 5 {
            assert_eq!(q.target().params(), &initial[..]);
        }
    }
    assert_eq!(q.updates(), 12);
}

#[test]
fn frozen_regression_loss_decreases_over_the_first_adam_steps() {
    let mut monotone = 0;
    for seed in 0..10u64 {
        let config = NeuralQConfig {
            hidden: vec![16, 16],
            adam: AdamConfig::default().with_learning_rate(1e-3),
            ..NeuralQConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut q = NeuralQ::new(2, 3, config, &mut rng).unwrap();
        let transitions: Vec<ReplayTransition> = (0..32)
            .map(|_| ReplayTransition {
                state: features(rng.gen_range(0.0..1.0)),
                action: rng.gen_range(0..3),
                next_state: features(rng.gen_range(0.0..1.0)),
                terminal: rng.gen_bool(0.2),
            })
            .collect();
        let batch: Vec<(&ReplayTransition, f64)> = transitions.iter().map(|t| (t, rng.gen_range(-1.0..1.0))).collect();
        let targets = q.targets(&batch).unwrap();
        let mut losses = vec![q.loss(&batch, &targets).unwrap()];
        for _ in 0..10 {
            q.fit_step(&batch, &targets).unwrap();
            losses.push(q.loss(&batch, &targets).unwrap());
        }
        monotone += usize::from(losses.windows(2).all(|w| w[1] < w[0]));
    }
    assert!(monotone >= 9, "{monotone}/10 seeds decreased monotonically");
}
