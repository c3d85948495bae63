//! Central-difference checks shared by the module tests and the acceptance
//! target. Each returns the worst relative error over its instances.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sors_core::buffer::{LabeledPair, Preference};
use sors_core::mdp::{Observation, Step, Trajectory};
use sors_core::nn::{Activation, Mlp};
use sors_core::reward::{InputEncoder, ReturnMode, RewardNet};

use super::rel_err;

pub const FD_STEP: f64 = 1e-5;

pub fn random_mlp(rng: &mut ChaCha8Rng) -> Mlp<f64> {
    let input = rng.gen_range(1..5);
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let mut layers: Vec<(usize, Activation)> = (0..rng.gen_range(1..3))
        .map(|_| (rng.gen_range(2..7), acts[rng.gen_range(0..3)]))
        .collect();
    layers.push((rng.gen_range(1..4), Activation::Identity));
    let mut m = Mlp::new(input, &layers, rng).unwrap();
    // Zero-initialised biases can park a ReLU on its kink.
    for p in m.params_mut() {
        *p += rng.gen_range(-0.5..0.5);
    }
    m
}

/// `<upstream, f(x)>`, whose gradient is what `Mlp::grad` returns.
fn projected(m: &Mlp<f64>, x: &[f64], up: &[f64]) -> f64 {
    m.forward(x).unwrap().iter().zip(up).map(|(a, b)| a * b).sum()
}

/// Parameter and input gradients of random MLPs. Instances with a
/// pre-activation within 1e-3 of a ReLU kink are redrawn, since central
/// differences straddling the kink measure neither one-sided slope.
pub fn mlp_worst_error(seed: u64, instances: usize) -> f64 {
    let h = FD_STEP;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < instances {
        let mut m = random_mlp(&mut rng);
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let trace = m.forward_trace(&x).unwrap();
        if (0..trace.num_layers()).flat_map(|l| trace.pre_activation(l)).any(|z| z.abs() < 1e-3) {
            continue;
        }
        let up: Vec<f64> = (0..m.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (gp, gx) = m.grad(&x, &up).unwrap();
        for i in 0..m.num_params() {
            let orig = m.params()[i];
            m.params_mut()[i] = orig + h;
            let plus = projected(&m, &x, &up);
            m.params_mut()[i] = orig - h;
            let minus = projected(&m, &x, &up);
            m.params_mut()[i] = orig;
            worst = worst.max(rel_err(gp[i], (plus - minus) / (2.0 * h)));
        }
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (projected(&m, &xp, &up) - projected(&m, &xm, &up)) / (2.0 * h);
            worst = worst.max(rel_err(gx[j], fd));
        }
        checked += 1;
    }
    worst
}

fn random_trajectory(rng: &mut ChaCha8Rng, state_dim: usize, actions: usize) -> Trajectory {
    let len = rng.gen_range(1..8);
    // A small pool of states so that inputs repeat within trajectories.
    let pool: Vec<Vec<f64>> = (0..3).map(|_| (0..state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let steps = (0..len)
        .map(|_| {
            let obs = Observation::continuous(pool[rng.gen_range(0..3)].clone());
            Step::new(obs, rng.gen_range(0..actions), 0.0)
        })
        .collect();
    Trajectory::new(steps, 0.9).unwrap()
}

fn random_pairs(rng: &mut ChaCha8Rng, state_dim: usize, actions: usize) -> Vec<LabeledPair> {
    (0..rng.gen_range(1..5))
        .map(|_| LabeledPair {
            first: Arc::new(random_trajectory(rng, state_dim, actions)),
            second: Arc::new(random_trajectory(rng, state_dim, actions)),
            preferred: if rng.gen_bool(0.5) { Preference::First } else { Preference::Second },
        })
        .collect()
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Trunk and head gradients of the pairwise loss on random reward nets.
/// The head is kept at unit norm, so its gradient is checked against an
/// independent loss: the learned return is linear in the head, with
/// coefficient `k` equal to the return under the unit head `e_k`.
pub fn pair_loss_worst_error(seed: u64, instances: usize) -> f64 {
    let h = FD_STEP;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for instance in 0..instances {
        let (state_dim, actions) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let encoder = InputEncoder::new(state_dim, actions);
        let mode = if instance % 2 == 0 { ReturnMode::Discounted(0.9) } else { ReturnMode::Undiscounted };
        let mut net = RewardNet::<f64>::new(encoder.input_dim(), &[5, 4], 4, &mut rng).unwrap();
        let pairs = random_pairs(&mut rng, state_dim, actions);
        let (_, g_trunk, g_head) = net.pair_loss_grad(&encoder, mode, &pairs).unwrap();

        for i in 0..net.trunk().num_params() {
            let orig = net.trunk().params()[i];
            net.trunk_mut().params_mut()[i] = orig + h;
            let plus = net.pair_loss(&encoder, mode, &pairs).unwrap();
            net.trunk_mut().params_mut()[i] = orig - h;
            let minus = net.pair_loss(&encoder, mode, &pairs).unwrap();
            net.trunk_mut().params_mut()[i] = orig;
            worst = worst.max(rel_err(g_trunk[i], (plus - minus) / (2.0 * h)));
        }

        let w = net.head().to_vec();
        let basis_returns = |t: &Trajectory| -> Vec<f64> {
            (0..w.len())
                .map(|k| {
                    let mut e = vec![0.0; w.len()];
                    e[k] = 1.0;
                    let unit = RewardNet::from_parts(net.trunk().clone(), e).unwrap();
                    unit.learned_return(&encoder, mode, t).unwrap()
                })
                .collect()
        };
        let diffs: Vec<Vec<f64>> = pairs
            .iter()
            .map(|p| {
                let (a, b) = (basis_returns(&p.first), basis_returns(&p.second));
                let sign = if p.preferred == Preference::First { 1.0 } else { -1.0 };
                a.iter().zip(&b).map(|(x, y)| sign * (x - y)).collect()
            })
            .collect();
        let oracle_loss = |w: &[f64]| -> f64 {
            diffs
                .iter()
                .map(|d| softplus(-d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()))
                .sum::<f64>()
                / diffs.len() as f64
        };
        let direct = net.pair_loss(&encoder, mode, &pairs).unwrap();
        assert!((oracle_loss(&w) - direct).abs() < 1e-12, "head oracle disagrees with the loss");
        for k in 0..w.len() {
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            worst = worst.max(rel_err(g_head[k], (oracle_loss(&wp) - oracle_loss(&wm)) / (2.0 * h)));
        }
    }
    worst
}
