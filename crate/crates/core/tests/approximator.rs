mod common;

use approx::assert_relative_eq;
use common::gradcheck;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sors_core::nn::{Adam, AdamConfig, Mlp};

#[test]
fn parameter_and_input_gradients_match_central_differences() {
    let worst = gradcheck::mlp_worst_error(11, 100);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn adam_first_step_moves_each_parameter_by_the_learning_rate() {
    // With bias correction, m_hat = g and v_hat = g^2 on the first step.
    let mut params = vec![1.0, -2.0, 0.5];
    let grads: [f64; 3] = [0.3, -4.0, 1e-3];
    let cfg = AdamConfig::default().with_learning_rate(0.01);
    let mut opt = Adam::new(3, cfg);
    opt.step(&mut params, &grads).unwrap();
    for (i, (&p, &g)) in [1.0, -2.0, 0.5].iter().zip(&grads).enumerate() {
        let expected = p - 0.01 * g / (g.abs() + cfg.epsilon);
        assert_relative_eq!(params[i], expected, epsilon = 1e-15);
    }
}

#[test]
fn adam_minimises_a_quadratic() {
    let target = [3.0, -1.0];
    let mut p = vec![0.0, 0.0];
    let mut opt = Adam::new(2, AdamConfig::default().with_learning_rate(0.05));
    for _ in 0..2000 {
        let g: Vec<f64> = p.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        opt.step(&mut p, &g).unwrap();
    }
    assert!((p[0] - 3.0).abs() < 1e-3 && (p[1] + 1.0).abs() < 1e-3);
}

#[test]
fn adam_rejects_non_finite_gradients_without_mutating() {
    let mut p = vec![1.0, 2.0];
    let mut opt = Adam::new(2, AdamConfig::default());
    assert!(opt.step(&mut p, &[f64::NAN, 0.0]).is_err());
    assert_eq!(p, vec![1.0, 2.0]);
    assert_eq!(opt.steps_taken(), 0);
}

#[test]
fn single_precision_forward_tracks_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m64 = gradcheck::random_mlp(&mut rng);
    let mut m32 = Mlp::<f32>::zeros(
        m64.input_dim(),
        &m64.shapes().iter().map(|s| (s.outputs, s.activation)).collect::<Vec<_>>(),
    )
    .unwrap();
    for (a, &b) in m32.params_mut().iter_mut().zip(m64.params()) {
        *a = b as f32;
    }
    let x: Vec<f64> = (0..m64.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y64 = m64.forward(&x).unwrap();
    let y32 = m32.forward(&x.iter().map(|&v| v as f32).collect::<Vec<_>>()).unwrap();
    for (a, b) in y64.iter().zip(y32) {
        assert!((a - b as f64).abs() < 1e-4);
    }
}
