use std::fs;
use std::path::Path;

use proptest::prelude::*;
use sors_core::harness::{
    ema_smooth, parse_config, run_experiment, seed_file_name, smooth_csv, AGGREGATE_FILE, AGGREGATE_HEADER, ECHO_FILE,
    SEED_HEADER,
};
use sors_core::SorsError;

const SMALL: &str = "\
env = grid
env.width = 3
env.height = 3
env.delay = 2
mode = sors
seeds = 0, 1, 2
total_steps = 1200
initial_random_steps = 200
reward_period = 200
reward_updates = 5
eval_period = 100
half_life = 300
";

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn experiment_output_is_byte_identical_across_runs() {
    let cfg = parse_config(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    assert_eq!(ra.files.len(), 5);
    for name in [ECHO_FILE.to_string(), AGGREGATE_FILE.to_string(), seed_file_name(0), seed_file_name(2)] {
        let (x, y) = (fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
        assert_eq!(x, y, "{name}");
    }
    // The echo is itself a valid config describing the same experiment.
    let echo = fs::read_to_string(a.path().join(ECHO_FILE)).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), cfg);
}

#[test]
fn aggregate_rows_are_mean_and_population_std_of_seed_rows() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path()).unwrap();

    let header = |p: &Path| fs::read_to_string(p).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(&dir.path().join(AGGREGATE_FILE)), AGGREGATE_HEADER);
    let seeds: Vec<Vec<Vec<String>>> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let p = dir.path().join(seed_file_name(s));
            assert_eq!(header(&p), SEED_HEADER);
            read_csv(&p)
        })
        .collect();
    let aggregate = read_csv(&dir.path().join(AGGREGATE_FILE));
    assert_eq!(aggregate.len(), 12);
    for (k, row) in aggregate.iter().enumerate() {
        let smoothed: Vec<f64> = seeds.iter().map(|rows| rows[k][3].parse().unwrap()).collect();
        assert!(seeds.iter().all(|rows| rows[k][0] == row[0]));
        let n = smoothed.len() as f64;
        let mean = smoothed.iter().sum::<f64>() / n;
        let std = (smoothed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((row[1].parse::<f64>().unwrap() - mean).abs() < 1e-9);
        assert!((row[2].parse::<f64>().unwrap() - std).abs() < 1e-9);
        assert_eq!(row[3..], ["sors", "grid3x3-delay2", "3"]);
    }
}

#[test]
fn raw_returns_are_resmoothed_from_the_csv() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path()).unwrap();
    let path = dir.path().join(seed_file_name(1));
    let mut out = Vec::new();
    smooth_csv(fs::File::open(&path).unwrap(), &mut out, cfg.half_life).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), fs::read_to_string(&path).unwrap());
}

#[test]
fn half_life_impulse_reaches_one_half() {
    // Smoothed value starts at 0, raw held at 1 from then on.
    for half_life in [1u64, 7, 100, 2000] {
        let jump = ema_smooth(&[(0, 0.0), (half_life, 1.0)], half_life as f64).unwrap();
        assert!((jump[1].1 - 0.5).abs() < 1e-9);
        let mut series = vec![(0, 0.0)];
        series.extend((1..=half_life).map(|s| (s, 1.0)));
        let stepwise = ema_smooth(&series, half_life as f64).unwrap();
        assert!((stepwise.last().unwrap().1 - 0.5).abs() < 1e-9, "half-life {half_life}");
    }
}

#[test]
fn extreme_half_lives_approach_constant_and_identity() {
    let series: Vec<(u64, f64)> = (0..50).map(|k| (10 * k, ((k * 37) % 11) as f64 / 3.0)).collect();
    let frozen = ema_smooth(&series, 1e9).unwrap();
    let passthrough = ema_smooth(&series, 1e-6).unwrap();
    for (k, &(_, x)) in series.iter().enumerate() {
        assert!((frozen[k].1 - series[0].1).abs() < 1e-6);
        assert!((passthrough[k].1 - x).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn smoothing_stays_within_the_running_range(
        values in prop::collection::vec(-5.0f64..5.0, 1..60),
        gaps in prop::collection::vec(1u64..50, 60),
        half_life in 0.5f64..500.0,
    ) {
        let mut step = 0;
        let series: Vec<(u64, f64)> = values
            .iter()
            .zip(&gaps)
            .map(|(&v, &g)| {
                step += g;
                (step, v)
            })
            .collect();
        let smoothed = ema_smooth(&series, half_life).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, &(s, x)) in series.iter().enumerate() {
            lo = lo.min(x);
            hi = hi.max(x);
            prop_assert_eq!(smoothed[k].0, s);
            prop_assert!(smoothed[k].1 >= lo - 1e-12 && smoothed[k].1 <= hi + 1e-12);
        }
    }
}

#[test]
fn bad_configs_are_config_errors() {
    let err = parse_config("env = grid\nmode = sors\nenv.delay = 0\n");
    assert!(matches!(err, Err(SorsError::Config { .. })), "{err:?}");
    let err = parse_config("env = cliff\nmode = sors\n");
    assert!(matches!(err, Err(SorsError::Config { ref key, line: 1, .. }) if key == "env"), "{err:?}");
}
