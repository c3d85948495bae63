//! Multi-seed experiments: config parsing, per-seed runs in parallel, CSV
//! output and smoothing, plus the MDP-file verification entry point.

mod config;
mod smooth;

pub use config::{
    parse_config, parse_config_file, EnvSpec, ExperimentConfig, DEFAULT_DELAY, DEFAULT_HALF_LIFE, DEFAULT_SEED_COUNT,
};
pub use smooth::{ema_smooth, fmt9, format_g, smooth_csv};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Result, SorsError};
use crate::mdp::{MdpFile, DEFAULT_TIE_TOLERANCE};
use crate::training::{run_from_config, RunLog};
use crate::verify::{verify_theorem, EquivalenceReport};

pub const ECHO_FILE: &str = "config.echo";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SEED_HEADER: &str = "step,seed,raw_return,smoothed_return,mode,env";
pub const AGGREGATE_HEADER: &str = "step,mean_return,std_return,mode,env,n_seeds";

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub seed: u64,
    pub raw_return: f64,
    pub smoothed_return: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatePoint {
    pub step: u64,
    pub mean_return: f64,
    /// Population standard deviation of the smoothed returns.
    pub std_return: f64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub log: RunLog,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub env_name: String,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Vec<AggregatePoint>,
    pub files: Vec<PathBuf>,
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Smoothed learning curve of one run.
pub fn curve(log: &RunLog, seed: u64, half_life: f64) -> Result<Vec<CurvePoint>> {
    if log.evaluations.is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<(u64, f64)> = log.evaluations.iter().map(|e| (e.step as u64, e.sparse_return)).collect();
    let smoothed = ema_smooth(&raw, half_life)?;
    Ok(raw
        .iter()
        .zip(smoothed)
        .map(|(&(step, r), (_, y))| CurvePoint {
            step,
            seed,
            raw_return: r,
            smoothed_return: y,
        })
        .collect())
}

/// Mean and population standard deviation across seeds at each step.
/// Every curve must have the same steps.
pub fn aggregate(curves: &[Vec<CurvePoint>]) -> Result<Vec<AggregatePoint>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    for c in curves {
        if c.len() != first.len() || c.iter().zip(first).any(|(a, b)| a.step != b.step) {
            return Err(SorsError::Contract("seed curves have different evaluation steps".into()));
        }
    }
    let n = curves.len() as f64;
    Ok((0..first.len())
        .map(|k| {
            let mean = curves.iter().map(|c| c[k].smoothed_return).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[k].smoothed_return - mean).powi(2)).sum::<f64>() / n;
            AggregatePoint {
                step: first[k].step,
                mean_return: mean,
                std_return: var.sqrt(),
                n_seeds: curves.len(),
            }
        })
        .collect())
}

/// Runs every seed (in parallel), then writes the config echo, one CSV per
/// seed and the aggregate CSV into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    let env_name = config.env.build(config.delay)?.name();
    let runs: Vec<Result<SeedResult>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<SeedResult> {
                let mut env = config.env.build(config.delay)?;
                let output = run_from_config(&config.for_seed(seed), env.as_mut())?;
                let curve = curve(&output.log, seed, config.half_life)?;
                Ok(SeedResult {
                    seed,
                    log: output.log,
                    curve,
                })
            };
            run().map_err(|e| SorsError::SeedFailed {
                seed,
                source: Box::new(e),
            })
        })
        .collect();
    let seeds = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&seeds.iter().map(|s| s.curve.clone()).collect::<Vec<_>>())?;

    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let echo_path = out.join(ECHO_FILE);
    fs::write(&echo_path, config.echo())?;
    files.push(echo_path);
    let mode = config.sors.mode.as_str();
    for s in &seeds {
        let mut text = format!("{SEED_HEADER}\n");
        for p in &s.curve {
            text.push_str(&format!(
                "{},{},{},{},{mode},{env_name}\n",
                p.step,
                p.seed,
                fmt9(p.raw_return),
                fmt9(p.smoothed_return)
            ));
        }
        let path = out.join(seed_file_name(s.seed));
        fs::write(&path, text)?;
        files.push(path);
    }
    let mut text = format!("{AGGREGATE_HEADER}\n");
    for a in &aggregate {
        text.push_str(&format!(
            "{},{},{},{mode},{env_name},{}\n",
            a.step,
            fmt9(a.mean_return),
            fmt9(a.std_return),
            a.n_seeds
        ));
    }
    let path = out.join(AGGREGATE_FILE);
    fs::write(&path, text)?;
    files.push(path);

    Ok(ExperimentResult {
        env_name,
        seeds,
        aggregate,
        files,
    })
}

/// Loads an MDP file and checks its two rewards at horizon `horizon`.
pub fn verify_file(path: &Path, horizon: usize) -> Result<EquivalenceReport> {
    let text = fs::read_to_string(path)?;
    let file = MdpFile::parse(&text)?;
    verify_theorem(&file.mdp, &file.r1, &file.r2, horizon, file.mdp.gamma(), DEFAULT_TIE_TOLERANCE)
}
