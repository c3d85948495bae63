//! Flat `key = value` experiment configs with `#` comments and dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{Chain, Delayed, Environment, PointMass, PointMassConfig, SparseGrid};
use crate::error::{Result, SorsError};
use crate::nn::AdamConfig;
use crate::reward::{ReturnMode, RewardModelConfig};
use crate::rl::{NeuralQConfig, TabularConfig};
use crate::training::{BackendConfig, RunMode, SorsConfig};

pub const DEFAULT_HALF_LIFE: f64 = 2000.0;
pub const DEFAULT_DELAY: usize = 20;
pub const DEFAULT_SEED_COUNT: u64 = 5;

const KNOWN_KEYS: &[&str] = &[
    "env",
    "env.n",
    "env.width",
    "env.height",
    "env.walls",
    "env.cap",
    "env.delay",
    "env.goal_radius",
    "mode",
    "seeds",
    "base_seed",
    "num_seeds",
    "out",
    "half_life",
    "total_steps",
    "initial_random_steps",
    "reward_period",
    "reward_updates",
    "pairs_per_batch",
    "policy_period",
    "policy_updates",
    "buffer_capacity",
    "holdout_fraction",
    "replay_capacity",
    "eval_period",
    "eval_episodes",
    "tie_tolerance",
    "backend",
    "backend.learning_rate",
    "backend.alpha",
    "backend.gamma",
    "backend.batch_size",
    "backend.hidden",
    "backend.target_period",
    "reward.hidden",
    "reward.feature_dim",
    "reward.ensemble_size",
    "reward.learning_rate",
    "reward.gamma",
];

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Chain { n: usize, cap: usize },
    Grid { width: usize, height: usize, walls: Vec<(usize, usize)>, cap: usize },
    PointMass(PointMassConfig),
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::Grid { .. } => "grid",
            EnvSpec::PointMass(_) => "point_mass",
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, EnvSpec::PointMass(_))
    }

    /// A fresh environment with rewards delayed by `delay` steps.
    pub fn build(&self, delay: usize) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Chain { n, cap } => {
                let inner = Chain::new(*n)?;
                Box::new(Delayed::new(Chain::with_cap(inner.len(), *cap), delay)?)
            }
            EnvSpec::Grid { width, height, walls, cap } => {
                let inner = SparseGrid::with_walls(*width, *height, walls)?.with_cap(*cap);
                Box::new(Delayed::new(inner, delay)?)
            }
            EnvSpec::PointMass(c) => Box::new(Delayed::new(PointMass::new(c.clone())?, delay)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub delay: usize,
    /// Run settings shared by every seed; `sors.seed` is replaced per run.
    pub sors: SorsConfig,
    pub seeds: Vec<u64>,
    pub half_life: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Run settings for one seed.
    pub fn for_seed(&self, seed: u64) -> SorsConfig {
        SorsConfig {
            seed,
            ..self.sors.clone()
        }
    }

    /// Resolved values in the input format; parsing the echo gives back
    /// the same config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("env", self.env.kind().into());
        match &self.env {
            EnvSpec::Chain { n, cap } => {
                kv("env.n", n.to_string());
                kv("env.cap", cap.to_string());
            }
            EnvSpec::Grid { width, height, walls, cap } => {
                kv("env.width", width.to_string());
                kv("env.height", height.to_string());
                kv(
                    "env.walls",
                    walls.iter().map(|(x, y)| format!("{x}:{y}")).collect::<Vec<_>>().join(","),
                );
                kv("env.cap", cap.to_string());
            }
            EnvSpec::PointMass(c) => {
                kv("env.goal_radius", c.goal_radius.to_string());
                kv("env.cap", c.cap.to_string());
            }
        }
        kv("env.delay", self.delay.to_string());
        let c = &self.sors;
        kv("mode", c.mode.to_string());
        kv("seeds", join(&self.seeds));
        kv("out", self.out.display().to_string());
        kv("half_life", self.half_life.to_string());
        kv("total_steps", c.total_steps.to_string());
        kv("initial_random_steps", c.initial_random_steps.to_string());
        kv("reward_period", c.reward_period.to_string());
        kv("reward_updates", c.reward_updates.to_string());
        kv("pairs_per_batch", c.pairs_per_batch.to_string());
        kv("policy_period", c.policy_period.to_string());
        kv("policy_updates", c.policy_updates.to_string());
        kv("buffer_capacity", c.buffer_capacity.to_string());
        kv("holdout_fraction", c.holdout_fraction.to_string());
        kv("replay_capacity", c.replay_capacity.to_string());
        kv("eval_period", c.eval_period.to_string());
        kv("eval_episodes", c.eval_episodes.to_string());
        kv("tie_tolerance", c.tie_tolerance.to_string());
        match &c.backend {
            BackendConfig::Tabular(t) => {
                kv("backend", "tabular".into());
                kv("backend.learning_rate", t.learning_rate.to_string());
                kv("backend.alpha", t.alpha.to_string());
                kv("backend.gamma", t.gamma.to_string());
                kv("backend.batch_size", t.batch_size.to_string());
            }
            BackendConfig::Neural(n) => {
                kv("backend", "neural".into());
                kv("backend.learning_rate", n.adam.learning_rate.to_string());
                kv("backend.alpha", n.alpha.to_string());
                kv("backend.gamma", n.gamma.to_string());
                kv("backend.batch_size", n.batch_size.to_string());
                kv("backend.hidden", join(&n.hidden));
                kv("backend.target_period", n.target_period.to_string());
            }
        }
        let r = &c.reward;
        kv("reward.hidden", join(&r.hidden));
        kv("reward.feature_dim", r.feature_dim.to_string());
        kv("reward.ensemble_size", r.ensemble_size.to_string());
        kv("reward.learning_rate", r.adam.learning_rate.to_string());
        let g = match r.return_mode {
            ReturnMode::Discounted(g) => g,
            ReturnMode::Undiscounted => 1.0,
        };
        kv("reward.gamma", g.to_string());
        s
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SorsError::Config {
        line: 0,
        key: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

/// Parses and validates a config. Every error names the key and line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let f = Fields::read(text)?;

    let env_kind: String = f.required("env")?;
    let delay = f.positive("env.delay", DEFAULT_DELAY)?;
    let env = match env_kind.as_str() {
        "chain" => {
            let n = f.get("env.n", 12usize)?;
            if n < 2 {
                return Err(f.invalid("env.n", "a chain needs at least 2 states"));
            }
            let cap = f.positive("env.cap", 4 * n)?;
            EnvSpec::Chain { n, cap }
        }
        "grid" => {
            let width = f.positive("env.width", 5usize)?;
            let height = f.positive("env.height", 5usize)?;
            let walls = f.walls()?;
            let cap = f.positive("env.cap", 4 * width * height)?;
            if width * height < 2 {
                return Err(f.invalid("env.width", "a grid needs at least 2 cells"));
            }
            EnvSpec::Grid { width, height, walls, cap }
        }
        "point_mass" => {
            let defaults = PointMassConfig::default();
            let goal_radius = f.get("env.goal_radius", defaults.goal_radius)?;
            if !(goal_radius > 0.0) {
                return Err(f.invalid("env.goal_radius", "must be positive"));
            }
            let cap = f.positive("env.cap", defaults.cap)?;
            EnvSpec::PointMass(PointMassConfig {
                goal_radius,
                cap,
                ..defaults
            })
        }
        other => return Err(f.invalid("env", &format!("unknown environment `{other}` (chain, grid or point_mass)"))),
    };
    for (key, only) in [("env.n", "chain"), ("env.width", "grid"), ("env.height", "grid"), ("env.walls", "grid"), ("env.goal_radius", "point_mass")] {
        if env.kind() != only {
            f.reject(key, &format!("only valid for env = {only}"))?;
        }
    }

    let mode: RunMode = f.required("mode")?;
    let seeds = f.seeds()?;
    let out = PathBuf::from(f.get::<String>("out", "out".into())?);
    let half_life = f.get("half_life", DEFAULT_HALF_LIFE)?;
    if !(half_life > 0.0 && half_life.is_finite()) {
        return Err(f.invalid("half_life", "must be positive and finite"));
    }

    let d = SorsConfig::default();
    let mut sors = SorsConfig {
        mode,
        total_steps: f.positive("total_steps", d.total_steps)?,
        initial_random_steps: f.get("initial_random_steps", d.initial_random_steps)?,
        reward_period: f.positive("reward_period", d.reward_period)?,
        reward_updates: f.positive("reward_updates", d.reward_updates)?,
        pairs_per_batch: f.positive("pairs_per_batch", d.pairs_per_batch)?,
        policy_period: f.positive("policy_period", d.policy_period)?,
        policy_updates: f.positive("policy_updates", d.policy_updates)?,
        buffer_capacity: f.positive("buffer_capacity", d.buffer_capacity)?,
        holdout_fraction: f.get("holdout_fraction", d.holdout_fraction)?,
        replay_capacity: f.positive("replay_capacity", d.replay_capacity)?,
        eval_period: f.positive("eval_period", d.eval_period)?,
        eval_episodes: f.positive("eval_episodes", d.eval_episodes)?,
        tie_tolerance: f.get("tie_tolerance", d.tie_tolerance)?,
        ..d
    };
    if sors.total_steps < sors.initial_random_steps {
        return Err(f.invalid("initial_random_steps", "exceeds total_steps"));
    }
    if !(0.0..1.0).contains(&sors.holdout_fraction) {
        return Err(f.invalid("holdout_fraction", "must lie in [0, 1)"));
    }
    if !(sors.tie_tolerance >= 0.0) {
        return Err(f.invalid("tie_tolerance", "must be non-negative"));
    }

    let default_backend = if env.is_finite() { "tabular" } else { "neural" };
    let backend_kind: String = f.get("backend", default_backend.into())?;
    sors.backend = match backend_kind.as_str() {
        "tabular" => {
            if !env.is_finite() {
                return Err(f.invalid("backend", "the tabular backend needs a finite environment"));
            }
            f.reject("backend.hidden", "only valid for backend = neural")?;
            f.reject("backend.target_period", "only valid for backend = neural")?;
            let t = TabularConfig::default();
            BackendConfig::Tabular(TabularConfig {
                learning_rate: f.unit_interval("backend.learning_rate", t.learning_rate)?,
                alpha: f.positive_real("backend.alpha", t.alpha)?,
                gamma: f.unit_interval("backend.gamma", t.gamma)?,
                batch_size: f.positive("backend.batch_size", t.batch_size)?,
            })
        }
        "neural" => {
            let n = NeuralQConfig::default();
            BackendConfig::Neural(NeuralQConfig {
                hidden: f.list("backend.hidden", n.hidden.clone())?,
                adam: AdamConfig::default().with_learning_rate(f.positive_real("backend.learning_rate", n.adam.learning_rate)?),
                alpha: f.positive_real("backend.alpha", n.alpha)?,
                gamma: f.unit_interval("backend.gamma", n.gamma)?,
                batch_size: f.positive("backend.batch_size", n.batch_size)?,
                target_period: f.positive("backend.target_period", n.target_period as usize)? as u64,
            })
        }
        other => return Err(f.invalid("backend", &format!("unknown backend `{other}` (tabular or neural)"))),
    };

    let r = RewardModelConfig::default();
    let default_gamma = match r.return_mode {
        ReturnMode::Discounted(g) => g,
        ReturnMode::Undiscounted => 1.0,
    };
    let reward_gamma = f.unit_interval("reward.gamma", default_gamma)?;
    sors.reward = RewardModelConfig {
        hidden: f.list("reward.hidden", r.hidden.clone())?,
        feature_dim: f.positive("reward.feature_dim", r.feature_dim)?,
        ensemble_size: f.positive("reward.ensemble_size", r.ensemble_size)?,
        adam: AdamConfig::default().with_learning_rate(f.positive_real("reward.learning_rate", r.adam.learning_rate)?),
        return_mode: if reward_gamma == 1.0 {
            ReturnMode::Undiscounted
        } else {
            ReturnMode::Discounted(reward_gamma)
        },
    };
    if reward_gamma == 0.0 {
        return Err(f.invalid("reward.gamma", "must lie in (0, 1]"));
    }

    sors.validate().map_err(|e| SorsError::Config {
        line: 0,
        key: String::new(),
        message: e.to_string(),
    })?;
    Ok(ExperimentConfig {
        env,
        delay,
        sors,
        seeds,
        half_life,
        out,
    })
}

struct Fields {
    values: BTreeMap<String, (String, usize)>,
}

impl Fields {
    fn read(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(SorsError::Config {
                    line,
                    key: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(SorsError::Config {
                    line,
                    key: key.to_string(),
                    message: "unknown key".into(),
                });
            }
            if let Some((_, first)) = values.get(key) {
                return Err(SorsError::Config {
                    line,
                    key: key.to_string(),
                    message: format!("duplicate key, first set on line {first}"),
                });
            }
            values.insert(key.to_string(), (value.to_string(), line));
        }
        Ok(Self { values })
    }

    fn line(&self, key: &str) -> usize {
        self.values.get(key).map_or(0, |(_, l)| *l)
    }

    fn invalid(&self, key: &str, message: &str) -> SorsError {
        SorsError::Config {
            line: self.line(key),
            key: key.to_string(),
            message: message.to_string(),
        }
    }

    fn reject(&self, key: &str, message: &str) -> Result<()> {
        match self.values.contains_key(key) {
            true => Err(self.invalid(key, message)),
            false => Ok(()),
        }
    }

    fn parse<T: FromStr>(&self, key: &str, text: &str) -> Result<T> {
        text.parse().map_err(|_| {
            self.invalid(key, &format!("cannot parse `{text}` as {}", short_type_name::<T>()))
        })
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        match self.values.get(key) {
            Some((v, _)) => self.parse(key, v),
            None => Err(SorsError::Config {
                line: 0,
                key: key.to_string(),
                message: "required key missing".into(),
            }),
        }
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            Some((v, _)) => self.parse(key, v),
            None => Ok(default),
        }
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default)?;
        if v == 0 {
            return Err(self.invalid(key, "must be positive"));
        }
        Ok(v)
    }

    fn positive_real(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.invalid(key, "must be positive and finite"));
        }
        Ok(v)
    }

    fn unit_interval(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(self.invalid(key, "must lie in [0, 1]"));
        }
        Ok(v)
    }

    fn list(&self, key: &str, default: Vec<usize>) -> Result<Vec<usize>> {
        let Some((v, _)) = self.values.get(key) else {
            return Ok(default);
        };
        let items = v
            .split(',')
            .map(|p| self.parse::<usize>(key, p.trim()))
            .collect::<Result<Vec<_>>>()?;
        if items.contains(&0) {
            return Err(self.invalid(key, "layer widths must be positive"));
        }
        Ok(items)
    }

    fn walls(&self) -> Result<Vec<(usize, usize)>> {
        let Some((v, _)) = self.values.get("env.walls") else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                let (x, y) = p
                    .split_once(':')
                    .ok_or_else(|| self.invalid("env.walls", &format!("expected `x:y`, got `{p}`")))?;
                Ok((self.parse("env.walls", x.trim())?, self.parse("env.walls", y.trim())?))
            })
            .collect()
    }

    fn seeds(&self) -> Result<Vec<u64>> {
        if let Some((v, _)) = self.values.get("seeds") {
            for k in ["base_seed", "num_seeds"] {
                self.reject(k, "cannot be combined with an explicit `seeds` list")?;
            }
            let seeds = v
                .split(',')
                .map(|p| self.parse::<u64>("seeds", p.trim()))
                .collect::<Result<Vec<_>>>()?;
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != seeds.len() {
                return Err(self.invalid("seeds", "seeds must be distinct"));
            }
            return Ok(seeds);
        }
        let base: u64 = self.get("base_seed", 0)?;
        let count: u64 = self.get("num_seeds", DEFAULT_SEED_COUNT)?;
        if count == 0 {
            return Err(self.invalid("num_seeds", "must be positive"));
        }
        (0..count)
            .map(|i| base.checked_add(i).ok_or_else(|| self.invalid("base_seed", "seed range overflows")))
            .collect()
    }
}

fn short_type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full)
}
