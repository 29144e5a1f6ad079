//! Run configuration: defaults, a flat `key=value` file format, and validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::approx::{DeepHyperparams, UpdateRule};
use crate::env::RewardConfig;
use crate::error::{Error, Result};
use crate::evaluation::AgentKind;
use crate::market_data::default_cutoff;
use crate::prediction::{LogisticConfig, DEFAULT_TOL};
use crate::tabular::{BaselineConfig, TrainConfig};

/// Everything a command needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub company: String,
    /// Explicit data file; otherwise `<data_dir>/<company>.csv`.
    pub data: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub cutoff: NaiveDate,
    pub w: usize,
    pub h: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_floor: Option<f64>,
    pub r: f64,
    pub c: f64,
    pub lambda: f64,
    pub d: f64,
    /// Training passes; each agent has its own default when unset.
    pub epochs: Option<usize>,
    pub n_hidden_layers: usize,
    pub n_units: usize,
    pub learning_rate: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub jobs: usize,
    pub bins: usize,
    pub tol: f64,
    pub paper_literal_update: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            company: "Microsoft".into(),
            data: None,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("results"),
            cutoff: default_cutoff(),
            w: 5,
            h: 2,
            alpha: 0.1,
            gamma: 0.95,
            epsilon: 0.1,
            epsilon_floor: None,
            r: 1.0,
            c: 0.1,
            lambda: 1.0,
            d: 0.5,
            epochs: None,
            n_hidden_layers: 2,
            n_units: 16,
            learning_rate: 1e-3,
            n_runs: 51,
            seed: 0,
            jobs: 1,
            bins: 10,
            tol: DEFAULT_TOL,
            paper_literal_update: false,
        }
    }
}

/// Default training passes per agent.
pub fn default_epochs(agent: AgentKind) -> usize {
    match agent {
        AgentKind::Baseline => 0,
        AgentKind::QLearning | AgentKind::ApproximateLinear => 50,
        AgentKind::DeepQLearning => 30,
    }
}

/// Keys accepted in a config file; identical to the long flag names.
pub const CONFIG_KEYS: &[&str] = &[
    "company",
    "data",
    "data-dir",
    "out-dir",
    "cutoff",
    "w",
    "h",
    "alpha",
    "gamma",
    "epsilon",
    "epsilon-floor",
    "r",
    "c",
    "lambda",
    "d",
    "epochs",
    "n-hidden-layers",
    "n-units",
    "learning-rate",
    "n-runs",
    "seed",
    "jobs",
    "bins",
    "tol",
    "paper-literal-update",
];

/// Parses `key=value` lines. Blank lines and `#` comments are skipped;
/// unknown or repeated keys are rejected.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("config line {}: unknown key '{key}'", i + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("config line {}: '{key}' set twice", i + 1)));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("config key '{key}': cannot parse '{value}': {e}")))
}

impl RunConfig {
    /// Defaults overridden by the entries of a parsed config file.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in map {
            let v = value.as_str();
            match key.as_str() {
                "company" => cfg.company = v.to_string(),
                "data" => cfg.data = Some(PathBuf::from(v)),
                "data-dir" => cfg.data_dir = PathBuf::from(v),
                "out-dir" => cfg.out_dir = PathBuf::from(v),
                "cutoff" => cfg.cutoff = parse_value(key, v)?,
                "w" => cfg.w = parse_value(key, v)?,
                "h" => cfg.h = parse_value(key, v)?,
                "alpha" => cfg.alpha = parse_value(key, v)?,
                "gamma" => cfg.gamma = parse_value(key, v)?,
                "epsilon" => cfg.epsilon = parse_value(key, v)?,
                "epsilon-floor" => cfg.epsilon_floor = Some(parse_value(key, v)?),
                "r" => cfg.r = parse_value(key, v)?,
                "c" => cfg.c = parse_value(key, v)?,
                "lambda" => cfg.lambda = parse_value(key, v)?,
                "d" => cfg.d = parse_value(key, v)?,
                "epochs" => cfg.epochs = Some(parse_value(key, v)?),
                "n-hidden-layers" => cfg.n_hidden_layers = parse_value(key, v)?,
                "n-units" => cfg.n_units = parse_value(key, v)?,
                "learning-rate" => cfg.learning_rate = parse_value(key, v)?,
                "n-runs" => cfg.n_runs = parse_value(key, v)?,
                "seed" => cfg.seed = parse_value(key, v)?,
                "jobs" => cfg.jobs = parse_value(key, v)?,
                "bins" => cfg.bins = parse_value(key, v)?,
                "tol" => cfg.tol = parse_value(key, v)?,
                "paper-literal-update" => cfg.paper_literal_update = parse_value(key, v)?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn data_path(&self) -> PathBuf {
        self.data
            .clone()
            .unwrap_or_else(|| self.data_dir.join(format!("{}.csv", self.company)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.company.is_empty() {
            return Err(Error::Config("company must not be empty".into()));
        }
        if self.w < 2 {
            return Err(Error::Config(format!("w must be at least 2, got {}", self.w)));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n-runs must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::Config(format!("d must be non-negative, got {}", self.d)));
        }
        self.movement_reward().validate()?;
        self.window_reward().validate()?;
        self.train_config(AgentKind::QLearning).validate()?;
        self.deep_hyperparams().validate()
    }

    pub fn movement_reward(&self) -> RewardConfig {
        RewardConfig::movement(self.r, self.c, self.gamma)
    }

    pub fn window_reward(&self) -> RewardConfig {
        RewardConfig::window(self.lambda, self.gamma)
    }

    pub fn epochs_for(&self, agent: AgentKind) -> usize {
        self.epochs.unwrap_or_else(|| default_epochs(agent))
    }

    pub fn train_config(&self, agent: AgentKind) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            epsilon_floor: self.epsilon_floor,
            epochs: self.epochs_for(agent),
            seed: self.seed,
        }
    }

    pub fn deep_hyperparams(&self) -> DeepHyperparams {
        DeepHyperparams {
            n_hidden_layers: self.n_hidden_layers,
            n_units: self.n_units,
            learning_rate: self.learning_rate,
            epochs: self.epochs_for(AgentKind::DeepQLearning),
            seed: self.seed,
            epsilon: self.epsilon,
            epsilon_floor: self.epsilon_floor,
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig { d: self.d }
    }

    pub fn update_rule(&self) -> UpdateRule {
        if self.paper_literal_update {
            UpdateRule::Literal
        } else {
            UpdateRule::TdError
        }
    }

    pub fn logistic(&self) -> LogisticConfig {
        LogisticConfig {
            seed: self.seed,
            ..LogisticConfig::default()
        }
    }
}
