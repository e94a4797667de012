use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::GreedyKind;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::learn::{AgentConfig, AgentKind};

/// Episodes of the full protocol.
pub const FULL_SCALE_EPISODES: usize = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentChoice {
    Dqn,
    Ddpg,
    Ca2c,
    MaCa2c,
    GreedyAoi,
    GreedyCost,
}

impl AgentChoice {
    pub const ALL: [AgentChoice; 6] = [
        AgentChoice::Dqn,
        AgentChoice::Ddpg,
        AgentChoice::Ca2c,
        AgentChoice::MaCa2c,
        AgentChoice::GreedyAoi,
        AgentChoice::GreedyCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentChoice::Dqn => "dqn",
            AgentChoice::Ddpg => "ddpg",
            AgentChoice::Ca2c => "ca2c",
            AgentChoice::MaCa2c => "ma-ca2c",
            AgentChoice::GreedyAoi => "greedy-aoi",
            AgentChoice::GreedyCost => "greedy-cost",
        }
    }

    pub fn learner(self) -> Option<AgentKind> {
        match self {
            AgentChoice::Dqn => Some(AgentKind::Dqn),
            AgentChoice::Ddpg => Some(AgentKind::Ddpg),
            AgentChoice::Ca2c => Some(AgentKind::Ca2c),
            AgentChoice::MaCa2c => Some(AgentKind::MaCa2c),
            _ => None,
        }
    }

    pub fn greedy(self) -> Option<GreedyKind> {
        match self {
            AgentChoice::GreedyAoi => Some(GreedyKind::Aoi),
            AgentChoice::GreedyCost => Some(GreedyKind::Cost),
            _ => None,
        }
    }
}

impl fmt::Display for AgentChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentChoice::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent {s:?}; expected one of dqn, ddpg, ca2c, ma-ca2c, greedy-aoi, greedy-cost")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub agent: AgentChoice,
    /// Training episodes per seed.
    pub episodes: usize,
    /// Held-out evaluation episodes per seed after training.
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Checkpoint every this many training episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Arrival rates to sweep; empty runs the rate in `env.arrivals`.
    pub rate_sweep: Vec<f64>,
    /// Concurrent seed workers; 0 uses the available cores.
    pub workers: usize,
    /// Progress line every this many episodes; 0 is silent.
    pub log_every: usize,
    /// Graph document replacing the generated topology.
    pub topology_file: Option<PathBuf>,
    /// Catalog document replacing the generated chains.
    pub catalog_file: Option<PathBuf>,
    pub env: EnvConfig,
    pub learning: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            agent: AgentChoice::Ca2c,
            episodes: 5000,
            eval_episodes: 20,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 0,
            rate_sweep: Vec::new(),
            workers: 1,
            log_every: 0,
            topology_file: None,
            catalog_file: None,
            env: EnvConfig::default(),
            learning: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed".into()));
        }
        if self.rate_sweep.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("sweep rates must be finite and non-negative".into()));
        }
        self.env.validate()?;
        self.learning.validate()
    }

    /// Episodes whose statistics summarize a seed when no evaluation runs.
    pub fn final_window(&self) -> usize {
        (self.episodes / 10).max(1)
    }
}
