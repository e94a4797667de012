//! Function approximators, replay, exploration noise and the learning
//! agents. Every agent acts one pending request at a time through the
//! candidate table built by [`crate::env::SlotPlanner`]: it picks a
//! candidate id and a power parameter `u ∈ [0, 1]` per subcarrier, mapped to
//! watts by [`powers_from_u`].

pub mod ca2c;
pub mod checkpoint;
pub mod ddpg;
pub mod dqn;
pub mod driver;
pub mod mlp;
pub mod noise;
pub mod replay;
pub mod schedule;

use serde::{Deserialize, Serialize};

use crate::env::{CandidateKind, DecisionContext, Env, SlotPlanner, CANDIDATE_FEATURES};
use crate::error::{Error, Result};

pub use ca2c::{ca2c_select, Ca2c};
pub use checkpoint::Checkpoint;
pub use ddpg::Ddpg;
pub use dqn::Dqn;
pub use driver::{run_episode, EpisodeReport};
pub use mlp::{clip_grad_norm, Mlp, Tape};
pub use noise::OuNoise;
pub use replay::ReplayBuffer;
pub use schedule::{linear, InverseTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Dqn,
    Ddpg,
    Ca2c,
    MaCa2c,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Ca2c => "ca2c",
            AgentKind::MaCa2c => "ma-ca2c",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub discount: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// k of the inverse-time decay lr₀/(1 + k·updates).
    pub lr_decay: f64,
    /// Final DQN exploration rate.
    pub dqn_exploration: f64,
    /// Initial discrete exploration rate, annealed to its final value.
    pub epsilon_start: f64,
    /// Final discrete exploration rate of CA2C and MA-CA2C.
    pub epsilon_end: f64,
    /// Fraction of training episodes over which ε anneals.
    pub explore_fraction: f64,
    pub batch: usize,
    /// Updates between target syncs in hard mode.
    pub target_update_every: u64,
    pub target_mode: TargetMode,
    pub soft_tau: f64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    pub updates_per_slot: usize,
    /// Rewards are divided by this before they are stored.
    pub reward_scale: f64,
    /// L2 bound on every gradient step; 0 disables clipping.
    pub grad_clip: f64,
    /// Powers span this many decades below the per-subcarrier share.
    pub power_decades: f64,
    /// DQN power quantization levels.
    pub power_levels: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_mu: f64,
    /// Training progress after which OU volatility anneals linearly to 0.
    pub ou_anneal_from: f64,
    /// MA-CA2C agent count; requests go to agent `device mod agents`.
    pub agents: usize,
    /// Store only transitions whose decisions were all feasible.
    /// Defaults to on for MA-CA2C and off otherwise.
    pub storage_gate: Option<bool>,
    /// Probability of hiding another agent's block from a centralized
    /// critic during training.
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            discount: 0.99,
            actor_lr: 0.001,
            critic_lr: 0.005,
            lr_decay: 1e-4,
            dqn_exploration: 0.001,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            explore_fraction: 0.5,
            batch: 64,
            target_update_every: 1000,
            target_mode: TargetMode::Hard,
            soft_tau: 0.005,
            hidden: vec![512; 4],
            replay_capacity: 20_000,
            updates_per_slot: 1,
            reward_scale: 100.0,
            grad_clip: 10.0,
            power_decades: 4.0,
            power_levels: 8,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_mu: 0.0,
            ou_anneal_from: 2.0 / 3.0,
            agents: 5,
            storage_gate: None,
            mask_prob: 0.5,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::Config("discount must lie in [0, 1]".into()));
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0 && self.lr_decay >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if self.batch == 0 || self.replay_capacity < self.batch {
            return Err(Error::Config("replay must hold at least one batch".into()));
        }
        if self.hidden.contains(&0) || self.power_levels < 2 || self.agents == 0 {
            return Err(Error::Config("hidden sizes, power levels and agents must be positive".into()));
        }
        if !(self.power_decades > 0.0 && self.reward_scale > 0.0) {
            return Err(Error::Config("power decades and reward scale must be positive".into()));
        }
        Ok(())
    }

    pub fn gate_for(&self, kind: AgentKind) -> bool {
        self.storage_gate.unwrap_or(kind == AgentKind::MaCa2c)
    }

    /// Layer sizes `input → hidden… → output`.
    pub fn layers(&self, input: usize, output: usize) -> Vec<usize> {
        let mut v = vec![input];
        v.extend(&self.hidden);
        v.push(output);
        v
    }

    /// (ε, OU volatility) at training progress `p ∈ [0, 1]`.
    pub fn exploration(&self, kind: AgentKind, p: f64) -> (f64, f64) {
        let end = if kind == AgentKind::Dqn { self.dqn_exploration } else { self.epsilon_end };
        let eps = if self.explore_fraction > 0.0 {
            linear(self.epsilon_start, end, p / self.explore_fraction)
        } else {
            end
        };
        let tail = 1.0 - self.ou_anneal_from;
        let sigma = if p <= self.ou_anneal_from || tail <= 0.0 {
            self.ou_sigma
        } else {
            linear(self.ou_sigma, 0.0, (p - self.ou_anneal_from) / tail)
        };
        (eps, sigma)
    }
}

/// Shapes shared by every agent on one environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDims {
    pub state: usize,
    pub features: usize,
    pub table: usize,
    /// 2·S_max power parameters.
    pub power: usize,
}

impl AgentDims {
    pub fn from_env(env: &Env) -> Self {
        AgentDims {
            state: SlotPlanner::state_len(env),
            features: CANDIDATE_FEATURES,
            table: env.config().candidates.max_candidates(),
            power: 2 * env.config().candidates.max_subcarriers,
        }
    }
}

/// What an agent remembers about one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub state: Vec<f64>,
    pub disc: usize,
    pub features: Vec<f64>,
    /// Agent-specific continuous part (power parameters, DQN level, or the
    /// full DDPG action vector).
    pub cont: Vec<f64>,
}

/// The first decision an agent faces in the following slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextDecision {
    pub state: Vec<f64>,
    /// `(candidate id, features)` of every present candidate.
    pub candidates: Vec<(usize, Vec<f64>)>,
}

impl NextDecision {
    pub fn from_context(ctx: &DecisionContext) -> Self {
        NextDecision {
            state: ctx.state.clone(),
            candidates: ctx.candidates.iter().map(|c| (c.id, c.features.to_vec())).collect(),
        }
    }
}

/// One round of decisions: one entry per agent (single-agent methods have
/// exactly one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub decisions: Vec<Option<Decision>>,
    /// Scaled reward per agent.
    pub rewards: Vec<f64>,
    pub next: Vec<Option<NextDecision>>,
    pub done: bool,
    /// Every decision of the round passed its feasibility check.
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct Choice {
    pub disc: usize,
    /// Power parameters in [0, 1], 2·S_max entries.
    pub u: Vec<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentLoss {
    pub critic: f64,
    pub actor: f64,
}

pub trait Agent {
    fn kind(&self) -> AgentKind;

    fn config(&self) -> &AgentConfig;

    /// Number of independent actors; requests go to `device mod groups`.
    fn groups(&self) -> usize {
        1
    }

    /// Sets exploration for training progress `p ∈ [0, 1]` and resets noise.
    fn begin_episode(&mut self, p: f64);

    fn select(&mut self, ctx: &DecisionContext, group: usize, explore: bool) -> Result<Choice>;

    fn next_view(&self, ctx: &DecisionContext) -> NextDecision {
        NextDecision::from_context(ctx)
    }

    /// Offers a transition to the replay buffer; the agent may refuse it.
    fn store(&mut self, t: Transition);

    fn buffer_len(&self) -> usize;

    /// One gradient update per agent once a batch is available.
    fn train(&mut self) -> Result<Option<Vec<AgentLoss>>>;

    fn nets(&self) -> Vec<(String, Mlp)>;

    fn load_nets(&mut self, nets: &[(String, Mlp)]) -> Result<()>;

    fn updates(&self) -> u64;
}

/// Watts for power parameters `u`: p = (P_max/s)·10^(−D·u) on each
/// subcarrier of a hop with `s` subcarriers; unused entries are 0.
pub fn powers_from_u(ctx: &DecisionContext, disc: usize, u: &[f64], max_power: f64, decades: f64) -> Vec<f64> {
    let s_max = ctx.max_subcarriers;
    let mut out = vec![0.0; 2 * s_max];
    let Some(CandidateKind::Serve(opt)) = ctx.find(disc).map(|c| &c.kind) else { return out };
    let conv = |u: f64, s: usize| {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        max_power / s as f64 * 10f64.powf(-decades * u)
    };
    for k in 0..opt.ul.len() {
        out[k] = conv(u[k], opt.ul.len());
    }
    for k in 0..opt.dl.len() {
        out[s_max + k] = conv(u[s_max + k], opt.dl.len());
    }
    out
}

/// Inverse of [`powers_from_u`] for one power of a hop with `s` subcarriers.
pub fn u_from_power(p: f64, s: usize, max_power: f64, decades: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    (-(p * s as f64 / max_power).log10() / decades).clamp(0.0, 1.0)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Builds an agent for `env`.
pub fn make_agent(kind: AgentKind, cfg: &AgentConfig, env: &Env) -> Result<Box<dyn Agent>> {
    cfg.validate()?;
    let dims = AgentDims::from_env(env);
    Ok(match kind {
        AgentKind::Dqn => Box::new(Dqn::new(cfg.clone(), dims)?),
        AgentKind::Ddpg => Box::new(Ddpg::new(cfg.clone(), dims)?),
        AgentKind::Ca2c => Box::new(Ca2c::new(cfg.clone(), dims, 1, cfg.gate_for(kind), kind)?),
        AgentKind::MaCa2c => Box::new(Ca2c::new(cfg.clone(), dims, cfg.agents, cfg.gate_for(kind), kind)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_parameter_round_trip() {
        for &p in &[30.0, 3.7, 0.01] {
            let u = u_from_power(p / 3.0, 3, 30.0, 4.0);
            let back = 30.0 / 3.0 * 10f64.powf(-4.0 * u);
            assert!((back - p / 3.0).abs() < 1e-12 * p);
        }
    }

    #[test]
    fn exploration_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(cfg.exploration(AgentKind::Dqn, 0.0).0, 1.0);
        assert_eq!(cfg.exploration(AgentKind::Dqn, 0.5).0, 0.001);
        assert_eq!(cfg.exploration(AgentKind::Ca2c, 0.9).0, 0.01);
        assert_eq!(cfg.exploration(AgentKind::Ca2c, 0.5).1, 0.2);
        assert!(cfg.exploration(AgentKind::Ca2c, 1.0).1.abs() < 1e-12);
    }
}
