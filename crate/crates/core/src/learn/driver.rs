//! Runs an agent through one episode.
//!
//! Each slot the pending requests are split into per-agent queues
//! (`device mod groups`, arrival order) and decided in rounds: round `r`
//! lets every agent with at least `r + 1` queued requests decide its `r`-th
//! one. A round becomes one [`Transition`]; its next views are the first
//! decision of every agent in the next slot that has any request.

use serde::{Deserialize, Serialize};

use crate::env::{Env, EpisodeMetrics};
use crate::error::Result;

use super::{powers_from_u, Agent, AgentLoss, Decision, NextDecision, Transition};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub metrics: EpisodeMetrics,
    /// Mean loss per agent over the episode's updates.
    pub losses: Vec<AgentLoss>,
    /// Gradient updates made during the episode.
    pub updates: u64,
    pub decisions: u64,
    /// Decisions that failed their feasibility check.
    pub infeasible: u64,
    /// Sum of scaled per-agent rewards.
    pub agent_rewards: Vec<f64>,
}

struct Round {
    decisions: Vec<Option<Decision>>,
    rewards: Vec<f64>,
    feasible: bool,
}

fn flush(agent: &mut dyn Agent, rounds: &mut Vec<Round>, next: &[Option<NextDecision>], done: bool) {
    for r in rounds.drain(..) {
        agent.store(Transition {
            decisions: r.decisions,
            rewards: r.rewards,
            next: next.to_vec(),
            done,
            feasible: r.feasible,
        });
    }
}

/// Resets `env` with `seed` and plays it to the end. With `train` the agent
/// explores, stores transitions and updates; `progress ∈ [0, 1]` drives the
/// exploration schedules.
pub fn run_episode(env: &mut Env, agent: &mut dyn Agent, seed: u64, train: bool, progress: f64) -> Result<EpisodeReport> {
    env.reset(seed)?;
    agent.begin_episode(progress);
    let groups = agent.groups();
    let cfg = agent.config().clone();
    let scale = cfg.reward_scale;
    let max_power = env.config().radio.max_power;
    let decades = cfg.power_decades;
    let mut report = EpisodeReport {
        losses: vec![AgentLoss::default(); groups],
        agent_rewards: vec![0.0; groups],
        ..EpisodeReport::default()
    };
    let mut waiting: Vec<Round> = Vec::new();
    let mut loss_n = 0u64;
    let updates0 = agent.updates();
    while !env.done() {
        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, id) in env.pending().iter().enumerate() {
            let dev = env.request(*id).map_or(0, |r| r.device);
            queues[dev % groups].push(i);
        }
        let depth = queues.iter().map(Vec::len).max().unwrap_or(0);
        // (group, decision, request id, feasible) per round.
        let mut slot_rounds: Vec<Vec<(usize, Decision, u64, bool)>> = Vec::with_capacity(depth);
        let mut first: Vec<Option<NextDecision>> = vec![None; groups];
        let action = {
            let mut planner = env.planner();
            for r in 0..depth {
                let mut round = Vec::new();
                for (g, q) in queues.iter().enumerate() {
                    let Some(&idx) = q.get(r) else { continue };
                    let ctx = planner.context(idx)?;
                    if r == 0 {
                        first[g] = Some(agent.next_view(&ctx));
                    }
                    let choice = agent.select(&ctx, g, train)?;
                    let watts = powers_from_u(&ctx, choice.disc, &choice.u, max_power, decades);
                    let chk = planner.commit(&ctx, choice.disc, &watts)?;
                    round.push((g, choice.decision, ctx.request, chk.ok));
                }
                slot_rounds.push(round);
            }
            planner.finish()
        };
        if depth > 0 && train {
            flush(agent, &mut waiting, &first, false);
        }
        let out = env.step(&action)?;
        let offending: Vec<u64> = out.info.offending.iter().map(|o| o.request).collect();
        let base = out.breakdown.base / scale;
        let penalty = -env.config().penalty / scale;
        for round in slot_rounds {
            let mut rewards = vec![base; groups];
            let mut decisions = vec![None; groups];
            let mut feasible = true;
            for (g, d, req, ok) in round {
                report.decisions += 1;
                report.infeasible += (!ok) as u64;
                if offending.contains(&req) {
                    rewards[g] = penalty;
                    feasible = false;
                }
                report.agent_rewards[g] += rewards[g];
                decisions[g] = Some(d);
            }
            if train {
                waiting.push(Round { decisions, rewards, feasible });
            }
        }
        if train {
            if out.done {
                flush(agent, &mut waiting, &vec![None; groups], true);
            }
            for _ in 0..cfg.updates_per_slot {
                if let Some(ls) = agent.train()? {
                    loss_n += 1;
                    for (acc, l) in report.losses.iter_mut().zip(ls) {
                        acc.critic += l.critic;
                        acc.actor += l.actor;
                    }
                }
            }
        }
    }
    if loss_n > 0 {
        for l in &mut report.losses {
            l.critic /= loss_n as f64;
            l.actor /= loss_n as f64;
        }
    }
    report.updates = agent.updates() - updates0;
    report.metrics = env.episode_metrics();
    Ok(report)
}
