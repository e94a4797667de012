//! Deterministic greedy schedulers. Each pending request gets the best
//! feasible candidate under a latency or cost score, at the minimum powers
//! meeting its rate and delay targets; requests with no feasible candidate
//! are rejected.

use serde::{Deserialize, Serialize};

use crate::env::{encode_action, CandidateKind, DecisionContext, Env, EnvAction, SlotPlanner};
use crate::error::Result;
use crate::learn::EpisodeReport;
use crate::radio::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyKind {
    /// Lowest end-to-end latency, stalest request first.
    Aoi,
    /// Lowest incurred network cost, requests in arrival order.
    Cost,
}

/// A feasible candidate with both scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub id: usize,
    pub powers: Vec<f64>,
    /// Σ VNF delays plus both access delays, seconds.
    pub latency: f64,
    /// Weighted forwarding, execution and radio cost per slot.
    pub cost: f64,
}

/// Feasible candidates of `ctx` at their greedy powers, ordered by the
/// chosen score with candidate id as tie-break.
pub fn rank_candidates(planner: &SlotPlanner<'_>, ctx: &DecisionContext, kind: GreedyKind) -> Result<Vec<RankedCandidate>> {
    let env = planner.env();
    let w = env.config().cost.weights;
    let mut out = Vec::new();
    for cand in &ctx.candidates {
        let CandidateKind::Serve(opt) = &cand.kind else { continue };
        let (id, powers) = encode_action(ctx, cand);
        let chk = planner.check(ctx, id, &powers)?;
        if !chk.ok {
            continue;
        }
        let a = planner.service_action(ctx, id, &powers)?.expect("serve candidate decodes to an action");
        let radio = |l: &Option<crate::radio::LinkAllocation>, dir| {
            l.as_ref()
                .map_or(0.0, |l| env.costs().radio_cost(l, env.geometry(), env.config().radio.sub_bw(dir)))
        };
        out.push(RankedCandidate {
            id,
            powers,
            latency: opt.path.latency + chk.ul_delay + chk.dl_delay,
            cost: opt.path.cost + w.uplink * radio(&a.ul, Direction::Ul) + w.downlink * radio(&a.dl, Direction::Dl),
        });
    }
    out.sort_by(|a, b| {
        let (x, y) = match kind {
            GreedyKind::Aoi => (a.latency, b.latency),
            GreedyKind::Cost => (a.cost, b.cost),
        };
        x.total_cmp(&y).then(a.id.cmp(&b.id))
    });
    Ok(out)
}

/// Joint action of one slot.
pub fn greedy_action(env: &Env, kind: GreedyKind) -> Result<EnvAction> {
    let mut planner = env.planner();
    let order = match kind {
        GreedyKind::Aoi => planner.order_by_age(),
        GreedyKind::Cost => (0..planner.pending_len()).collect(),
    };
    for i in order {
        let ctx = planner.context(i)?;
        if let Some(best) = rank_candidates(&planner, &ctx, kind)?.into_iter().next() {
            let chk = planner.commit(&ctx, best.id, &best.powers)?;
            debug_assert!(chk.ok);
        }
    }
    Ok(planner.finish())
}

/// Resets `env` with `seed` and plays one episode with the greedy policy.
pub fn run_greedy_episode(env: &mut Env, kind: GreedyKind, seed: u64) -> Result<EpisodeReport> {
    env.reset(seed)?;
    let mut report = EpisodeReport::default();
    while !env.done() {
        report.decisions += env.pending().len() as u64;
        let a = greedy_action(env, kind)?;
        report.infeasible += env.step(&a)?.info.offending.len() as u64;
    }
    report.metrics = env.episode_metrics();
    Ok(report)
}

pub fn greedy_aoi(env: &Env) -> Result<EnvAction> {
    greedy_action(env, GreedyKind::Aoi)
}

pub fn greedy_cost(env: &Env) -> Result<EnvAction> {
    greedy_action(env, GreedyKind::Cost)
}
