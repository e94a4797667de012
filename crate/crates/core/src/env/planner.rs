//! Per-request decision support: a fixed-size candidate table of (path,
//! subcarrier subset) options plus reject, decoded into joint actions and
//! checked against tentative slot state.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::radio::{min_power_for_rate, Direction, LinkAllocation, RadioAllocation, SubcarrierPower};
use crate::service::{Lifecycle, ServiceRequest};
use crate::SPEED_OF_LIGHT;

use super::observation::refresh_resources;
use super::paths::{PathInfo, PathQuery};
use super::{Env, EnvAction, ServiceAction, ServiceCheck};
use crate::nfv::{ResourceLedger, ServiceDecision};

/// Width of [`Candidate::features`].
pub const CANDIDATE_FEATURES: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOption {
    pub path: PathInfo,
    pub ul: Vec<usize>,
    pub dl: Vec<usize>,
    /// Power per UL subcarrier that meets the rate and delay targets.
    pub ul_power: Vec<f64>,
    pub dl_power: Vec<f64>,
    /// Both greedy power vectors met their target within the power limit.
    pub greedy_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateKind {
    Reject,
    Serve(ServeOption),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Slot in the fixed table: 0 is reject, `1 + path·S_max + (s − 1)`
    /// serves over path `path` with `s` subcarriers per hop.
    pub id: usize,
    pub kind: CandidateKind,
    pub features: [f64; CANDIDATE_FEATURES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext {
    pub request: u64,
    /// Position in [`Env::pending`].
    pub index: usize,
    pub state: Vec<f64>,
    /// Present candidates in ascending id order; reject is always first.
    pub candidates: Vec<Candidate>,
    pub table_len: usize,
    pub max_subcarriers: usize,
}

impl DecisionContext {
    pub fn find(&self, id: usize) -> Option<&Candidate> {
        self.candidates.binary_search_by_key(&id, |c| c.id).ok().map(|i| &self.candidates[i])
    }

    /// `mask[id]` is true for present candidates.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.table_len];
        for c in &self.candidates {
            m[c.id] = true;
        }
        m
    }

    /// Width of the continuous action: S_max UL then S_max DL powers.
    pub fn power_dim(&self) -> usize {
        2 * self.max_subcarriers
    }
}

/// Builds the service action of candidate `disc` with powers taken from
/// `cont` (clipped into `[0, max_power]`, NaN as 0). `None` means reject.
pub fn decode_action(
    ctx: &DecisionContext,
    req: &ServiceRequest,
    disc: usize,
    cont: &[f64],
    max_power: f64,
) -> Result<Option<ServiceAction>> {
    let cand = ctx.find(disc).ok_or_else(|| {
        if disc >= ctx.table_len {
            Error::Index { what: "candidate", index: disc, len: ctx.table_len }
        } else {
            Error::MalformedAction(format!("candidate {disc} is not available"))
        }
    })?;
    if cont.len() != ctx.power_dim() {
        return Err(Error::Shape { expected: ctx.power_dim(), got: cont.len() });
    }
    let CandidateKind::Serve(opt) = &cand.kind else { return Ok(None) };
    let clip = |p: f64| if p.is_nan() { 0.0 } else { p.clamp(0.0, max_power) };
    let s_max = ctx.max_subcarriers;
    let hop = |dir, tx, rx, subs: &[usize], powers: &[f64]| LinkAllocation {
        service: req.id,
        direction: dir,
        tx,
        rx,
        subcarriers: subs.iter().zip(powers).map(|(&index, &p)| SubcarrierPower { index, power: clip(p) }).collect(),
    };
    Ok(Some(ServiceAction {
        decision: ServiceDecision::from_path(ctx.index, &opt.path.nodes, &opt.path.links),
        ul: Some(hop(Direction::Ul, req.device, opt.path.nodes[0], &opt.ul, &cont[..s_max])),
        dl: Some(hop(Direction::Dl, opt.path.destination, req.user, &opt.dl, &cont[s_max..])),
    }))
}

/// Inverse of [`decode_action`] for a candidate at its greedy powers.
pub fn encode_action(ctx: &DecisionContext, cand: &Candidate) -> (usize, Vec<f64>) {
    let mut cont = vec![0.0; ctx.power_dim()];
    if let CandidateKind::Serve(opt) = &cand.kind {
        cont[..opt.ul_power.len()].copy_from_slice(&opt.ul_power);
        let s = ctx.max_subcarriers;
        cont[s..s + opt.dl_power.len()].copy_from_slice(&opt.dl_power);
    }
    (cand.id, cont)
}

/// Accumulates one slot's decisions, request by request, keeping a tentative
/// ledger and radio occupancy so later requests see earlier commitments.
pub struct SlotPlanner<'a> {
    env: &'a Env,
    ledger: ResourceLedger,
    radio: RadioAllocation,
    action: EnvAction,
    decided: BTreeSet<usize>,
}

impl<'a> SlotPlanner<'a> {
    pub fn new(env: &'a Env) -> Self {
        SlotPlanner {
            env,
            ledger: env.ledger().clone(),
            radio: env.ongoing_radio(),
            action: EnvAction::default(),
            decided: BTreeSet::new(),
        }
    }

    pub fn env(&self) -> &Env {
        self.env
    }

    pub fn pending_len(&self) -> usize {
        self.env.pending().len()
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    /// Pending positions ordered by current user age, oldest first.
    pub fn order_by_age(&self) -> Vec<usize> {
        let p = self.env.pending();
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| self.env.user_age(p[b]).total_cmp(&self.env.user_age(p[a])).then(a.cmp(&b)));
        idx
    }

    /// Length of [`DecisionContext::state`].
    pub fn state_len(env: &Env) -> usize {
        let c = env.config();
        env.layout().len() + 5 + c.arrivals.devices + c.arrivals.users + c.radio.ul_subcarriers + c.radio.dl_subcarriers
    }

    fn occupied(&self, dir: Direction) -> Vec<bool> {
        let mut occ = vec![false; self.env.config().radio.subcarriers(dir)];
        for l in self.radio.links.iter().filter(|l| l.direction == dir) {
            for sp in &l.subcarriers {
                if let Some(o) = occ.get_mut(sp.index) {
                    *o = true;
                }
            }
        }
        occ
    }

    fn power_used(&self, dir: Direction, tx: usize) -> f64 {
        self.radio
            .links
            .iter()
            .filter(|l| l.direction == dir && l.tx == tx)
            .flat_map(|l| l.subcarriers.iter().map(|s| s.power))
            .sum()
    }

    pub fn context(&self, index: usize) -> Result<DecisionContext> {
        let env = self.env;
        let cfg = env.config();
        let &id = env.pending().get(index).ok_or(Error::Index {
            what: "pending service",
            index,
            len: env.pending().len(),
        })?;
        let rec = env.request(id).ok_or_else(|| Error::Contract(format!("unknown request {id}")))?;
        let attempts = match env.lifecycle(id) {
            Some(Lifecycle::Pending { attempts }) => attempts,
            _ => 0,
        };
        let ul_occ = self.occupied(Direction::Ul);
        let dl_occ = self.occupied(Direction::Dl);

        let mut state = env.observation().values;
        refresh_resources(&mut state, &env.layout(), &self.ledger);
        let per_update = cfg.payload_fraction * cfg.slot_len;
        state.push(rec.chain.len() as f64 / 7.0);
        state.push(rec.min_bitrate_ul as f64 / 1e8);
        state.push(if per_update > 0.0 { rec.delay_threshold / per_update } else { 0.0 });
        state.push(attempts as f64 / (cfg.retry_window as f64 + 1.0));
        state.push(env.user_age(id) / cfg.caps().user);
        state.extend((0..cfg.arrivals.devices).map(|d| (d == rec.device) as u8 as f64));
        state.extend((0..cfg.arrivals.users).map(|u| (u == rec.user) as u8 as f64));
        state.extend(ul_occ.iter().map(|&o| o as u8 as f64));
        state.extend(dl_occ.iter().map(|&o| o as u8 as f64));

        let s_max = cfg.candidates.max_subcarriers;
        let payload = cfg.payload_bits(rec.chain.bitrate);
        let paths = PathQuery {
            graph: env.graph(),
            out_links: env.out_links(),
            types: &env.catalog().types,
            chain: &rec.chain,
            ledger: &self.ledger,
            costs: env.costs(),
            payload_bits: payload,
            slot_len: cfg.slot_len,
            limit: cfg.candidates.search_limit,
        }
        .merged(cfg.candidates.paths);

        let mut candidates = vec![Candidate { id: 0, kind: CandidateKind::Reject, features: [0.0; CANDIDATE_FEATURES] }];
        let ch = env.channel();
        let geo = env.geometry();
        let (mu, md) = (ch.max_ul(), ch.max_dl());
        for (pi, path) in paths.iter().enumerate() {
            let src = path.nodes[0];
            let (Some(si), Some(di)) = (geo.source_index(src), geo.destination_index(path.destination)) else {
                continue;
            };
            let mut ul_free: Vec<(usize, f64)> = (0..ul_occ.len())
                .filter(|&h| !ul_occ[h])
                .map(|h| (h, ch.gain(Direction::Ul, rec.device, si, h).unwrap_or(0.0)))
                .collect();
            let mut dl_free: Vec<(usize, f64)> = (0..dl_occ.len())
                .filter(|&h| !dl_occ[h])
                .map(|h| (h, ch.gain(Direction::Dl, di, rec.user, h).unwrap_or(0.0)))
                .collect();
            ul_free.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            dl_free.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let d_ul = geo.distance(Direction::Ul, rec.device, src).unwrap_or(0.0);
            let d_dl = geo.distance(Direction::Dl, path.destination, rec.user).unwrap_or(0.0);
            let target = |required: u64, dist: f64| {
                let slack = rec.delay_threshold - dist / SPEED_OF_LIGHT;
                let for_delay = if payload <= 0.0 { 0.0 } else if slack > 0.0 { payload / slack } else { f64::INFINITY };
                (required as f64).max(for_delay) * (1.0 + 1e-6)
            };
            let ul_target = target(rec.min_bitrate_ul, d_ul);
            let dl_target = target(rec.min_bitrate_dl, d_dl);
            let ul_room = (cfg.radio.max_power - self.power_used(Direction::Ul, rec.device)).max(0.0);
            let dl_room = (cfg.radio.max_power - self.power_used(Direction::Dl, path.destination)).max(0.0);
            for s in 1..=s_max {
                if ul_free.len() < s || dl_free.len() < s {
                    break;
                }
                let ul: Vec<usize> = ul_free[..s].iter().map(|x| x.0).collect();
                let dl: Vec<usize> = dl_free[..s].iter().map(|x| x.0).collect();
                let ug: Vec<f64> = ul_free[..s].iter().map(|x| x.1).collect();
                let dg: Vec<f64> = dl_free[..s].iter().map(|x| x.1).collect();
                let w_ul = cfg.radio.ul_sub_bw;
                let w_dl = cfg.radio.dl_sub_bw;
                let (ul_power, ok_u) = min_power_for_rate(ul_target, &ug, w_ul, cfg.radio.noise_variance(w_ul), ul_room);
                let (dl_power, ok_d) = min_power_for_rate(dl_target, &dg, w_dl, cfg.radio.noise_variance(w_dl), dl_room);
                let sum = |v: &[f64]| v.iter().sum::<f64>();
                let mean = |v: &[f64], m: f64| if m > 0.0 { sum(v) / (v.len() as f64 * m) } else { 0.0 };
                let f = path.nodes.len() as f64;
                let bottleneck = path
                    .nodes
                    .iter()
                    .map(|&n| {
                        let c = self.ledger.cap_node_cpu[n];
                        if c == 0 { 0.0 } else { self.ledger.node_cpu[n] as f64 / c as f64 }
                    })
                    .fold(1.0, f64::min);
                let ul_alloc = LinkAllocation {
                    service: id,
                    direction: Direction::Ul,
                    tx: rec.device,
                    rx: src,
                    subcarriers: ul.iter().zip(&ul_power).map(|(&index, &power)| SubcarrierPower { index, power }).collect(),
                };
                let dl_alloc = LinkAllocation {
                    service: id,
                    direction: Direction::Dl,
                    tx: path.destination,
                    rx: rec.user,
                    subcarriers: dl.iter().zip(&dl_power).map(|(&index, &power)| SubcarrierPower { index, power }).collect(),
                };
                let features = [
                    1.0,
                    path.latency / cfg.slot_len,
                    path.cost / (2.0 * f + 1.0),
                    f / 7.0,
                    s as f64 / s_max as f64,
                    sum(&ul_power) / cfg.radio.max_power,
                    sum(&dl_power) / cfg.radio.max_power,
                    mean(&ug, mu),
                    mean(&dg, md),
                    (ok_u && ok_d) as u8 as f64,
                    env.costs().radio_cost(&ul_alloc, geo, w_ul) / 10.0,
                    env.costs().radio_cost(&dl_alloc, geo, w_dl) / 10.0,
                    bottleneck,
                ];
                candidates.push(Candidate {
                    id: 1 + pi * s_max + (s - 1),
                    kind: CandidateKind::Serve(ServeOption {
                        path: path.clone(),
                        ul,
                        dl,
                        ul_power,
                        dl_power,
                        greedy_ok: ok_u && ok_d,
                    }),
                    features,
                });
            }
        }
        Ok(DecisionContext {
            request: id,
            index,
            state,
            candidates,
            table_len: cfg.candidates.max_candidates(),
            max_subcarriers: s_max,
        })
    }

    pub fn service_action(&self, ctx: &DecisionContext, disc: usize, cont: &[f64]) -> Result<Option<ServiceAction>> {
        let req = self
            .env
            .request(ctx.request)
            .ok_or_else(|| Error::Contract(format!("unknown request {}", ctx.request)))?;
        decode_action(ctx, req, disc, cont, self.env.config().radio.max_power)
    }

    /// Feasibility of an action against the tentative state. Reject is
    /// always feasible.
    pub fn check(&self, ctx: &DecisionContext, disc: usize, cont: &[f64]) -> Result<ServiceCheck> {
        match self.service_action(ctx, disc, cont)? {
            None => Ok(ServiceCheck { ok: true, ..ServiceCheck::default() }),
            Some(a) => self.env.check_service(ctx.request, &a.decision, a.ul.as_ref(), a.dl.as_ref(), &self.ledger, &self.radio),
        }
    }

    /// Adds the action to the slot. Feasible serves update the tentative
    /// state; infeasible ones are still submitted and will be penalized.
    pub fn commit(&mut self, ctx: &DecisionContext, disc: usize, cont: &[f64]) -> Result<ServiceCheck> {
        if !self.decided.insert(ctx.index) {
            return Err(Error::MalformedAction(format!("pending request {} decided twice", ctx.index)));
        }
        let Some(a) = self.service_action(ctx, disc, cont)? else {
            return Ok(ServiceCheck { ok: true, ..ServiceCheck::default() });
        };
        let chk = self
            .env
            .check_service(ctx.request, &a.decision, a.ul.as_ref(), a.dl.as_ref(), &self.ledger, &self.radio)?;
        if chk.ok {
            self.ledger = self.ledger.reserved(&chk.footprint);
            self.radio.links.extend(a.ul.clone());
            self.radio.links.extend(a.dl.clone());
        }
        self.action.push(a);
        Ok(chk)
    }

    pub fn finish(self) -> EnvAction {
        self.action
    }
}
