//! The slotted decision process: each slot new requests arrive, the agent
//! places and schedules them, resources and ages advance, and a reward is the
//! negative weighted sum of average AoI and network cost.

pub mod config;
pub mod cost;
pub mod observation;
pub mod paths;
mod planner;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aoi::{AoiState, SlotEvents};
use crate::error::{Error, Result};
use crate::nfv::{
    footprint, roll_start_times, validate_placement, vnf_delays, FeasibilityVerdict, Footprint,
    PlacementDecision, ResourceLedger, ServiceDecision,
};
use crate::radio::{
    access_delays, link_rate, sample_channel, validate_radio, ChannelState, Direction, LinkAllocation,
    RadioAllocation, RadioGeometry,
};
use crate::service::{spawn_arrivals, ChainCatalog, Lifecycle, ServiceRegistry, ServiceRequest};
use crate::topology::{build_topology, NetworkGraph, NodeRole};
use crate::util::{derive_seed, rng_for};

pub use config::{CandidateSpec, CostSpec, EnvConfig, Weights};
pub use cost::CostModel;
pub use observation::{build_observation, ObsLayout, Observation};
pub use paths::{PathInfo, PathQuery, Rank};
pub use planner::{
    decode_action, encode_action, Candidate, CandidateKind, DecisionContext, ServeOption, SlotPlanner,
    CANDIDATE_FEATURES,
};

/// Joint action of one slot. `placement.services[i].service` indexes
/// [`Env::pending`]; radio hops carry the request id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub placement: PlacementDecision,
    pub radio: RadioAllocation,
}

/// Action for a single pending request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceAction {
    pub decision: ServiceDecision,
    pub ul: Option<LinkAllocation>,
    pub dl: Option<LinkAllocation>,
}

impl EnvAction {
    pub fn push(&mut self, a: ServiceAction) {
        self.placement.services.push(a.decision);
        self.radio.links.extend(a.ul);
        self.radio.links.extend(a.dl);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub avg_aoi: f64,
    pub fwd_cost: f64,
    pub exec_cost: f64,
    pub ul_cost: f64,
    pub dl_cost: f64,
    pub penalty: bool,
    /// Reward the slot would have earned without the penalty.
    pub base: f64,
    pub reward: f64,
}

impl RewardBreakdown {
    /// ξ₁Λ₁ + ξ₂Λ₂ + ξ₃Λ₃ + ξ₄Λ₄.
    pub fn weighted_cost(&self, w: &Weights) -> f64 {
        w.forwarding * self.fwd_cost + w.execution * self.exec_cost + w.uplink * self.ul_cost + w.downlink * self.dl_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub request: u64,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub slot: u64,
    pub admitted: Vec<u64>,
    /// Infeasible decisions: these trigger the penalty.
    pub offending: Vec<Rejection>,
    /// Pending requests that were not admitted this slot.
    pub rejected: Vec<u64>,
    pub dropped: Vec<u64>,
    pub terminated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub info: StepInfo,
    pub done: bool,
}

/// Result of checking one service action against the current state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceCheck {
    pub ok: bool,
    pub reasons: Vec<String>,
    pub footprint: Footprint,
    /// UL propagation plus transmission delay.
    pub ul_delay: f64,
    pub dl_delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Running {
    decision: ServiceDecision,
    footprint: Footprint,
    ul: LinkAllocation,
    dl: LinkAllocation,
    ul_delay: f64,
    dl_delay: f64,
    emissions: BTreeSet<u64>,
    chain_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Tracker {
    state: AoiState,
    sum: f64,
    count: u64,
    /// Last slot to track, once known.
    end: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub steps: u64,
    pub reward_sum: f64,
    /// Σ over slots of the weighted network cost.
    pub total_cost: f64,
    /// Mean over requests of their time-averaged user age.
    pub avg_aoi: f64,
    pub arrived: u64,
    pub admitted: u64,
    pub penalties: u64,
}

impl EpisodeMetrics {
    pub fn acceptance_rate(&self) -> f64 {
        if self.arrived == 0 {
            0.0
        } else {
            self.admitted as f64 / self.arrived as f64
        }
    }

    pub fn mean_reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.reward_sum / self.steps as f64
        }
    }
}

const STREAM_ARRIVALS: u64 = 1;
const STREAM_CHANNEL: u64 = 2;

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    graph: NetworkGraph,
    catalog: ChainCatalog,
    out_links: Vec<Vec<usize>>,
    geometry: RadioGeometry,
    costs: CostModel,
    layout: ObsLayout,

    seed: u64,
    t: u64,
    done: bool,
    ledger: ResourceLedger,
    registry: ServiceRegistry,
    running: BTreeMap<u64, Running>,
    trackers: BTreeMap<u64, Tracker>,
    channel: ChannelState,
    pending: Vec<u64>,
    finished_aoi: Vec<f64>,
    metrics: EpisodeMetrics,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        let graph = build_topology(&cfg.topology)?;
        let catalog = ChainCatalog::generate(&cfg.catalog)?;
        Self::with_parts(cfg, graph, catalog)
    }

    pub fn with_parts(cfg: EnvConfig, graph: NetworkGraph, catalog: ChainCatalog) -> Result<Self> {
        cfg.validate()?;
        catalog.validate()?;
        if catalog.types.len() > graph.num_vnf_types {
            return Err(Error::Config(format!(
                "catalog has {} VNF types, topology knows {}",
                catalog.types.len(),
                graph.num_vnf_types
            )));
        }
        let area = cfg.topology.area;
        let mut rng = rng_for(cfg.geometry_seed, &[0x9e0]);
        let pos = |rng: &mut rand_chacha::ChaCha8Rng| [rng.random_range(0.0..area), rng.random_range(0.0..area)];
        let devices = (0..cfg.arrivals.devices).map(|_| pos(&mut rng)).collect();
        let users = (0..cfg.arrivals.users).map(|_| pos(&mut rng)).collect();
        let role_pos = |role| {
            graph
                .nodes
                .iter()
                .filter(|n| n.role == role)
                .map(|n| (n.id, n.position))
                .collect::<Vec<_>>()
        };
        let geometry = RadioGeometry {
            devices,
            users,
            sources: role_pos(NodeRole::Source),
            destinations: role_pos(NodeRole::Destination),
        };
        let costs = CostModel::generate(
            &cfg.cost,
            &graph,
            &geometry,
            cfg.radio.ul_subcarriers,
            cfg.radio.dl_subcarriers,
        );
        let layout = ObsLayout {
            links: graph.num_links(),
            nodes: graph.num_nodes(),
            devices: geometry.devices.len(),
            sources: geometry.sources.len(),
            ul_subcarriers: cfg.radio.ul_subcarriers,
            destinations: geometry.destinations.len(),
            users: geometry.users.len(),
            dl_subcarriers: cfg.radio.dl_subcarriers,
            pending_slots: cfg.pending_slots,
        };
        let ledger = ResourceLedger::new(&graph);
        let channel = sample_channel(&geometry, &cfg.radio, &mut rng_for(0, &[STREAM_CHANNEL]));
        let registry = ServiceRegistry::new(cfg.slot_len, cfg.retry_window);
        Ok(Env {
            out_links: graph.out_links(),
            cfg,
            graph,
            catalog,
            geometry,
            costs,
            layout,
            seed: 0,
            t: 0,
            done: true,
            ledger,
            registry,
            running: BTreeMap::new(),
            trackers: BTreeMap::new(),
            channel,
            pending: Vec::new(),
            finished_aoi: Vec::new(),
            metrics: EpisodeMetrics::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn catalog(&self) -> &ChainCatalog {
        &self.catalog
    }

    pub fn geometry(&self) -> &RadioGeometry {
        &self.geometry
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    /// Replaces the generated cost coefficients; shapes must match the graph
    /// and the radio configuration.
    pub fn set_cost_model(&mut self, costs: CostModel) -> Result<()> {
        let rows = |m: &[Vec<f64>], n: usize, w: usize| m.len() == n && m.iter().all(|r| r.len() == w);
        if costs.link_cost.len() != self.graph.num_links()
            || costs.proc_cost.len() != self.graph.num_nodes()
            || !rows(&costs.ul_cost, self.geometry.sources.len(), self.cfg.radio.ul_subcarriers)
            || !rows(&costs.dl_cost, self.geometry.destinations.len(), self.cfg.radio.dl_subcarriers)
        {
            return Err(Error::Config("cost model does not match the network".into()));
        }
        self.costs = costs;
        Ok(())
    }

    pub fn layout(&self) -> ObsLayout {
        self.layout
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn out_links(&self) -> &[Vec<usize>] {
        &self.out_links
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// Requests awaiting a decision this slot, in arrival order.
    pub fn pending(&self) -> &[u64] {
        &self.pending
    }

    pub fn request(&self, id: u64) -> Option<&ServiceRequest> {
        self.registry.get(id).map(|r| &r.request)
    }

    pub fn lifecycle(&self, id: u64) -> Option<Lifecycle> {
        self.registry.get(id).map(|r| r.state)
    }

    /// Current user-side age of a tracked request, 0 otherwise.
    pub fn user_age(&self, id: u64) -> f64 {
        self.trackers.get(&id).map_or(0.0, |t| t.state.user_age)
    }

    pub fn running_ids(&self) -> Vec<u64> {
        self.running.keys().copied().collect()
    }

    /// Radio allocations held by running services.
    pub fn ongoing_radio(&self) -> RadioAllocation {
        let mut links = Vec::with_capacity(2 * self.running.len());
        for r in self.running.values() {
            links.push(r.ul.clone());
            links.push(r.dl.clone());
        }
        RadioAllocation { links }
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.seed = seed;
        self.t = 0;
        self.done = false;
        self.ledger = ResourceLedger::new(&self.graph);
        self.registry = ServiceRegistry::new(self.cfg.slot_len, self.cfg.retry_window);
        self.running.clear();
        self.trackers.clear();
        self.finished_aoi.clear();
        self.metrics = EpisodeMetrics::default();
        self.prepare_slot()?;
        Ok(self.observation())
    }

    fn prepare_slot(&mut self) -> Result<()> {
        let t = self.t;
        let arrivals = spawn_arrivals(
            t,
            &self.cfg.arrivals,
            &self.catalog,
            self.cfg.slot_len,
            derive_seed(self.seed, &[STREAM_ARRIVALS]),
        )?;
        let caps = self.cfg.caps();
        for r in arrivals {
            self.trackers.insert(
                r.id,
                Tracker {
                    state: AoiState::new(r.chain.len(), caps, self.cfg.slot_len, t),
                    sum: 0.0,
                    count: 0,
                    end: None,
                },
            );
            self.metrics.arrived += 1;
            self.registry.insert(r);
        }
        let mut rng = rng_for(self.seed, &[STREAM_CHANNEL, t]);
        self.channel = sample_channel(&self.geometry, &self.cfg.radio, &mut rng);
        let mut pending: Vec<&ServiceRequest> = self
            .registry
            .records()
            .filter(|r| matches!(r.state, Lifecycle::Pending { .. }))
            .map(|r| &r.request)
            .collect();
        pending.sort_by_key(|r| (r.arrival_slot, r.id));
        self.pending = pending.iter().map(|r| r.id).collect();
        Ok(())
    }

    pub fn observation(&self) -> Observation {
        let bitrates: Vec<u64> = self
            .pending
            .iter()
            .filter_map(|id| self.request(*id))
            .map(|r| r.min_bitrate_ul)
            .collect();
        build_observation(self.layout, &self.ledger, &self.channel, &bitrates)
    }

    pub fn planner(&self) -> SlotPlanner<'_> {
        SlotPlanner::new(self)
    }

    /// Checks one service action against a tentative ledger and the radio
    /// allocations already held. Infeasibility is reported in the result.
    pub fn check_service(
        &self,
        id: u64,
        sd: &ServiceDecision,
        ul: Option<&LinkAllocation>,
        dl: Option<&LinkAllocation>,
        ledger: &ResourceLedger,
        ongoing: &RadioAllocation,
    ) -> Result<ServiceCheck> {
        let req = self
            .request(id)
            .ok_or_else(|| Error::MalformedAction(format!("unknown request {id}")))?;
        let chain = &req.chain;
        let mut reasons = Vec::new();
        let single = ServiceDecision { service: 0, functions: sd.functions.clone() };
        let pd = PlacementDecision { services: vec![single.clone()] };
        let verdict = validate_placement(&pd, ledger, &self.graph, &self.catalog.types, std::slice::from_ref(chain))?;
        reasons.extend(verdict.violations.iter().map(|v| format!("{v:?}")));
        let payload = self.cfg.payload_bits(chain.bitrate);
        let mut fp = Footprint::default();
        let mut head = None;
        let mut tail = None;
        if verdict.ok {
            let mut delays = vnf_delays(&single, &self.graph, &self.catalog.types, chain, payload)?;
            let timing = roll_start_times(&mut delays, self.cfg.slot_len, 0);
            reasons.extend(timing.violations.iter().map(|v| format!("{v:?}")));
            fp = footprint(&single, &self.graph, &self.catalog.types, chain)?;
            head = sd.functions.first().and_then(|f| f.nodes.first().copied());
            tail = sd
                .functions
                .last()
                .and_then(|f| f.links.first())
                .map(|&l| self.graph.links[l].dst);
        }

        let mut new = RadioAllocation::default();
        let mut required = BTreeMap::new();
        match ul {
            Some(l) => {
                if l.direction != Direction::Ul || l.service != id || l.tx != req.device {
                    reasons.push("uplink allocation does not match the request".into());
                }
                if head.is_some_and(|h| h != l.rx) {
                    reasons.push("uplink does not terminate at the ingress node".into());
                }
                new.links.push(l.clone());
            }
            None => reasons.push("missing uplink allocation".into()),
        }
        match dl {
            Some(l) => {
                if l.direction != Direction::Dl || l.service != id || l.rx != req.user {
                    reasons.push("downlink allocation does not match the request".into());
                }
                if tail.is_some_and(|t| t != l.tx) {
                    reasons.push("downlink does not leave from the egress node".into());
                }
                new.links.push(l.clone());
            }
            None => reasons.push("missing downlink allocation".into()),
        }
        required.insert((id, Direction::Ul), req.min_bitrate_ul);
        required.insert((id, Direction::Dl), req.min_bitrate_dl);
        let rv = validate_radio(&new, ongoing, &required, &self.channel, &self.geometry, &self.cfg.radio);
        reasons.extend(rv.violations.iter().map(|v| format!("{v:?}")));

        let mut hop = |l: Option<&LinkAllocation>| -> f64 {
            let Some(l) = l else { return f64::INFINITY };
            let rate = link_rate(l, &self.channel, &self.geometry, &self.cfg.radio).unwrap_or(0.0);
            let dist = self.geometry.distance(l.direction, l.tx, l.rx).unwrap_or(f64::INFINITY);
            let d = access_delays(rate, payload, dist, req.delay_threshold);
            if !d.ok {
                reasons.push(format!("{:?} access delay {} exceeds {}", l.direction, d.total(), req.delay_threshold));
            }
            d.total()
        };
        let ul_delay = hop(ul);
        let dl_delay = hop(dl);
        Ok(ServiceCheck { ok: reasons.is_empty(), reasons, footprint: fp, ul_delay, dl_delay })
    }

    fn check_shape(&self, action: &EnvAction) -> Result<()> {
        let mut seen = BTreeSet::new();
        for sd in &action.placement.services {
            let &id = self.pending.get(sd.service).ok_or(Error::Index {
                what: "pending service",
                index: sd.service,
                len: self.pending.len(),
            })?;
            if !seen.insert(id) {
                return Err(Error::MalformedAction(format!("request {id} decided twice")));
            }
            let f = self.request(id).map_or(0, |r| r.chain.len());
            if sd.functions.len() != f {
                return Err(Error::Shape { expected: f, got: sd.functions.len() });
            }
        }
        let mut hops = BTreeSet::new();
        for l in &action.radio.links {
            if !seen.contains(&l.service) {
                return Err(Error::MalformedAction(format!("radio hop for undecided request {}", l.service)));
            }
            if !hops.insert((l.service, l.direction)) {
                return Err(Error::MalformedAction(format!(
                    "request {} has two {:?} allocations",
                    l.service, l.direction
                )));
            }
            if l.subcarriers.iter().any(|s| s.index >= self.cfg.radio.subcarriers(l.direction)) {
                return Err(Error::Index {
                    what: "subcarrier",
                    index: l.subcarriers.iter().map(|s| s.index).max().unwrap_or(0),
                    len: self.cfg.radio.subcarriers(l.direction),
                });
            }
        }
        Ok(())
    }

    pub fn step(&mut self, action: &EnvAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step after the episode finished; call reset".into()));
        }
        self.check_shape(action)?;
        let t = self.t;
        let mut info = StepInfo { slot: t, ..StepInfo::default() };

        // Sequential per-service validation against tentative state.
        let mut ledger = self.ledger.clone();
        let mut radio = self.ongoing_radio();
        let mut accepted: Vec<(u64, ServiceDecision, ServiceCheck, LinkAllocation, LinkAllocation)> = Vec::new();
        for sd in &action.placement.services {
            let id = self.pending[sd.service];
            if !sd.claimed() {
                continue;
            }
            let ul = action.radio.links.iter().find(|l| l.service == id && l.direction == Direction::Ul);
            let dl = action.radio.links.iter().find(|l| l.service == id && l.direction == Direction::Dl);
            let chk = self.check_service(id, sd, ul, dl, &ledger, &radio)?;
            if chk.ok {
                ledger = ledger.reserved(&chk.footprint);
                let (ul, dl) = (ul.cloned().expect("checked"), dl.cloned().expect("checked"));
                radio.links.push(ul.clone());
                radio.links.push(dl.clone());
                accepted.push((id, sd.clone(), chk, ul, dl));
            } else {
                info.offending.push(Rejection { request: id, reasons: chk.reasons });
            }
        }
        let penalty = !info.offending.is_empty();

        // Admissions.
        let mut arrival_fps = Vec::with_capacity(accepted.len());
        let admitted: BTreeSet<u64> = accepted.iter().map(|a| a.0).collect();
        for (id, sd, chk, ul, dl) in accepted {
            self.registry.admit(id, t)?;
            let req = self.request(id).expect("admitted request exists").clone();
            let lifetime = req.lifetime_slots(self.cfg.slot_len);
            let p = req.packets.max(1) as u64;
            let emissions = (0..p).map(|i| t + i * lifetime / p).collect();
            arrival_fps.push(chk.footprint.clone());
            self.running.insert(
                id,
                Running {
                    decision: ServiceDecision { service: 0, functions: sd.functions },
                    footprint: chk.footprint,
                    ul,
                    dl,
                    ul_delay: chk.ul_delay,
                    dl_delay: chk.dl_delay,
                    emissions,
                    chain_len: req.chain.len(),
                },
            );
            info.admitted.push(id);
            self.metrics.admitted += 1;
        }
        for &id in &self.pending {
            if !admitted.contains(&id) {
                info.rejected.push(id);
                if self.registry.reject(id, t)? {
                    info.dropped.push(id);
                    let req = self.request(id).expect("dropped request exists");
                    let end = req.arrival_slot + req.lifetime_slots(self.cfg.slot_len) - 1;
                    if let Some(tr) = self.trackers.get_mut(&id) {
                        tr.end = Some(end.max(t));
                    }
                }
            }
        }
        for (id, r) in &self.running {
            self.registry.record_placement(*id, t, r.decision.assigned_nodes() as u32)?;
        }
        let partition = self.registry.classify(t);
        let term_fps: Vec<Footprint> = partition
            .terminated
            .iter()
            .map(|id| self.running[id].footprint.clone())
            .collect();
        self.ledger
            .commit_slot(&FeasibilityVerdict::from_violations(vec![]), &arrival_fps, &term_fps)?;

        // Ages.
        let mut age_sum = 0.0;
        let mut age_n = 0usize;
        for (id, tr) in self.trackers.iter_mut() {
            let ev = match self.running.get(id) {
                Some(r) => SlotEvents {
                    ul: r.emissions.contains(&t).then_some(r.ul_delay),
                    placement: r.decision.assigned_links() as u64 * r.decision.assigned_nodes() as u64,
                    dl: Some(r.dl_delay),
                },
                None => SlotEvents::default(),
            };
            tr.state.step(ev);
            tr.sum += tr.state.user_age;
            tr.count += 1;
            age_sum += tr.state.user_age;
            age_n += 1;
        }
        let avg_aoi = if age_n == 0 { 0.0 } else { age_sum / age_n as f64 };

        // Costs of every service that ran this slot.
        let mut bd = RewardBreakdown { avg_aoi, penalty, ..RewardBreakdown::default() };
        for r in self.running.values() {
            for fd in &r.decision.functions {
                bd.fwd_cost += fd.links.iter().map(|&l| self.costs.link_cost[l]).sum::<f64>();
                bd.exec_cost += fd.nodes.iter().map(|&n| self.costs.proc_cost[n]).sum::<f64>();
            }
            bd.ul_cost += self.costs.radio_cost(&r.ul, &self.geometry, self.cfg.radio.ul_sub_bw);
            bd.dl_cost += self.costs.radio_cost(&r.dl, &self.geometry, self.cfg.radio.dl_sub_bw);
            debug_assert!(r.chain_len > 0);
        }
        let w = self.cfg.cost.weights;
        let cost = bd.weighted_cost(&w);
        bd.base = -(w.aoi * avg_aoi + cost);
        bd.reward = if penalty { -self.cfg.penalty } else { bd.base };

        // Terminations and finished trackers.
        for id in &partition.terminated {
            self.registry.mark_terminated(*id, t)?;
            self.running.remove(id);
            if let Some(tr) = self.trackers.get_mut(id) {
                tr.end = Some(t);
            }
            info.terminated.push(*id);
        }
        let finished: Vec<u64> = self
            .trackers
            .iter()
            .filter(|(_, tr)| tr.end.is_some_and(|e| e <= t))
            .map(|(id, _)| *id)
            .collect();
        for id in finished {
            let tr = self.trackers.remove(&id).expect("listed tracker");
            self.finished_aoi.push(tr.sum / tr.count.max(1) as f64);
        }
        self.registry.prune(|r| match r.state {
            Lifecycle::Terminated { .. } => false,
            Lifecycle::Dropped { .. } => self.trackers.contains_key(&r.request.id),
            _ => true,
        });

        self.metrics.steps += 1;
        self.metrics.reward_sum += bd.reward;
        self.metrics.total_cost += cost;
        self.metrics.penalties += penalty as u64;

        self.t += 1;
        if self.t >= self.cfg.steps_per_episode {
            self.done = true;
            self.pending.clear();
        } else {
            self.prepare_slot()?;
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward: bd.reward,
            breakdown: bd,
            info,
            done: self.done,
        })
    }

    /// Metrics of the episode so far; requests still tracked contribute
    /// their partial time average.
    pub fn episode_metrics(&self) -> EpisodeMetrics {
        let mut m = self.metrics;
        let live = self.trackers.values().filter(|t| t.count > 0).map(|t| t.sum / t.count as f64);
        let all: Vec<f64> = self.finished_aoi.iter().copied().chain(live).collect();
        m.avg_aoi = if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 };
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::greedy_aoi;

    fn small(steps: u64) -> EnvConfig {
        EnvConfig { steps_per_episode: steps, ..EnvConfig::default() }
    }

    /// Runs greedy slots until some service is admitted.
    fn until_admitted(env: &mut Env) -> StepOutcome {
        loop {
            let a = greedy_aoi(env).unwrap();
            let o = env.step(&a).unwrap();
            if !o.info.admitted.is_empty() {
                return o;
            }
        }
    }

    #[test]
    fn fresh_reset_is_full() {
        let mut env = Env::new(small(5)).unwrap();
        let obs = env.reset(3).unwrap();
        assert!(env.ledger().is_full());
        let l = obs.layout;
        assert!(obs.values[..l.ul_gains()].iter().all(|v| *v == 1.0));
    }

    #[test]
    fn observation_length() {
        let cfg = small(5);
        let mut env = Env::new(cfg.clone()).unwrap();
        let obs = env.reset(0).unwrap();
        let t = &cfg.topology;
        let n = t.sources + t.middles + t.destinations;
        let expect = t.links.unwrap() + 2 * n + 5 * t.sources * 10 + t.destinations * 5 * 10 + cfg.pending_slots;
        assert_eq!(obs.values.len(), expect);
        assert_eq!(expect, 135 + 50 + 250 + 250 + 16);
    }

    #[test]
    fn reset_is_reproducible() {
        let mut a = Env::new(small(5)).unwrap();
        let mut b = Env::new(small(5)).unwrap();
        assert_eq!(a.reset(9).unwrap(), b.reset(9).unwrap());
        assert_eq!(a.pending(), b.pending());
        assert_ne!(a.reset(10).unwrap(), b.reset(9).unwrap());
    }

    #[test]
    fn empty_action_reward_is_age_only() {
        let mut env = Env::new(small(3)).unwrap();
        env.reset(1).unwrap();
        let ids = env.pending().to_vec();
        assert!(!ids.is_empty());
        let o = env.step(&EnvAction::default()).unwrap();
        // Nothing served: every age grows by one slot from zero.
        assert_eq!(o.reward, -0.5);
        assert_eq!(o.breakdown.weighted_cost(&Weights::default()), 0.0);
        assert_eq!(o.info.rejected, ids);
    }

    #[test]
    fn shared_subcarrier_triggers_penalty() {
        let mut env = Env::new(small(50)).unwrap();
        env.reset(2).unwrap();
        until_admitted(&mut env);
        let held = env.ongoing_radio().links[0].subcarriers[0].index;
        loop {
            let mut a = greedy_aoi(&env).unwrap();
            if let Some(ul) = a.radio.links.iter_mut().find(|l| l.direction == Direction::Ul) {
                ul.subcarriers[0].index = held;
                let o = env.step(&a).unwrap();
                assert!(o.breakdown.penalty);
                assert_eq!(o.reward, -env.config().penalty);
                assert_eq!(o.info.offending.len(), 1);
                assert!(o.info.offending[0].reasons.iter().any(|r| r.contains("Exclusivity")));
                return;
            }
            env.step(&a).unwrap();
        }
    }

    #[test]
    fn unit_cost_reward_resums() {
        let mut cfg = small(50);
        cfg.cost.range = [1.0, 1.0];
        let mut env = Env::new(cfg).unwrap();
        env.reset(4).unwrap();
        loop {
            let a = greedy_aoi(&env).unwrap();
            let tracked: Vec<u64> = env.trackers.keys().copied().collect();
            let o = env.step(&a).unwrap();
            if o.info.admitted.is_empty() || !env.running_ids().iter().all(|id| o.info.admitted.contains(id)) {
                continue;
            }
            // Only newly admitted services run: Λ1 = Λ2 = Σ F, radio cost
            // Σ (1.5 + p) per subcarrier.
            let mut expect = 0.0;
            for sd in &a.placement.services {
                expect += 2.0 * sd.functions.len() as f64;
            }
            for l in &a.radio.links {
                expect += l.subcarriers.iter().map(|s| 1.5 + s.power).sum::<f64>();
            }
            let ages: Vec<f64> = tracked.iter().map(|id| env.user_age(*id)).collect();
            expect += ages.iter().sum::<f64>() / ages.len() as f64;
            assert!((o.reward + expect).abs() <= 1e-9 * expect, "{} vs {}", o.reward, -expect);
            return;
        }
    }

    #[test]
    fn greedy_rollouts_are_deterministic() {
        let run = || {
            let mut env = Env::new(small(20)).unwrap();
            env.reset(5).unwrap();
            let mut out = Vec::new();
            while !env.done() {
                let a = greedy_aoi(&env).unwrap();
                out.push(env.step(&a).unwrap().reward);
            }
            (out, env.episode_metrics())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resources_stay_within_capacity() {
        let mut env = Env::new(small(60)).unwrap();
        env.reset(6).unwrap();
        while !env.done() {
            let a = greedy_aoi(&env).unwrap();
            let o = env.step(&a).unwrap();
            assert!(!o.breakdown.penalty);
            assert!(env.ledger().within_bounds());
        }
    }

    #[test]
    fn decode_clips_and_encode_round_trips() {
        let mut env = Env::new(small(30)).unwrap();
        env.reset(7).unwrap();
        let planner = env.planner();
        let ctx = planner.context(0).unwrap();
        let cand = ctx.candidates.iter().find(|c| matches!(c.kind, CandidateKind::Serve(_))).unwrap();
        let s = ctx.max_subcarriers;
        let mut cont = vec![f64::NAN; 2 * s];
        cont[0] = -1.0;
        cont[s] = 1e9;
        let a = planner.service_action(&ctx, cand.id, &cont).unwrap().unwrap();
        let ul = a.ul.unwrap();
        assert_eq!(ul.subcarriers[0].power, 0.0);
        assert!(ul.subcarriers.iter().skip(1).all(|p| p.power == 0.0));
        assert_eq!(a.dl.unwrap().subcarriers[0].power, env.config().radio.max_power);

        let (id, cont) = encode_action(&ctx, cand);
        let a = planner.service_action(&ctx, id, &cont).unwrap().unwrap();
        let CandidateKind::Serve(opt) = &cand.kind else { unreachable!() };
        let got: Vec<f64> = a.ul.unwrap().subcarriers.iter().map(|p| p.power).collect();
        assert_eq!(got, opt.ul_power);
        assert!(planner.service_action(&ctx, ctx.table_len, &cont).is_err());
        assert!(planner.service_action(&ctx, 0, &cont[1..]).is_err());
    }

    #[test]
    fn malformed_actions_are_errors() {
        let mut env = Env::new(small(2)).unwrap();
        env.reset(8).unwrap();
        let n = env.pending().len();
        let mut a = EnvAction::default();
        a.placement.services.push(ServiceDecision { service: n, functions: vec![] });
        assert!(matches!(env.step(&a), Err(Error::Index { .. })));
        let mut a = EnvAction::default();
        a.placement.services.push(ServiceDecision { service: 0, functions: vec![] });
        assert!(matches!(env.step(&a), Err(Error::Shape { .. })));
        env.step(&EnvAction::default()).unwrap();
        env.step(&EnvAction::default()).unwrap();
        assert!(env.step(&EnvAction::default()).is_err());
    }
}
