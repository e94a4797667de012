//! k-best search for service paths: the first function runs on a source
//! node, each later function on a distinct middle node, and the last link
//! enters a destination node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::nfv::{ResourceLedger, SLOT_TOLERANCE};
use crate::service::{demand_profile, node_demand, ServiceChain, VnfType};
use crate::topology::{NetworkGraph, NodeRole};
use crate::SPEED_OF_LIGHT;

use super::cost::CostModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathInfo {
    /// Host of each function, in chain order.
    pub nodes: Vec<usize>,
    /// Outgoing link of each function.
    pub links: Vec<usize>,
    pub destination: usize,
    /// Σ of processing, propagation and transmission delays, seconds.
    pub latency: f64,
    /// Σ of weighted forwarding and execution cost per slot.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Latency,
    Cost,
}

pub struct PathQuery<'a> {
    pub graph: &'a NetworkGraph,
    pub out_links: &'a [Vec<usize>],
    pub types: &'a [VnfType],
    pub chain: &'a ServiceChain,
    pub ledger: &'a ResourceLedger,
    pub costs: &'a CostModel,
    pub payload_bits: f64,
    pub slot_len: f64,
    pub limit: usize,
}

struct Item {
    key: f64,
    seq: u64,
    latency: f64,
    cost: f64,
    nodes: Vec<usize>,
    links: Vec<usize>,
    destination: Option<usize>,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    // Min-heap on (key, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PathQuery<'_> {
    fn processing(&self, f: usize, node: usize) -> f64 {
        let c_f = self.types[self.chain.vnf_sequence[f]].cpu_per_bitrate;
        self.payload_bits * c_f / self.graph.nodes[node].cpu_capacity as f64
    }

    fn link_delay(&self, f: usize, l: usize) -> Option<(f64, u64)> {
        let link = &self.graph.links[l];
        let dem = demand_profile(self.chain, self.types, f, link).ok()?;
        let tx = if self.payload_bits <= 0.0 {
            0.0
        } else {
            self.payload_bits / (dem.bw_hz as f64 * link.spectral_efficiency)
        };
        Some((link.distance / SPEED_OF_LIGHT + tx, dem.bw_hz))
    }

    fn node_fits(&self, f: usize, n: usize) -> bool {
        let Some(&ty) = self.chain.vnf_sequence.get(f) else { return false };
        if !self.graph.supports(n, ty) {
            return false;
        }
        match node_demand(self.chain, self.types, f) {
            Ok((c, b)) => c <= self.ledger.node_cpu[n] && b <= self.ledger.node_mem[n],
            Err(_) => false,
        }
    }

    /// Up to `k` paths in ascending order of the chosen score.
    pub fn k_best(&self, rank: Rank, k: usize) -> Vec<PathInfo> {
        let f_len = self.chain.len();
        if f_len == 0 || k == 0 {
            return Vec::new();
        }
        let w = &self.costs.weights;
        let budget = self.slot_len * (1.0 + SLOT_TOLERANCE);
        // Admissible per-step lower bounds for the heuristic.
        let c_max = self.graph.nodes.iter().map(|n| n.cpu_capacity).max().unwrap_or(1) as f64;
        let r = self.chain.bitrate as f64;
        let max_rate = self
            .graph
            .links
            .iter()
            .map(|l| (r / l.spectral_efficiency).ceil() * l.spectral_efficiency)
            .fold(0.0, f64::max);
        let tx_lb = if self.payload_bits <= 0.0 || max_rate <= 0.0 { 0.0 } else { self.payload_bits / max_rate };
        let mut proc_lb_suffix = vec![0.0; f_len + 1];
        for f in (0..f_len).rev() {
            let c_f = self.types[self.chain.vnf_sequence[f]].cpu_per_bitrate;
            proc_lb_suffix[f] = proc_lb_suffix[f + 1] + self.payload_bits * c_f / c_max;
        }
        let beta_min = self.costs.link_cost.iter().copied().fold(f64::INFINITY, f64::min);
        let alpha_min = self.costs.proc_cost.iter().copied().fold(f64::INFINITY, f64::min);
        let beta_min = if beta_min.is_finite() { beta_min } else { 0.0 };
        let alpha_min = if alpha_min.is_finite() { alpha_min } else { 0.0 };
        // Heuristics for a partial path with `j` placed nodes and `j - 1` links.
        let lat_h = |j: usize| proc_lb_suffix[j] + (f_len - j + 1) as f64 * tx_lb;
        let cost_h = |j: usize| {
            (f_len - j) as f64 * w.execution * alpha_min + (f_len - j + 1) as f64 * w.forwarding * beta_min
        };
        let key = |lat: f64, cost: f64, j: usize, done: bool| match (rank, done) {
            (Rank::Latency, true) => lat,
            (Rank::Cost, true) => cost,
            (Rank::Latency, false) => lat + lat_h(j),
            (Rank::Cost, false) => cost + cost_h(j),
        };

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        for n in 0..self.graph.num_nodes() {
            if self.graph.nodes[n].role != NodeRole::Source || !self.node_fits(0, n) {
                continue;
            }
            let lat = self.processing(0, n);
            let cost = w.execution * self.costs.proc_cost[n];
            if lat + lat_h(1) > budget {
                continue;
            }
            heap.push(Item {
                key: key(lat, cost, 1, false),
                seq,
                latency: lat,
                cost,
                nodes: vec![n],
                links: vec![],
                destination: None,
            });
            seq += 1;
        }
        let mut out = Vec::new();
        let mut pops = 0usize;
        while let Some(item) = heap.pop() {
            pops += 1;
            if pops > self.limit {
                break;
            }
            if let Some(destination) = item.destination {
                out.push(PathInfo {
                    nodes: item.nodes,
                    links: item.links,
                    destination,
                    latency: item.latency,
                    cost: item.cost,
                });
                if out.len() == k {
                    break;
                }
                continue;
            }
            let j = item.nodes.len();
            let last = *item.nodes.last().expect("partial path has a node");
            let f = j - 1;
            for &l in &self.out_links[last] {
                let dst = self.graph.links[l].dst;
                let Some((ld, bw)) = self.link_delay(f, l) else { continue };
                if bw > self.ledger.link_bw[l] {
                    continue;
                }
                let link_cost = w.forwarding * self.costs.link_cost[l];
                let role = self.graph.nodes[dst].role;
                if j == f_len {
                    if role != NodeRole::Destination {
                        continue;
                    }
                    let lat = item.latency + ld;
                    if lat > budget {
                        continue;
                    }
                    let cost = item.cost + link_cost;
                    let mut links = item.links.clone();
                    links.push(l);
                    heap.push(Item {
                        key: key(lat, cost, j, true),
                        seq,
                        latency: lat,
                        cost,
                        nodes: item.nodes.clone(),
                        links,
                        destination: Some(dst),
                    });
                    seq += 1;
                } else {
                    if role != NodeRole::Middle || item.nodes.contains(&dst) || !self.node_fits(j, dst) {
                        continue;
                    }
                    let lat = item.latency + ld + self.processing(j, dst);
                    if lat + lat_h(j + 1) > budget {
                        continue;
                    }
                    let cost = item.cost + link_cost + w.execution * self.costs.proc_cost[dst];
                    let mut nodes = item.nodes.clone();
                    nodes.push(dst);
                    let mut links = item.links.clone();
                    links.push(l);
                    heap.push(Item {
                        key: key(lat, cost, j + 1, false),
                        seq,
                        latency: lat,
                        cost,
                        nodes,
                        links,
                        destination: None,
                    });
                    seq += 1;
                }
            }
        }
        out
    }

    /// Alternating merge of the latency and cost rankings, deduplicated and
    /// capped at `k`.
    pub fn merged(&self, k: usize) -> Vec<PathInfo> {
        let by_lat = self.k_best(Rank::Latency, k);
        let by_cost = self.k_best(Rank::Cost, k);
        let mut out: Vec<PathInfo> = Vec::with_capacity(k);
        let mut i = 0;
        while out.len() < k && (i < by_lat.len() || i < by_cost.len()) {
            for list in [&by_lat, &by_cost] {
                if let Some(p) = list.get(i) {
                    if out.len() < k && !out.iter().any(|q| q.links == p.links) {
                        out.push(p.clone());
                    }
                }
            }
            i += 1;
        }
        out
    }
}
