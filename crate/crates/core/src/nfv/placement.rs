use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::{demand_profile, node_demand, ServiceChain, VnfType};
use crate::topology::{NetworkGraph, NodeRole};

use super::ResourceLedger;

/// Nodes (`v = 1`) and outgoing links (`u = 1`) chosen for one function.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecision {
    pub nodes: Vec<usize>,
    pub links: Vec<usize>,
}

/// Decision for one service; `service` indexes the chain list handed to the
/// validator and `functions` has one entry per chain function.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDecision {
    pub service: usize,
    pub functions: Vec<FunctionDecision>,
}

impl ServiceDecision {
    /// Sparse view of a simple path: function `f` on `nodes[f]`, leaving on
    /// `links[f]`.
    pub fn from_path(service: usize, nodes: &[usize], links: &[usize]) -> Self {
        ServiceDecision {
            service,
            functions: nodes
                .iter()
                .zip(links)
                .map(|(&n, &l)| FunctionDecision { nodes: vec![n], links: vec![l] })
                .collect(),
        }
    }

    pub fn claimed(&self) -> bool {
        self.functions.iter().any(|f| !f.nodes.is_empty() || !f.links.is_empty())
    }

    /// Σ_f Σ_n v.
    pub fn assigned_nodes(&self) -> usize {
        self.functions.iter().map(|f| f.nodes.len()).sum()
    }

    /// Σ_f Σ_links u.
    pub fn assigned_links(&self) -> usize {
        self.functions.iter().map(|f| f.links.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub services: Vec<ServiceDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    #[serde(rename = "QOS-1")]
    Qos1,
    #[serde(rename = "BW-2")]
    Bw2,
    #[serde(rename = "MEM-4")]
    Mem4,
    #[serde(rename = "CPU-6")]
    Cpu6,
    #[serde(rename = "SUPPORT-8")]
    Support8,
    #[serde(rename = "ONELINK-9")]
    OneLink9,
    #[serde(rename = "ONENODE-9b")]
    OneNode9b,
    #[serde(rename = "FLOW-10")]
    Flow10,
    #[serde(rename = "ROUTE-11")]
    Route11,
    #[serde(rename = "SLOT-13")]
    Slot13,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::Qos1 => "QOS-1",
            Constraint::Bw2 => "BW-2",
            Constraint::Mem4 => "MEM-4",
            Constraint::Cpu6 => "CPU-6",
            Constraint::Support8 => "SUPPORT-8",
            Constraint::OneLink9 => "ONELINK-9",
            Constraint::OneNode9b => "ONENODE-9b",
            Constraint::Flow10 => "FLOW-10",
            Constraint::Route11 => "ROUTE-11",
            Constraint::Slot13 => "SLOT-13",
        };
        f.write_str(s)
    }
}

/// One violated constraint with the indices that identify it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub service: Option<usize>,
    pub function: Option<usize>,
    pub node: Option<usize>,
    pub link: Option<usize>,
}

impl Violation {
    pub fn new(constraint: Constraint) -> Self {
        Violation { constraint, service: None, function: None, node: None, link: None }
    }

    pub fn service(mut self, s: usize) -> Self {
        self.service = Some(s);
        self
    }

    pub fn function(mut self, f: usize) -> Self {
        self.function = Some(f);
        self
    }

    pub fn node(mut self, n: usize) -> Self {
        self.node = Some(n);
        self
    }

    pub fn link(mut self, l: usize) -> Self {
        self.link = Some(l);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityVerdict {
    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort();
        violations.dedup();
        FeasibilityVerdict { ok: violations.is_empty(), violations }
    }

    pub fn merge(mut self, other: FeasibilityVerdict) -> Self {
        self.violations.extend(other.violations);
        Self::from_violations(self.violations)
    }
}

fn check_indices(d: &PlacementDecision, graph: &NetworkGraph, chains: &[ServiceChain]) -> Result<()> {
    for sd in &d.services {
        let chain = chains.get(sd.service).ok_or(Error::Index {
            what: "service",
            index: sd.service,
            len: chains.len(),
        })?;
        if sd.functions.len() != chain.len() {
            return Err(Error::Shape { expected: chain.len(), got: sd.functions.len() });
        }
        for fd in &sd.functions {
            let mut seen = BTreeSet::new();
            for &n in &fd.nodes {
                if n >= graph.num_nodes() {
                    return Err(Error::Index { what: "node", index: n, len: graph.num_nodes() });
                }
                if !seen.insert(n) {
                    return Err(Error::Contract(format!("node {n} listed twice for one function")));
                }
            }
            let mut seen = BTreeSet::new();
            for &l in &fd.links {
                if l >= graph.num_links() {
                    return Err(Error::Index { what: "link", index: l, len: graph.num_links() });
                }
                if !seen.insert(l) {
                    return Err(Error::Contract(format!("link {l} listed twice for one function")));
                }
            }
        }
    }
    Ok(())
}

/// Checks a placement against every structural and resource constraint.
/// Infeasibility is reported in the verdict; only out-of-range indices or
/// shape mismatches produce an error.
pub fn validate_placement(
    d: &PlacementDecision,
    ledger: &ResourceLedger,
    graph: &NetworkGraph,
    types: &[VnfType],
    chains: &[ServiceChain],
) -> Result<FeasibilityVerdict> {
    check_indices(d, graph, chains)?;
    use Constraint::*;
    let mut v = Vec::new();
    let mut bw: BTreeMap<usize, u64> = BTreeMap::new();
    let mut mem: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cpu: BTreeMap<usize, u64> = BTreeMap::new();

    for sd in &d.services {
        let s = sd.service;
        let chain = &chains[s];
        let claimed = sd.claimed();
        let mut net: BTreeMap<usize, i64> = BTreeMap::new();
        for (f, fd) in sd.functions.iter().enumerate() {
            let ty = chain.vnf_sequence[f];
            for &n in &fd.nodes {
                if !graph.supports(n, ty) {
                    v.push(Violation::new(Support8).service(s).function(f).node(n));
                }
                let (c, b) = node_demand(chain, types, f)?;
                *cpu.entry(n).or_default() += c;
                *mem.entry(n).or_default() += b;
                if !fd.links.iter().any(|&l| graph.links[l].src == n) {
                    v.push(Violation::new(Route11).service(s).function(f).node(n));
                }
            }
            let mut carried = 0.0;
            for &l in &fd.links {
                let link = &graph.links[l];
                if !graph.supports(link.src, ty) {
                    v.push(Violation::new(Support8).service(s).function(f).link(l));
                }
                let dem = demand_profile(chain, types, f, link)?;
                *bw.entry(l).or_default() += dem.bw_hz;
                carried += dem.bw_hz as f64 * link.spectral_efficiency;
                *net.entry(link.src).or_default() += 1;
                *net.entry(link.dst).or_default() -= 1;
                if let Some(next) = sd.functions.get(f + 1) {
                    if !next.nodes.is_empty() && !next.nodes.contains(&link.dst) {
                        v.push(Violation::new(Route11).service(s).function(f).link(l));
                    }
                }
            }
            if fd.nodes.len() > 1 {
                v.push(Violation::new(OneNode9b).service(s).function(f));
            }
            if claimed {
                if fd.links.len() != 1 {
                    v.push(Violation::new(OneLink9).service(s).function(f));
                }
                if fd.nodes.is_empty() || carried < chain.bitrate as f64 {
                    v.push(Violation::new(Qos1).service(s).function(f));
                }
            }
        }
        if claimed {
            let mut source_sum = 0i64;
            for (&n, &x) in &net {
                let ok = match graph.nodes[n].role {
                    NodeRole::Source => {
                        source_sum += x;
                        x == 0 || x == 1
                    }
                    NodeRole::Middle => x == 0,
                    NodeRole::Destination => x == 0 || x == -1,
                };
                if !ok {
                    v.push(Violation::new(Flow10).service(s).node(n));
                }
            }
            if source_sum != 1 {
                v.push(Violation::new(Flow10).service(s));
            }
        }
    }
    for (&l, &used) in &bw {
        if used > ledger.link_bw[l] {
            v.push(Violation::new(Bw2).link(l));
        }
    }
    for (&n, &used) in &mem {
        if used > ledger.node_mem[n] {
            v.push(Violation::new(Mem4).node(n));
        }
    }
    for (&n, &used) in &cpu {
        if used > ledger.node_cpu[n] {
            v.push(Violation::new(Cpu6).node(n));
        }
    }
    Ok(FeasibilityVerdict::from_violations(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{VirtualLink, VirtualNode};

    /// Source 0 → middle 1 → destination 2, every node supporting type 0.
    pub(crate) fn line_graph() -> NetworkGraph {
        let node = |id, role| VirtualNode {
            id,
            role,
            cpu_capacity: 4_000_000_000,
            mem_capacity: 1_000_000_000,
            supported_vnf_types: if role == NodeRole::Destination {
                BTreeSet::new()
            } else {
                BTreeSet::from([0, 1])
            },
            position: [id as f64 * 100.0, 0.0],
        };
        let link = |src, dst| VirtualLink {
            src,
            dst,
            bandwidth: 100_000_000,
            spectral_efficiency: 5.0,
            distance: 100.0,
        };
        NetworkGraph::new(
            2,
            vec![
                node(0, NodeRole::Source),
                node(1, NodeRole::Middle),
                node(2, NodeRole::Destination),
            ],
            vec![link(0, 1), link(1, 2)],
        )
        .unwrap()
    }

    fn types() -> Vec<VnfType> {
        vec![
            VnfType { id: 0, cpu_per_bitrate: 10.0, mem_per_bitrate: 2.0 },
            VnfType { id: 1, cpu_per_bitrate: 20.0, mem_per_bitrate: 2.0 },
        ]
    }

    fn chain() -> ServiceChain {
        ServiceChain { id: 0, vnf_sequence: vec![0, 1], bitrate: 50_000_000 }
    }

    #[test]
    fn empty_decision_ok() {
        let g = line_graph();
        let l = ResourceLedger::new(&g);
        let v = validate_placement(&PlacementDecision::default(), &l, &g, &types(), &[chain()]).unwrap();
        assert!(v.ok);
        let unclaimed = PlacementDecision {
            services: vec![ServiceDecision { service: 0, functions: vec![Default::default(); 2] }],
        };
        assert!(validate_placement(&unclaimed, &l, &g, &types(), &[chain()]).unwrap().ok);
    }

    #[test]
    fn line_graph_route_ok() {
        let g = line_graph();
        let l = ResourceLedger::new(&g);
        let d = PlacementDecision { services: vec![ServiceDecision::from_path(0, &[0, 1], &[0, 1])] };
        let v = validate_placement(&d, &l, &g, &types(), &[chain()]).unwrap();
        assert!(v.ok, "{:?}", v.violations);
    }

    #[test]
    fn unsupported_node_reported() {
        let mut g = line_graph();
        g.nodes[1].supported_vnf_types.remove(&1);
        g.validate().unwrap();
        let l = ResourceLedger::new(&g);
        let d = PlacementDecision { services: vec![ServiceDecision::from_path(0, &[0, 1], &[0, 1])] };
        let v = validate_placement(&d, &l, &g, &types(), &[chain()]).unwrap();
        assert!(v.violations.contains(&Violation::new(Constraint::Support8).service(0).function(1).node(1)));
    }

    #[test]
    fn double_entry_breaks_flow() {
        let g = line_graph();
        let l = ResourceLedger::new(&g);
        // Both functions route over 0→1; node 1 is entered twice, left once less.
        let d = PlacementDecision {
            services: vec![ServiceDecision {
                service: 0,
                functions: vec![
                    FunctionDecision { nodes: vec![0], links: vec![0] },
                    FunctionDecision { nodes: vec![1], links: vec![0] },
                ],
            }],
        };
        let v = validate_placement(&d, &l, &g, &types(), &[chain()]).unwrap();
        assert!(v.violations.iter().any(|x| x.constraint == Constraint::Flow10));
    }

    #[test]
    fn resources_and_malformed() {
        let g = line_graph();
        let mut l = ResourceLedger::new(&g);
        l.node_cpu[1] = 10;
        let d = PlacementDecision { services: vec![ServiceDecision::from_path(0, &[0, 1], &[0, 1])] };
        let v = validate_placement(&d, &l, &g, &types(), &[chain()]).unwrap();
        assert_eq!(v.violations, vec![Violation::new(Constraint::Cpu6).node(1)]);
        let bad = PlacementDecision { services: vec![ServiceDecision::from_path(0, &[0, 9], &[0, 1])] };
        assert!(validate_placement(&bad, &l, &g, &types(), &[chain()]).is_err());
    }
}
