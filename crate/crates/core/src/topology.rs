//! Directed virtual network with per-node and per-link capacities.
//!
//! Nodes are split into source, middle and destination roles. Links only run
//! source→middle, middle→middle and middle→destination, so every service path
//! enters at a source node and leaves through a destination node.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Source,
    Middle,
    Destination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualNode {
    pub id: usize,
    pub role: NodeRole,
    /// Cycles per second.
    pub cpu_capacity: u64,
    /// Bytes.
    pub mem_capacity: u64,
    pub supported_vnf_types: BTreeSet<usize>,
    /// Position in meters inside the deployment area.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualLink {
    pub src: usize,
    pub dst: usize,
    /// Hz.
    pub bandwidth: u64,
    /// bits/s/Hz.
    pub spectral_efficiency: f64,
    /// Meters.
    pub distance: f64,
}

/// Descriptor used to generate a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySpec {
    pub sources: usize,
    pub middles: usize,
    pub destinations: usize,
    /// Number of links to sample; `None` keeps every allowed pair.
    pub links: Option<usize>,
    pub cpu_range: [u64; 2],
    pub mem_range: [u64; 2],
    pub bandwidth_range: [u64; 2],
    pub spectral_efficiency_range: [f64; 2],
    pub num_vnf_types: usize,
    /// Probability that a source or middle node supports a given VNF type.
    pub support_probability: f64,
    /// Side of the square deployment area in meters.
    pub area: f64,
    pub seed: u64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec {
            sources: 5,
            middles: 15,
            destinations: 5,
            links: Some(135),
            cpu_range: [1_000_000_000, 2_000_000_000],
            mem_range: [50_000_000_000, 100_000_000_000],
            bandwidth_range: [100_000_000, 1_000_000_000],
            spectral_efficiency_range: [2.0, 6.0],
            num_vnf_types: 8,
            support_probability: 0.8,
            area: 1000.0,
            seed: 7,
        }
    }
}

impl TopologySpec {
    /// The four reference sizes: scale 1..=4 gives 25/50/75/100 nodes.
    pub fn reference(scale: usize, seed: u64) -> Result<Self> {
        if !(1..=4).contains(&scale) {
            return Err(Error::Config(format!("reference scale {scale} not in 1..=4")));
        }
        Ok(TopologySpec {
            sources: 5 * scale,
            middles: 15 * scale,
            destinations: 5 * scale,
            links: Some(135 * scale),
            seed,
            ..TopologySpec::default()
        })
    }

    /// Number of ordered pairs a link may connect.
    pub fn allowed_pairs(&self) -> usize {
        let (s, m, d) = (self.sources, self.middles, self.destinations);
        s * m + m * m.saturating_sub(1) + m * d
    }

    fn check(&self) -> Result<()> {
        if self.sources == 0 || self.middles == 0 || self.destinations == 0 {
            return Err(Error::Topology("every role needs at least one node".into()));
        }
        let range_ok = |r: [u64; 2]| r[0] > 0 && r[0] <= r[1];
        if !range_ok(self.cpu_range) || !range_ok(self.mem_range) || !range_ok(self.bandwidth_range)
        {
            return Err(Error::Topology("capacity ranges must be positive and ordered".into()));
        }
        let [e0, e1] = self.spectral_efficiency_range;
        if !(e0 > 0.0 && e0 <= e1 && e1.is_finite()) {
            return Err(Error::Topology("spectral efficiency range invalid".into()));
        }
        if !(0.0..=1.0).contains(&self.support_probability) {
            return Err(Error::Topology("support probability outside [0, 1]".into()));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::Topology("area must be positive".into()));
        }
        if let Some(l) = self.links {
            let allowed = self.allowed_pairs();
            if l == 0 || l > allowed {
                return Err(Error::Topology(format!(
                    "link count {l} incompatible with role counts ({allowed} allowed pairs)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGraph {
    pub num_vnf_types: usize,
    pub nodes: Vec<VirtualNode>,
    pub links: Vec<VirtualLink>,
    /// `vnf_support[f]` lists the nodes able to run type `f`, ascending.
    #[serde(default)]
    pub vnf_support: Vec<Vec<usize>>,
}

fn uniform_u64<R: Rng>(rng: &mut R, r: [u64; 2]) -> u64 {
    rng.random_range(r[0]..=r[1])
}

fn uniform_f64<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Generates a topology deterministically from its descriptor.
pub fn build_topology(spec: &TopologySpec) -> Result<NetworkGraph> {
    spec.check()?;
    let mut rng = rng_for(spec.seed, &[0x70_70]);
    let n = spec.sources + spec.middles + spec.destinations;
    let roles: Vec<NodeRole> = (0..n)
        .map(|i| {
            if i < spec.sources {
                NodeRole::Source
            } else if i < spec.sources + spec.middles {
                NodeRole::Middle
            } else {
                NodeRole::Destination
            }
        })
        .collect();

    // Jittered grid: one cell per node.
    let side = (n as f64).sqrt().ceil() as usize;
    let cell = spec.area / side as f64;
    let mut nodes = Vec::with_capacity(n);
    for (id, &role) in roles.iter().enumerate() {
        let (gx, gy) = (id % side, id / side);
        let position = [
            (gx as f64 + rng.random_range(0.25..0.75)) * cell,
            (gy as f64 + rng.random_range(0.25..0.75)) * cell,
        ];
        let cpu_capacity = uniform_u64(&mut rng, spec.cpu_range);
        let mem_capacity = uniform_u64(&mut rng, spec.mem_range);
        let mut supported_vnf_types = BTreeSet::new();
        if role != NodeRole::Destination {
            for f in 0..spec.num_vnf_types {
                if rng.random_bool(spec.support_probability) {
                    supported_vnf_types.insert(f);
                }
            }
        }
        nodes.push(VirtualNode {
            id,
            role,
            cpu_capacity,
            mem_capacity,
            supported_vnf_types,
            position,
        });
    }

    let mut pairs = Vec::with_capacity(spec.allowed_pairs());
    for a in 0..n {
        for b in 0..n {
            if a != b && link_allowed(roles[a], roles[b]) {
                pairs.push((a, b));
            }
        }
    }
    let chosen: Vec<usize> = match spec.links {
        None => (0..pairs.len()).collect(),
        Some(l) => {
            let mut idx = sample(&mut rng, pairs.len(), l).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let mut links = Vec::with_capacity(chosen.len());
    for i in chosen {
        let (src, dst) = pairs[i];
        let bandwidth = uniform_u64(&mut rng, spec.bandwidth_range);
        let spectral_efficiency = uniform_f64(&mut rng, spec.spectral_efficiency_range);
        links.push(VirtualLink {
            src,
            dst,
            bandwidth,
            spectral_efficiency,
            distance: euclid(nodes[src].position, nodes[dst].position),
        });
    }
    NetworkGraph::new(spec.num_vnf_types, nodes, links)
}

pub fn link_allowed(src: NodeRole, dst: NodeRole) -> bool {
    matches!(
        (src, dst),
        (NodeRole::Source, NodeRole::Middle)
            | (NodeRole::Middle, NodeRole::Middle)
            | (NodeRole::Middle, NodeRole::Destination)
    )
}

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl NetworkGraph {
    /// Assembles a graph from parts, checking every structural invariant and
    /// deriving the support map.
    pub fn new(num_vnf_types: usize, nodes: Vec<VirtualNode>, links: Vec<VirtualLink>) -> Result<Self> {
        let mut g = NetworkGraph {
            num_vnf_types,
            nodes,
            links,
            vnf_support: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks invariants and recomputes `vnf_support` from the nodes.
    pub fn validate(&mut self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Topology(format!("node at index {i} has id {}", node.id)));
            }
            if node.cpu_capacity == 0 || node.mem_capacity == 0 {
                return Err(Error::Topology(format!("node {i} has zero capacity")));
            }
            if let Some(&f) = node.supported_vnf_types.iter().find(|&&f| f >= self.num_vnf_types) {
                return Err(Error::Topology(format!("node {i} supports unknown VNF type {f}")));
            }
        }
        let n = self.nodes.len();
        let mut seen = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            if l.src >= n || l.dst >= n {
                return Err(Error::Topology(format!("link {i} references a missing node")));
            }
            if l.src == l.dst {
                return Err(Error::Topology(format!("link {i} is a self loop")));
            }
            if !link_allowed(self.nodes[l.src].role, self.nodes[l.dst].role) {
                return Err(Error::Topology(format!("link {i} violates role direction")));
            }
            if l.bandwidth == 0 || !(l.spectral_efficiency > 0.0) || !(l.distance >= 0.0) {
                return Err(Error::Topology(format!("link {i} has invalid parameters")));
            }
            if !seen.insert((l.src, l.dst)) {
                return Err(Error::Topology(format!("link {i} duplicates ({}, {})", l.src, l.dst)));
            }
        }
        let mut support = vec![Vec::new(); self.num_vnf_types];
        for node in &self.nodes {
            for &f in &node.supported_vnf_types {
                support[f].push(node.id);
            }
        }
        self.vnf_support = support;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    /// Nodes able to run `f`, ascending. The flag is `true` when `f` is not a
    /// registered type, in which case the set is empty.
    pub fn nodes_supporting(&self, f: usize) -> (Vec<usize>, bool) {
        match self.vnf_support.get(f) {
            Some(s) => (s.clone(), false),
            None => (Vec::new(), true),
        }
    }

    pub fn supports(&self, node: usize, f: usize) -> bool {
        self.nodes.get(node).is_some_and(|n| n.supported_vnf_types.contains(&f))
    }

    /// Outgoing link indices per node.
    pub fn out_links(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, l) in self.links.iter().enumerate() {
            out[l.src].push(i);
        }
        out
    }

    pub fn find_link(&self, src: usize, dst: usize) -> Option<usize> {
        self.links.iter().position(|l| l.src == src && l.dst == dst)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut g: NetworkGraph = toml::from_str(text)?;
        g.validate()?;
        Ok(g)
    }
}
