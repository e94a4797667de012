use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::{demand_profile, ServiceChain, VnfType};
use crate::topology::NetworkGraph;
use crate::SPEED_OF_LIGHT;

use super::{Constraint, FeasibilityVerdict, ServiceDecision, Violation};

/// Per-function delays in seconds and the function's start time in the slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionDelay {
    pub propagation: f64,
    pub transmission: f64,
    pub processing: f64,
    pub start_time: f64,
}

impl FunctionDelay {
    pub fn total(&self) -> f64 {
        self.propagation + self.transmission + self.processing
    }
}

/// Propagation `d/c`, transmission `S/(w·η)` and processing `S·c_f/C` for
/// every function of a fully placed service carrying `payload_bits`.
pub fn vnf_delays(
    sd: &ServiceDecision,
    graph: &NetworkGraph,
    types: &[VnfType],
    chain: &ServiceChain,
    payload_bits: f64,
) -> Result<Vec<FunctionDelay>> {
    if sd.functions.len() != chain.len() {
        return Err(Error::Shape { expected: chain.len(), got: sd.functions.len() });
    }
    let mut out = Vec::with_capacity(chain.len());
    for (f, fd) in sd.functions.iter().enumerate() {
        let &l = fd
            .links
            .first()
            .ok_or_else(|| Error::Contract(format!("function {f} has no link assignment")))?;
        let &n = fd
            .nodes
            .first()
            .ok_or_else(|| Error::Contract(format!("function {f} has no node assignment")))?;
        let link = graph.links.get(l).ok_or(Error::Index {
            what: "link",
            index: l,
            len: graph.num_links(),
        })?;
        let node = graph.nodes.get(n).ok_or(Error::Index {
            what: "node",
            index: n,
            len: graph.num_nodes(),
        })?;
        let dem = demand_profile(chain, types, f, link)?;
        let c_f = types[chain.vnf_sequence[f]].cpu_per_bitrate;
        let rate = dem.bw_hz as f64 * link.spectral_efficiency;
        out.push(FunctionDelay {
            propagation: link.distance / SPEED_OF_LIGHT,
            transmission: if payload_bits <= 0.0 { 0.0 } else { payload_bits / rate },
            processing: payload_bits * c_f / node.cpu_capacity as f64,
            start_time: 0.0,
        });
    }
    Ok(out)
}

/// Relative slack on the slot budget comparison.
pub const SLOT_TOLERANCE: f64 = 1e-12;

/// Fills start times along the chain (each function starts when its
/// predecessor's processing, propagation and transmission complete) and
/// checks that every function finishes within the slot.
pub fn roll_start_times(
    delays: &mut [FunctionDelay],
    slot_len: f64,
    service: usize,
) -> FeasibilityVerdict {
    let mut v = Vec::new();
    let mut t = 0.0;
    for (f, d) in delays.iter_mut().enumerate() {
        d.start_time = t;
        let end = t + d.processing + d.transmission + d.propagation;
        if end > slot_len * (1.0 + SLOT_TOLERANCE) {
            v.push(Violation::new(Constraint::Slot13).service(service).function(f));
        }
        t = end;
    }
    FeasibilityVerdict::from_violations(v)
}

/// Start time the successor of the last function would get.
pub fn completion_time(delays: &[FunctionDelay]) -> f64 {
    delays.last().map_or(0.0, |d| d.start_time + d.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(p: f64, t: f64, q: f64) -> FunctionDelay {
        FunctionDelay { propagation: p, transmission: t, processing: q, start_time: 0.0 }
    }

    #[test]
    fn single_function_budget() {
        let mut d = vec![fd(0.1, 0.1, 0.1)];
        let v = roll_start_times(&mut d, 0.5, 0);
        assert!(v.ok);
        assert!((completion_time(&d) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_delays() {
        let mut d = vec![fd(0.0, 0.0, 0.0); 3];
        assert!(roll_start_times(&mut d, 0.5, 0).ok);
        assert!(d.iter().all(|x| x.start_time == 0.0));
    }

    #[test]
    fn boundary_and_overflow() {
        let mut d = vec![fd(0.0, 0.25, 0.0), fd(0.0, 0.25, 0.0)];
        assert!(roll_start_times(&mut d, 0.5, 0).ok);
        assert_eq!(d[1].start_time, 0.25);
        let mut d = vec![fd(0.0, 0.25, 0.0), fd(0.0, 0.3, 0.0)];
        let v = roll_start_times(&mut d, 0.5, 4);
        assert_eq!(v.violations, vec![Violation::new(Constraint::Slot13).service(4).function(1)]);
    }

    #[test]
    fn vnf_delay_components() {
        use crate::topology::{NetworkGraph, NodeRole, VirtualLink, VirtualNode};
        use std::collections::BTreeSet;
        let node = |id, role| VirtualNode {
            id,
            role,
            cpu_capacity: 2_000_000_000,
            mem_capacity: 1,
            supported_vnf_types: BTreeSet::from([0]),
            position: [0.0, 0.0],
        };
        let g = NetworkGraph::new(
            1,
            vec![node(0, NodeRole::Source), node(1, NodeRole::Middle)],
            vec![VirtualLink {
                src: 0,
                dst: 1,
                bandwidth: 1_000_000_000,
                spectral_efficiency: 4.0,
                distance: 3000.0,
            }],
        )
        .unwrap();
        let types = [VnfType { id: 0, cpu_per_bitrate: 20.0, mem_per_bitrate: 1.0 }];
        let chain = ServiceChain { id: 0, vnf_sequence: vec![0], bitrate: 40_000_000 };
        let sd = ServiceDecision::from_path(0, &[0], &[0]);
        // Payload sized so that w·η·δ/2 = S: transmission equals δ/2.
        let slot = 0.5;
        let payload = 40e6 * slot / 2.0;
        let d = vnf_delays(&sd, &g, &types, &chain, payload).unwrap();
        assert!((d[0].propagation - 3000.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        assert!((d[0].propagation - 1.0e-5).abs() < 1e-7);
        assert!((d[0].transmission - slot / 2.0).abs() < 1e-15);
        assert!((d[0].processing - payload * 20.0 / 2e9).abs() < 1e-15);

        let mut fast = g.clone();
        fast.nodes[0].cpu_capacity = u64::MAX;
        let d = vnf_delays(&sd, &fast, &types, &chain, payload).unwrap();
        assert!(d[0].processing < 1e-10);

        let missing = ServiceDecision { service: 0, functions: vec![Default::default()] };
        assert!(vnf_delays(&missing, &g, &types, &chain, payload).is_err());
    }
}
