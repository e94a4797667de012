use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::radio::{LinkAllocation, RadioGeometry};
use crate::topology::NetworkGraph;
use crate::util::rng_for;

use super::config::{CostSpec, Weights};

/// Per-element cost coefficients, fixed for a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// β per link.
    pub link_cost: Vec<f64>,
    /// α per node.
    pub proc_cost: Vec<f64>,
    /// ζ per (source index, UL subcarrier).
    pub ul_cost: Vec<Vec<f64>>,
    /// ζ per (destination index, DL subcarrier).
    pub dl_cost: Vec<Vec<f64>>,
    pub weights: Weights,
    pub bandwidth_unit: f64,
}

impl CostModel {
    pub fn generate(spec: &CostSpec, graph: &NetworkGraph, geo: &RadioGeometry, ul: usize, dl: usize) -> Self {
        let mut rng = rng_for(spec.seed, &[0xc0_57]);
        let [a, b] = spec.range;
        let mut draw = move || if a == b { a } else { rng.random_range(a..b) };
        let link_cost = (0..graph.num_links()).map(|_| draw()).collect();
        let proc_cost = (0..graph.num_nodes()).map(|_| draw()).collect();
        let ul_cost = geo.sources.iter().map(|_| (0..ul).map(|_| draw()).collect()).collect();
        let dl_cost = geo.destinations.iter().map(|_| (0..dl).map(|_| draw()).collect()).collect();
        CostModel {
            link_cost,
            proc_cost,
            ul_cost,
            dl_cost,
            weights: spec.weights,
            bandwidth_unit: spec.bandwidth_unit,
        }
    }

    /// Σ ζ·(w + p) over the subcarriers of one access hop.
    pub fn radio_cost(&self, alloc: &LinkAllocation, geo: &RadioGeometry, sub_bw: f64) -> f64 {
        let row = match alloc.direction {
            crate::radio::Direction::Ul => geo.source_index(alloc.rx).and_then(|i| self.ul_cost.get(i)),
            crate::radio::Direction::Dl => geo.destination_index(alloc.tx).and_then(|i| self.dl_cost.get(i)),
        };
        let Some(row) = row else { return 0.0 };
        alloc
            .subcarriers
            .iter()
            .map(|sp| row.get(sp.index).copied().unwrap_or(0.0) * (sub_bw / self.bandwidth_unit + sp.power))
            .sum()
    }
}
