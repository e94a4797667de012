use serde::{Deserialize, Serialize};

use crate::aoi::AoiCaps;
use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::service::{ArrivalSpec, CatalogSpec};
use crate::topology::TopologySpec;

/// Weights of the objective: ξ on the average AoI, ξ₁..ξ₄ on forwarding,
/// execution, uplink and downlink cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub aoi: f64,
    pub forwarding: f64,
    pub execution: f64,
    pub uplink: f64,
    pub downlink: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { aoi: 1.0, forwarding: 1.0, execution: 1.0, uplink: 1.0, downlink: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    /// Uniform range of every per-element cost coefficient.
    pub range: [f64; 2],
    pub weights: Weights,
    /// Subcarrier bandwidth is charged in multiples of this many Hz.
    pub bandwidth_unit: f64,
    pub seed: u64,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec { range: [0.5, 1.5], weights: Weights::default(), bandwidth_unit: 1e6, seed: 13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandidateSpec {
    /// Paths kept per decision.
    pub paths: usize,
    /// Largest subcarrier subset per access hop.
    pub max_subcarriers: usize,
    /// Bound on search frontier pops per path ranking.
    pub search_limit: usize,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        CandidateSpec { paths: 8, max_subcarriers: 3, search_limit: 20_000 }
    }
}

impl CandidateSpec {
    /// Reject plus every (path, subset size) pair.
    pub fn max_candidates(&self) -> usize {
        1 + self.paths * self.max_subcarriers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub topology: TopologySpec,
    pub catalog: CatalogSpec,
    pub arrivals: ArrivalSpec,
    pub radio: RadioConfig,
    pub cost: CostSpec,
    pub candidates: CandidateSpec,
    /// Slot length δ in seconds.
    pub slot_len: f64,
    /// Per-update payload as a fraction of R̄·δ bits.
    pub payload_fraction: f64,
    /// AoI caps in slots.
    pub source_cap_slots: f64,
    pub node_cap_slots: f64,
    pub user_cap_slots: f64,
    /// Finite stand-in for the infeasibility reward.
    pub penalty: f64,
    /// Extra slots a rejected request may retry before it is dropped.
    pub retry_window: u32,
    /// Pending-request bitrate slots in the observation.
    pub pending_slots: usize,
    pub steps_per_episode: u64,
    /// Seed of the device and user positions.
    pub geometry_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            topology: TopologySpec::default(),
            catalog: CatalogSpec::default(),
            arrivals: ArrivalSpec::default(),
            radio: RadioConfig::default(),
            cost: CostSpec::default(),
            candidates: CandidateSpec::default(),
            slot_len: 0.5,
            payload_fraction: 0.05,
            source_cap_slots: 50.0,
            node_cap_slots: 50.0,
            user_cap_slots: 50.0,
            penalty: 1e4,
            retry_window: 3,
            pending_slots: 16,
            steps_per_episode: 200,
            geometry_seed: 17,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if !(self.slot_len > 0.0 && self.slot_len.is_finite()) {
            return Err(Error::Config("slot length must be positive".into()));
        }
        if !(self.payload_fraction >= 0.0 && self.payload_fraction.is_finite()) {
            return Err(Error::Config("payload fraction must be >= 0".into()));
        }
        for c in [self.source_cap_slots, self.node_cap_slots, self.user_cap_slots] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config("AoI caps must be positive".into()));
            }
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config("penalty must be positive and finite".into()));
        }
        let [c0, c1] = self.cost.range;
        if !(c0 >= 0.0 && c0 <= c1 && c1.is_finite()) || !(self.cost.bandwidth_unit > 0.0) {
            return Err(Error::Config("cost range invalid".into()));
        }
        let w = self.cost.weights;
        if [w.aoi, w.forwarding, w.execution, w.uplink, w.downlink].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        if self.candidates.paths == 0 || self.candidates.max_subcarriers == 0 {
            return Err(Error::Config("candidate set needs paths and subcarriers".into()));
        }
        if self.arrivals.rate > 0.0 && (self.radio.ul_subcarriers == 0 || self.radio.dl_subcarriers == 0) {
            return Err(Error::Config("arrivals need uplink and downlink subcarriers".into()));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::Config("episodes need at least one step".into()));
        }
        Ok(())
    }

    pub fn caps(&self) -> AoiCaps {
        AoiCaps {
            source: self.source_cap_slots * self.slot_len,
            node: self.node_cap_slots * self.slot_len,
            user: self.user_cap_slots * self.slot_len,
        }
    }

    /// Bits per update of a service with bitrate `bitrate`.
    pub fn payload_bits(&self, bitrate: u64) -> f64 {
        self.payload_fraction * bitrate as f64 * self.slot_len
    }
}
