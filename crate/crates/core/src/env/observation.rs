use serde::{Deserialize, Serialize};

use crate::nfv::ResourceLedger;
use crate::radio::ChannelState;

/// Offsets of each block in the flattened observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub links: usize,
    pub nodes: usize,
    pub devices: usize,
    pub sources: usize,
    pub ul_subcarriers: usize,
    pub destinations: usize,
    pub users: usize,
    pub dl_subcarriers: usize,
    pub pending_slots: usize,
}

impl ObsLayout {
    pub fn link_bw(&self) -> usize {
        0
    }

    pub fn node_mem(&self) -> usize {
        self.links
    }

    pub fn node_cpu(&self) -> usize {
        self.links + self.nodes
    }

    pub fn ul_gains(&self) -> usize {
        self.links + 2 * self.nodes
    }

    pub fn dl_gains(&self) -> usize {
        self.ul_gains() + self.devices * self.sources * self.ul_subcarriers
    }

    pub fn pending(&self) -> usize {
        self.dl_gains() + self.destinations * self.users * self.dl_subcarriers
    }

    pub fn len(&self) -> usize {
        self.pending() + self.pending_slots
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bitrate normalizer for the pending-request block.
pub const BITRATE_SCALE: f64 = 100e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: Vec<f64>,
    pub layout: ObsLayout,
}

fn ratio(r: u64, c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        r as f64 / c as f64
    }
}

pub fn build_observation(
    layout: ObsLayout,
    ledger: &ResourceLedger,
    channel: &ChannelState,
    pending_bitrates: &[u64],
) -> Observation {
    let mut v = Vec::with_capacity(layout.len());
    v.extend(ledger.link_bw.iter().zip(&ledger.cap_link_bw).map(|(r, c)| ratio(*r, *c)));
    v.extend(ledger.node_mem.iter().zip(&ledger.cap_node_mem).map(|(r, c)| ratio(*r, *c)));
    v.extend(ledger.node_cpu.iter().zip(&ledger.cap_node_cpu).map(|(r, c)| ratio(*r, *c)));
    let mu = channel.max_ul();
    v.extend(channel.ul.iter().map(|g| if mu > 0.0 { g / mu } else { 0.0 }));
    let md = channel.max_dl();
    v.extend(channel.dl.iter().map(|g| if md > 0.0 { g / md } else { 0.0 }));
    for i in 0..layout.pending_slots {
        v.push(pending_bitrates.get(i).map_or(0.0, |b| *b as f64 / BITRATE_SCALE));
    }
    debug_assert_eq!(v.len(), layout.len());
    Observation { values: v, layout }
}

/// Overwrites the resource blocks in place from a (tentative) ledger.
pub fn refresh_resources(values: &mut [f64], layout: &ObsLayout, ledger: &ResourceLedger) {
    for (i, (r, c)) in ledger.link_bw.iter().zip(&ledger.cap_link_bw).enumerate() {
        values[layout.link_bw() + i] = ratio(*r, *c);
    }
    for (i, (r, c)) in ledger.node_mem.iter().zip(&ledger.cap_node_mem).enumerate() {
        values[layout.node_mem() + i] = ratio(*r, *c);
    }
    for (i, (r, c)) in ledger.node_cpu.iter().zip(&ledger.cap_node_cpu).enumerate() {
        values[layout.node_cpu() + i] = ratio(*r, *c);
    }
}
