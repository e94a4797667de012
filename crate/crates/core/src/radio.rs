//! OFDMA uplink and downlink access: channel gains, Shannon rates,
//! subcarrier exclusivity, power and bandwidth budgets, access delays.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub ul_subcarriers: usize,
    pub dl_subcarriers: usize,
    /// Hz per uplink subcarrier.
    pub ul_sub_bw: f64,
    /// Hz per downlink subcarrier.
    pub dl_sub_bw: f64,
    pub ul_budget: f64,
    pub dl_budget: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Watts per transmitter.
    pub max_power: f64,
    pub pathloss_exp: f64,
    /// Unit-mean exponential small-scale fading on every gain.
    pub fading: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            ul_subcarriers: 10,
            dl_subcarriers: 10,
            ul_sub_bw: 1.5e6,
            dl_sub_bw: 1.5e6,
            ul_budget: 15e6,
            dl_budget: 15e6,
            // -170 dBm/Hz
            noise_psd: 1e-20,
            max_power: 30.0,
            pathloss_exp: 3.5,
            fading: true,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.ul_sub_bw,
            self.dl_sub_bw,
            self.ul_budget,
            self.dl_budget,
            self.noise_psd,
            self.max_power,
            self.pathloss_exp,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("radio parameters must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn subcarriers(&self, dir: Direction) -> usize {
        match dir {
            Direction::Ul => self.ul_subcarriers,
            Direction::Dl => self.dl_subcarriers,
        }
    }

    pub fn sub_bw(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Ul => self.ul_sub_bw,
            Direction::Dl => self.dl_sub_bw,
        }
    }

    pub fn budget(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Ul => self.ul_budget,
            Direction::Dl => self.dl_budget,
        }
    }

    /// Noise variance over a band of `bw` Hz.
    pub fn noise_variance(&self, bw: f64) -> f64 {
        self.noise_psd * bw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ul,
    Dl,
}

/// Positions of the radio endpoints. Source and destination nodes are keyed
/// by their graph node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioGeometry {
    pub devices: Vec<[f64; 2]>,
    pub users: Vec<[f64; 2]>,
    pub sources: Vec<(usize, [f64; 2])>,
    pub destinations: Vec<(usize, [f64; 2])>,
}

impl RadioGeometry {
    pub fn source_index(&self, node: usize) -> Option<usize> {
        self.sources.iter().position(|(id, _)| *id == node)
    }

    pub fn destination_index(&self, node: usize) -> Option<usize> {
        self.destinations.iter().position(|(id, _)| *id == node)
    }

    /// Distance between the transmitter and receiver of an access hop.
    pub fn distance(&self, dir: Direction, tx: usize, rx: usize) -> Option<f64> {
        match dir {
            Direction::Ul => {
                let d = self.devices.get(tx)?;
                let (_, s) = self.sources.get(self.source_index(rx)?)?;
                Some(crate::topology::euclid(*d, *s))
            }
            Direction::Dl => {
                let (_, s) = self.destinations.get(self.destination_index(tx)?)?;
                let u = self.users.get(rx)?;
                Some(crate::topology::euclid(*s, *u))
            }
        }
    }
}

/// Gains per (device, source node, subcarrier) and per (destination node,
/// user, subcarrier), flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub devices: usize,
    pub sources: usize,
    pub destinations: usize,
    pub users: usize,
    pub ul_subcarriers: usize,
    pub dl_subcarriers: usize,
    pub ul: Vec<f64>,
    pub dl: Vec<f64>,
}

/// Large-scale path gain with the distance clamped to at least 1 m.
pub fn path_gain(distance: f64, pathloss_exp: f64) -> f64 {
    distance.max(1.0).powf(-pathloss_exp)
}

pub fn sample_channel<R: Rng>(geo: &RadioGeometry, cfg: &RadioConfig, rng: &mut R) -> ChannelState {
    let mut draw = |d: f64| {
        let fade: f64 = if cfg.fading { rng.sample(Exp1) } else { 1.0 };
        // Exp(1) can return exactly 0 in principle; keep gains positive.
        path_gain(d, cfg.pathloss_exp) * fade.max(1e-12)
    };
    let mut ul = Vec::with_capacity(geo.devices.len() * geo.sources.len() * cfg.ul_subcarriers);
    for d in &geo.devices {
        for (_, s) in &geo.sources {
            let dist = crate::topology::euclid(*d, *s);
            for _ in 0..cfg.ul_subcarriers {
                ul.push(draw(dist));
            }
        }
    }
    let mut dl = Vec::with_capacity(geo.destinations.len() * geo.users.len() * cfg.dl_subcarriers);
    for (_, s) in &geo.destinations {
        for u in &geo.users {
            let dist = crate::topology::euclid(*s, *u);
            for _ in 0..cfg.dl_subcarriers {
                dl.push(draw(dist));
            }
        }
    }
    ChannelState {
        devices: geo.devices.len(),
        sources: geo.sources.len(),
        destinations: geo.destinations.len(),
        users: geo.users.len(),
        ul_subcarriers: cfg.ul_subcarriers,
        dl_subcarriers: cfg.dl_subcarriers,
        ul,
        dl,
    }
}

impl ChannelState {
    /// Gain of subcarrier `h` between positional endpoints: for UL `a` is the
    /// device and `b` the source index; for DL `a` is the destination index
    /// and `b` the user.
    pub fn gain(&self, dir: Direction, a: usize, b: usize, h: usize) -> Option<f64> {
        match dir {
            Direction::Ul => {
                if a >= self.devices || b >= self.sources || h >= self.ul_subcarriers {
                    return None;
                }
                self.ul.get((a * self.sources + b) * self.ul_subcarriers + h).copied()
            }
            Direction::Dl => {
                if a >= self.destinations || b >= self.users || h >= self.dl_subcarriers {
                    return None;
                }
                self.dl.get((a * self.users + b) * self.dl_subcarriers + h).copied()
            }
        }
    }

    pub fn max_ul(&self) -> f64 {
        self.ul.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dl(&self) -> f64 {
        self.dl.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierPower {
    pub index: usize,
    /// Watts.
    pub power: f64,
}

/// Subcarriers held by one service on one access hop. For UL `tx` is the
/// device and `rx` the source node id; for DL `tx` is the destination node id
/// and `rx` the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAllocation {
    pub service: u64,
    pub direction: Direction,
    pub tx: usize,
    pub rx: usize,
    pub subcarriers: Vec<SubcarrierPower>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadioAllocation {
    pub links: Vec<LinkAllocation>,
}

/// Resolves the endpoints of a hop to positional channel indices.
fn channel_indices(geo: &RadioGeometry, dir: Direction, tx: usize, rx: usize) -> Option<(usize, usize)> {
    match dir {
        Direction::Ul => Some((tx, geo.source_index(rx)?)),
        Direction::Dl => Some((geo.destination_index(tx)?, rx)),
    }
}

/// Shannon rate of a single hop allocation in bits/s.
pub fn link_rate(
    link: &LinkAllocation,
    ch: &ChannelState,
    geo: &RadioGeometry,
    cfg: &RadioConfig,
) -> Result<f64> {
    let (a, b) = channel_indices(geo, link.direction, link.tx, link.rx).ok_or(Error::Index {
        what: "radio endpoint",
        index: link.rx,
        len: geo.sources.len().max(geo.destinations.len()),
    })?;
    let w = cfg.sub_bw(link.direction);
    let sigma2 = cfg.noise_variance(w);
    let mut rate = 0.0;
    for sp in &link.subcarriers {
        let g = ch.gain(link.direction, a, b, sp.index).ok_or(Error::Index {
            what: "subcarrier",
            index: sp.index,
            len: cfg.subcarriers(link.direction),
        })?;
        rate += shannon(w, sp.power.max(0.0), g, sigma2);
    }
    Ok(rate)
}

pub fn shannon(w: f64, p: f64, g: f64, sigma2: f64) -> f64 {
    w * (p * g / sigma2).ln_1p() / std::f64::consts::LN_2
}

/// Rate achieved by `service` in `dir` summed over every matching hop.
pub fn achieved_rate(
    alloc: &RadioAllocation,
    ch: &ChannelState,
    geo: &RadioGeometry,
    cfg: &RadioConfig,
    dir: Direction,
    service: u64,
) -> Result<f64> {
    let mut r = 0.0;
    for l in alloc.links.iter().filter(|l| l.direction == dir && l.service == service) {
        r += link_rate(l, ch, geo, cfg)?;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadioViolation {
    Exclusivity { direction: Direction, subcarrier: usize },
    Budget { direction: Direction, used: f64, budget: f64 },
    Power { direction: Direction, transmitter: usize, total: f64 },
    Rate { service: u64, direction: Direction, achieved: f64, required: u64 },
    Malformed { service: u64, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadioVerdict {
    pub ok: bool,
    pub violations: Vec<RadioViolation>,
}

/// Relative slack used when comparing achieved and required rates.
pub const RATE_TOLERANCE: f64 = 1e-9;

/// Checks `alloc` on top of the already committed `ongoing` allocation.
/// `required` maps (service, direction) to the minimum rate the new
/// allocation must reach.
pub fn validate_radio(
    alloc: &RadioAllocation,
    ongoing: &RadioAllocation,
    required: &BTreeMap<(u64, Direction), u64>,
    ch: &ChannelState,
    geo: &RadioGeometry,
    cfg: &RadioConfig,
) -> RadioVerdict {
    let mut v = Vec::new();
    let mut holders: BTreeMap<(Direction, usize), usize> = BTreeMap::new();
    let mut power: BTreeMap<(Direction, usize), f64> = BTreeMap::new();
    let mut used: BTreeMap<Direction, f64> = BTreeMap::new();
    for l in ongoing.links.iter().chain(alloc.links.iter()) {
        for sp in &l.subcarriers {
            *holders.entry((l.direction, sp.index)).or_default() += 1;
            *power.entry((l.direction, l.tx)).or_default() += sp.power;
            *used.entry(l.direction).or_default() += cfg.sub_bw(l.direction);
        }
    }
    for l in &alloc.links {
        let n = cfg.subcarriers(l.direction);
        if channel_indices(geo, l.direction, l.tx, l.rx).is_none() {
            v.push(RadioViolation::Malformed {
                service: l.service,
                reason: format!("unknown {:?} endpoint ({}, {})", l.direction, l.tx, l.rx),
            });
        }
        for sp in &l.subcarriers {
            if sp.index >= n {
                v.push(RadioViolation::Malformed {
                    service: l.service,
                    reason: format!("subcarrier {} out of range", sp.index),
                });
            }
            if !(sp.power >= 0.0 && sp.power.is_finite()) {
                v.push(RadioViolation::Malformed {
                    service: l.service,
                    reason: format!("invalid power {}", sp.power),
                });
            }
        }
    }
    for (&(direction, subcarrier), &count) in &holders {
        if count > 1 {
            v.push(RadioViolation::Exclusivity { direction, subcarrier });
        }
    }
    for (&direction, &u) in &used {
        if u > cfg.budget(direction) * (1.0 + 1e-12) {
            v.push(RadioViolation::Budget { direction, used: u, budget: cfg.budget(direction) });
        }
    }
    for (&(direction, transmitter), &total) in &power {
        if total > cfg.max_power * (1.0 + 1e-12) {
            v.push(RadioViolation::Power { direction, transmitter, total });
        }
    }
    for (&(service, direction), &req) in required {
        let achieved = if v.iter().any(|x| matches!(x, RadioViolation::Malformed { service: s, .. } if *s == service)) {
            0.0
        } else {
            achieved_rate(alloc, ch, geo, cfg, direction, service).unwrap_or(0.0)
        };
        if achieved < req as f64 * (1.0 - RATE_TOLERANCE) {
            v.push(RadioViolation::Rate { service, direction, achieved, required: req });
        }
    }
    RadioVerdict { ok: v.is_empty(), violations: v }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessDelays {
    pub propagation: f64,
    pub transmission: f64,
    pub ok: bool,
}

impl AccessDelays {
    pub fn total(&self) -> f64 {
        self.propagation + self.transmission
    }
}

/// Propagation and transmission delay of an access hop, and whether their sum
/// stays within `threshold`.
pub fn access_delays(rate: f64, payload_bits: f64, distance: f64, threshold: f64) -> AccessDelays {
    let propagation = distance / SPEED_OF_LIGHT;
    let transmission = if payload_bits <= 0.0 {
        0.0
    } else if rate > 0.0 {
        payload_bits / rate
    } else {
        f64::INFINITY
    };
    AccessDelays {
        propagation,
        transmission,
        ok: propagation + transmission <= threshold,
    }
}

/// Smallest per-subcarrier powers reaching `rate` with an equal rate split,
/// each capped at `power_cap / s`. Returns the powers and whether the target
/// is met without hitting the cap.
pub fn min_power_for_rate(rate: f64, gains: &[f64], w: f64, sigma2: f64, power_cap: f64) -> (Vec<f64>, bool) {
    if gains.is_empty() {
        return (Vec::new(), rate <= 0.0);
    }
    let s = gains.len() as f64;
    let per = rate / s;
    let cap = (power_cap / s).max(0.0);
    let mut feasible = true;
    let powers = gains
        .iter()
        .map(|&g| {
            let p = ((per / w).exp2() - 1.0) * sigma2 / g * (1.0 + 1e-7);
            if !(p <= cap) {
                feasible = false;
                cap
            } else {
                p
            }
        })
        .collect();
    (powers, feasible)
}
