//! Discrete-time simulator for age-of-information aware VNF placement and
//! scheduling in an NFV-enabled industrial IoT network, together with the
//! learning agents (DQN, DDPG, CA2C, MA-CA2C) and greedy baselines used to
//! drive it.
//!
//! Module map:
//! - [`topology`]: the directed virtual network and its capacities.
//! - [`service`]: VNF catalog, service chains, request arrivals and lifecycle.
//! - [`radio`]: OFDMA uplink/downlink access, Shannon rates and budgets.
//! - [`nfv`]: placement validation, resource ledger and VNF scheduling delays.
//! - [`aoi`]: three-stage age-of-information tracking.
//! - [`env`]: the slotted MDP composing all of the above.
//! - [`learn`]: MLPs, replay, exploration noise and the agents.
//! - [`baselines`]: Greedy-AoI and Greedy-cost schedulers.
//! - [`experiment`]: configuration, batch runs and metric export.

pub mod aoi;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod learn;
pub mod nfv;
pub mod radio;
pub mod service;
pub mod topology;
pub mod util;

pub use error::{Error, Result};

/// Propagation speed used for every link and access hop, in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
