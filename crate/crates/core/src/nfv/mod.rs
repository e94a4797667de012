//! Placement validation, the remaining-resource ledger and per-slot VNF
//! scheduling delays.

mod delay;
mod ledger;
mod placement;

pub use delay::{completion_time, roll_start_times, vnf_delays, FunctionDelay, SLOT_TOLERANCE};
pub use ledger::{footprint, Footprint, ResourceLedger};
pub use placement::{
    validate_placement, Constraint, FeasibilityVerdict, FunctionDecision, PlacementDecision,
    ServiceDecision, Violation,
};
