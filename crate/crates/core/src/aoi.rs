//! Three-stage age of information: at the source node (X), at the
//! destination node (Y) and at the destination user (Δ).
//!
//! Each stage follows a case analysis over the indicator history of the last
//! slots. Cases are evaluated top to bottom and the first match wins; when the
//! history is too short for a case, that case cannot match.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiCaps {
    pub source: f64,
    pub node: f64,
    pub user: f64,
}

impl AoiCaps {
    /// Every cap at `slots` slot lengths.
    pub fn uniform(slots: f64, slot_len: f64) -> Self {
        let c = slots * slot_len;
        AoiCaps { source: c, node: c, user: c }
    }
}

/// What happened to a service in one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotEvents {
    /// Uplink delivery and its propagation plus transmission delay.
    pub ul: Option<f64>,
    /// Placement indicator ϱ = (Σ u)(Σ v).
    pub placement: u64,
    /// Downlink delivery and its propagation plus transmission delay.
    pub dl: Option<f64>,
}

/// ϱ = (Σ_f Σ_links u)·(Σ_f Σ_nodes v).
pub fn placement_indicator(d: &crate::nfv::ServiceDecision) -> u64 {
    d.assigned_links() as u64 * d.assigned_nodes() as u64
}

pub fn step_source_age(x: f64, ul: Option<f64>, slot_len: f64, cap: f64) -> f64 {
    match ul {
        Some(delay) => delay,
        None => (x + slot_len).min(cap),
    }
}

/// `prev` is the previous slot's events, `None` when that slot predates the
/// tracker.
pub fn step_node_age(
    y: f64,
    x: f64,
    prev: Option<&SlotEvents>,
    now: &SlotEvents,
    full: u64,
    slot_len: f64,
    caps: &AoiCaps,
) -> f64 {
    if let Some(p) = prev {
        let rho = p.ul.is_some() as u64;
        if rho * now.placement == full {
            return p.ul.unwrap_or(0.0) + slot_len;
        }
        if rho == 0 && now.placement == full {
            return (x + slot_len).min(caps.source);
        }
    }
    (y + slot_len).min(caps.node)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserCase {
    /// Full pipeline: UL two slots ago, placement last slot, DL now.
    Pipeline,
    /// Placement last slot and DL now without a fresh UL.
    FromSource,
    /// DL now without placement or UL behind it.
    FromNode,
    Stale,
}

/// `prev2` and `prev1` are the events of slots t−2 and t−1.
#[allow(clippy::too_many_arguments)]
pub fn step_user_age(
    delta: f64,
    x: f64,
    y: f64,
    prev2: Option<&SlotEvents>,
    prev1: Option<&SlotEvents>,
    now: &SlotEvents,
    full: u64,
    slot_len: f64,
    caps: &AoiCaps,
) -> (f64, UserCase) {
    if let (Some(p2), Some(p1)) = (prev2, prev1) {
        let rho2 = p2.ul.is_some() as u64;
        let dl = now.dl.is_some() as u64;
        let down = now.dl.unwrap_or(0.0);
        if rho2 * p1.placement * dl == full {
            return (p2.ul.unwrap_or(0.0) + slot_len + down, UserCase::Pipeline);
        }
        if rho2 == 0 && p1.placement * dl == full {
            return ((x + slot_len + down).min(caps.user), UserCase::FromSource);
        }
        if rho2 == 0 && p1.placement == 0 && dl == 1 {
            return ((y + down).min(caps.user), UserCase::FromNode);
        }
    }
    ((delta + slot_len).min(caps.user), UserCase::Stale)
}

/// Ages of one service plus the last two slots of its indicator history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiState {
    pub source_age: f64,
    pub node_age: f64,
    pub user_age: f64,
    pub caps: AoiCaps,
    /// Generation time (seconds) of the freshest packet delivered to the user.
    pub last_receipt: f64,
    /// Next slot to be processed.
    pub slot: u64,
    pub slot_len: f64,
    /// ϱ for a fully placed chain, i.e. F².
    pub full_placement: u64,
    history: VecDeque<SlotEvents>,
}

impl AoiState {
    pub fn new(chain_len: usize, caps: AoiCaps, slot_len: f64, start_slot: u64) -> Self {
        AoiState {
            source_age: 0.0,
            node_age: 0.0,
            user_age: 0.0,
            caps,
            last_receipt: start_slot as f64 * slot_len,
            slot: start_slot,
            slot_len,
            full_placement: (chain_len * chain_len) as u64,
            history: VecDeque::with_capacity(3),
        }
    }

    /// Up to the last three slots of events, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &SlotEvents> {
        self.history.iter()
    }

    /// Advances one slot with the events observed in it.
    pub fn step(&mut self, ev: SlotEvents) -> UserCase {
        let n = self.history.len();
        let prev1 = n.checked_sub(1).and_then(|i| self.history.get(i));
        let prev2 = n.checked_sub(2).and_then(|i| self.history.get(i));
        let (x, y, d) = (self.source_age, self.node_age, self.user_age);
        let nx = step_source_age(x, ev.ul, self.slot_len, self.caps.source);
        let ny = step_node_age(y, x, prev1, &ev, self.full_placement, self.slot_len, &self.caps);
        let (nd, case) = step_user_age(
            d,
            x,
            y,
            prev2,
            prev1,
            &ev,
            self.full_placement,
            self.slot_len,
            &self.caps,
        );
        self.source_age = nx;
        self.node_age = ny;
        self.user_age = nd;
        self.slot += 1;
        if case != UserCase::Stale {
            self.last_receipt = self.slot as f64 * self.slot_len - nd;
        }
        if self.history.len() == 3 {
            self.history.pop_front();
        }
        self.history.push_back(ev);
        case
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiAverage {
    pub per_service: Vec<f64>,
    /// Σ over services.
    pub total: f64,
    /// Mean over services.
    pub mean: f64,
}

/// Riemann-sum time average of each per-slot trace.
pub fn time_average_aoi(traces: &[Vec<f64>], slot_len: f64) -> Result<AoiAverage> {
    if traces.is_empty() || traces.iter().any(|t| t.is_empty()) {
        return Err(Error::Empty("AoI trace"));
    }
    let per_service: Vec<f64> = traces
        .iter()
        .map(|t| t.iter().map(|d| d * slot_len).sum::<f64>() / (t.len() as f64 * slot_len))
        .collect();
    let total: f64 = per_service.iter().sum();
    let mean = total / per_service.len() as f64;
    Ok(AoiAverage { per_service, total, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfv::ServiceDecision;

    const D: f64 = 0.5;

    fn caps() -> AoiCaps {
        AoiCaps::uniform(50.0, D)
    }

    #[test]
    fn placement_indicator_examples() {
        assert_eq!(placement_indicator(&ServiceDecision::default()), 0);
        let full = ServiceDecision::from_path(0, &[0, 1, 2, 3], &[0, 1, 2, 3]);
        assert_eq!(placement_indicator(&full), 16);
        let partial = ServiceDecision::from_path(0, &[0, 1, 2], &[0, 1, 2]);
        assert_eq!(placement_indicator(&partial), 9);
    }

    #[test]
    fn source_age_cases() {
        let mut s = AoiState::new(2, caps(), D, 0);
        s.step(SlotEvents::default());
        assert_eq!(s.source_age, D);
        assert_eq!(step_source_age(3.0, Some(1.2e-3), D, 25.0), 1.2e-3);
        let mut x = 0.0;
        for _ in 0..200 {
            x = step_source_age(x, None, D, 25.0);
        }
        assert_eq!(x, 25.0);
    }

    #[test]
    fn node_age_cases() {
        let c = caps();
        let ul = SlotEvents { ul: Some(0.01), placement: 4, dl: None };
        let placed = SlotEvents { ul: None, placement: 4, dl: None };
        assert_eq!(step_node_age(3.0, 1.0, Some(&ul), &placed, 4, D, &c), 0.01 + D);
        assert_eq!(step_node_age(3.0, 1.0, Some(&placed), &placed, 4, D, &c), 1.0 + D);
        let idle = SlotEvents::default();
        assert_eq!(step_node_age(3.0, 1.0, Some(&idle), &idle, 4, D, &c), 3.0 + D);
        assert_eq!(step_node_age(24.9, 1.0, None, &placed, 4, D, &c), 25.0);
    }

    #[test]
    fn user_age_full_pipeline() {
        let c = caps();
        let p2 = SlotEvents { ul: Some(0.002), placement: 4, dl: None };
        let p1 = SlotEvents { ul: None, placement: 4, dl: None };
        let now = SlotEvents { ul: None, placement: 4, dl: Some(0.002) };
        let (d, case) = step_user_age(7.0, 9.0, 9.0, Some(&p2), Some(&p1), &now, 4, D, &c);
        assert_eq!(case, UserCase::Pipeline);
        let oracle = 0.001 + 0.001 + D + 0.001 + 0.001;
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.504).abs() < 1e-12);
    }

    #[test]
    fn user_age_other_cases() {
        let c = caps();
        let idle = SlotEvents::default();
        let (d, case) = step_user_age(1.0, 0.0, 0.0, Some(&idle), Some(&idle), &idle, 4, D, &c);
        assert_eq!((d, case), (1.0 + D, UserCase::Stale));
        let (_, case) = step_user_age(1.0, 0.0, 0.0, None, None, &SlotEvents { dl: Some(0.0), ..idle }, 4, D, &c);
        assert_eq!(case, UserCase::Stale);
        let p1 = SlotEvents { placement: 4, ..idle };
        let now = SlotEvents { placement: 4, dl: Some(0.01), ul: None };
        let (d, case) = step_user_age(1.0, 2.0, 3.0, Some(&idle), Some(&p1), &now, 4, D, &c);
        assert_eq!(case, UserCase::FromSource);
        assert_eq!(d, 2.0 + D + 0.01);
        let (d, case) = step_user_age(1.0, 2.0, 3.0, Some(&idle), Some(&idle), &now, 4, D, &c);
        assert_eq!(case, UserCase::FromNode);
        assert_eq!(d, 3.0 + 0.01);
    }

    #[test]
    fn first_match_priority() {
        // With a complete pipeline the later cases must not fire even though
        // the DL condition alone would satisfy them.
        let c = caps();
        let p2 = SlotEvents { ul: Some(0.0), placement: 1, dl: None };
        let p1 = SlotEvents { ul: None, placement: 1, dl: None };
        let now = SlotEvents { ul: None, placement: 1, dl: Some(0.0) };
        let (_, case) = step_user_age(0.0, 0.0, 0.0, Some(&p2), Some(&p1), &now, 1, D, &c);
        assert_eq!(case, UserCase::Pipeline);
    }

    #[test]
    fn last_receipt_tracks_staleness() {
        let mut s = AoiState::new(1, caps(), D, 4);
        for _ in 0..5 {
            s.step(SlotEvents::default());
        }
        let now = s.slot as f64 * D;
        assert_eq!(s.user_age, now - s.last_receipt);
    }

    #[test]
    fn time_average_examples() {
        let a = time_average_aoi(&[vec![2.5; 40]], D).unwrap();
        assert!((a.per_service[0] - 2.5).abs() < 1e-12);
        let n = 400;
        let ramp: Vec<f64> = (0..n).map(|t| t as f64 * D).collect();
        let a = time_average_aoi(&[ramp], D).unwrap();
        let amax = (n - 1) as f64 * D;
        assert!((a.mean - amax / 2.0).abs() <= D);
        let a = time_average_aoi(&[vec![1.25]], D).unwrap();
        assert_eq!(a.mean, 1.25);
        assert!(time_average_aoi(&[], D).is_err());
        let a = time_average_aoi(&[vec![1.0], vec![3.0]], D).unwrap();
        assert_eq!((a.total, a.mean), (4.0, 2.0));
    }
}
