use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::{demand_profile, node_demand, ServiceChain, VnfType};
use crate::topology::NetworkGraph;

use super::{FeasibilityVerdict, ServiceDecision};

/// Remaining bandwidth (Hz), memory (bytes) and CPU (Hz) per link and node,
/// with the capacities they are clamped to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLedger {
    pub link_bw: Vec<u64>,
    pub node_mem: Vec<u64>,
    pub node_cpu: Vec<u64>,
    pub cap_link_bw: Vec<u64>,
    pub cap_node_mem: Vec<u64>,
    pub cap_node_cpu: Vec<u64>,
}

/// Resources held by one admitted service.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub link_bw: BTreeMap<usize, u64>,
    pub node_mem: BTreeMap<usize, u64>,
    pub node_cpu: BTreeMap<usize, u64>,
}

impl Footprint {
    pub fn add(&mut self, other: &Footprint) {
        for (k, v) in &other.link_bw {
            *self.link_bw.entry(*k).or_default() += v;
        }
        for (k, v) in &other.node_mem {
            *self.node_mem.entry(*k).or_default() += v;
        }
        for (k, v) in &other.node_cpu {
            *self.node_cpu.entry(*k).or_default() += v;
        }
    }
}

/// Demands recorded for a placed service so they can be restored exactly.
pub fn footprint(
    sd: &ServiceDecision,
    graph: &NetworkGraph,
    types: &[VnfType],
    chain: &ServiceChain,
) -> Result<Footprint> {
    let mut fp = Footprint::default();
    for (f, fd) in sd.functions.iter().enumerate() {
        for &n in &fd.nodes {
            let (c, b) = node_demand(chain, types, f)?;
            *fp.node_cpu.entry(n).or_default() += c;
            *fp.node_mem.entry(n).or_default() += b;
        }
        for &l in &fd.links {
            let link = graph.links.get(l).ok_or(Error::Index {
                what: "link",
                index: l,
                len: graph.num_links(),
            })?;
            *fp.link_bw.entry(l).or_default() += demand_profile(chain, types, f, link)?.bw_hz;
        }
    }
    Ok(fp)
}

fn apply(
    cur: &[u64],
    cap: &[u64],
    minus: impl Fn(usize) -> u64,
    plus: impl Fn(usize) -> u64,
    what: &str,
) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(cur.len());
    for i in 0..cur.len() {
        let x = cur[i] as i128 - minus(i) as i128 + plus(i) as i128;
        if x < 0 {
            return Err(Error::Contract(format!("{what} {i} would go negative")));
        }
        out.push(x.min(cap[i] as i128) as u64);
    }
    Ok(out)
}

impl ResourceLedger {
    /// Ledger at full capacity.
    pub fn new(graph: &NetworkGraph) -> Self {
        let bw: Vec<u64> = graph.links.iter().map(|l| l.bandwidth).collect();
        let mem: Vec<u64> = graph.nodes.iter().map(|n| n.mem_capacity).collect();
        let cpu: Vec<u64> = graph.nodes.iter().map(|n| n.cpu_capacity).collect();
        ResourceLedger {
            link_bw: bw.clone(),
            node_mem: mem.clone(),
            node_cpu: cpu.clone(),
            cap_link_bw: bw,
            cap_node_mem: mem,
            cap_node_cpu: cpu,
        }
    }

    fn check_keys(&self, fps: &[&Footprint]) -> Result<()> {
        for fp in fps {
            if let Some((&k, _)) = fp.link_bw.iter().find(|(k, _)| **k >= self.link_bw.len()) {
                return Err(Error::Index { what: "link", index: k, len: self.link_bw.len() });
            }
            for m in [&fp.node_mem, &fp.node_cpu] {
                if let Some((&k, _)) = m.iter().find(|(k, _)| **k >= self.node_cpu.len()) {
                    return Err(Error::Index { what: "node", index: k, len: self.node_cpu.len() });
                }
            }
        }
        Ok(())
    }

    /// One slot of the recursions `r ← min{r − Σ arrivals + Σ terminations,
    /// capacity}`. Refuses (and leaves the ledger untouched) when the slot's
    /// decision failed validation or any resource would go negative.
    pub fn commit_slot(
        &mut self,
        verdict: &FeasibilityVerdict,
        arrivals: &[Footprint],
        terminations: &[Footprint],
    ) -> Result<()> {
        if !verdict.ok {
            return Err(Error::Contract("commit of a decision that failed validation".into()));
        }
        let all: Vec<&Footprint> = arrivals.iter().chain(terminations).collect();
        self.check_keys(&all)?;
        let sum = |fps: &[Footprint], pick: fn(&Footprint) -> &BTreeMap<usize, u64>, i: usize| {
            fps.iter().map(|fp| pick(fp).get(&i).copied().unwrap_or(0)).sum::<u64>()
        };
        let bw = apply(
            &self.link_bw,
            &self.cap_link_bw,
            |i| sum(arrivals, |f| &f.link_bw, i),
            |i| sum(terminations, |f| &f.link_bw, i),
            "link bandwidth",
        )?;
        let mem = apply(
            &self.node_mem,
            &self.cap_node_mem,
            |i| sum(arrivals, |f| &f.node_mem, i),
            |i| sum(terminations, |f| &f.node_mem, i),
            "node memory",
        )?;
        let cpu = apply(
            &self.node_cpu,
            &self.cap_node_cpu,
            |i| sum(arrivals, |f| &f.node_cpu, i),
            |i| sum(terminations, |f| &f.node_cpu, i),
            "node cpu",
        )?;
        self.link_bw = bw;
        self.node_mem = mem;
        self.node_cpu = cpu;
        Ok(())
    }

    /// Copy of the ledger with `fp` tentatively held back, saturating at 0.
    pub fn reserved(&self, fp: &Footprint) -> ResourceLedger {
        let mut out = self.clone();
        for (&k, &v) in &fp.link_bw {
            if let Some(x) = out.link_bw.get_mut(k) {
                *x = x.saturating_sub(v);
            }
        }
        for (&k, &v) in &fp.node_mem {
            if let Some(x) = out.node_mem.get_mut(k) {
                *x = x.saturating_sub(v);
            }
        }
        for (&k, &v) in &fp.node_cpu {
            if let Some(x) = out.node_cpu.get_mut(k) {
                *x = x.saturating_sub(v);
            }
        }
        out
    }

    pub fn within_bounds(&self) -> bool {
        let ok = |r: &[u64], c: &[u64]| r.iter().zip(c).all(|(a, b)| a <= b);
        ok(&self.link_bw, &self.cap_link_bw)
            && ok(&self.node_mem, &self.cap_node_mem)
            && ok(&self.node_cpu, &self.cap_node_cpu)
    }

    pub fn is_full(&self) -> bool {
        self.link_bw == self.cap_link_bw
            && self.node_mem == self.cap_node_mem
            && self.node_cpu == self.cap_node_cpu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfv::Violation;

    fn ledger() -> ResourceLedger {
        ResourceLedger {
            link_bw: vec![100_000_000],
            node_mem: vec![1_000_000_000],
            node_cpu: vec![4_000_000_000],
            cap_link_bw: vec![100_000_000],
            cap_node_mem: vec![1_000_000_000],
            cap_node_cpu: vec![4_000_000_000],
        }
    }

    fn fp(cpu: u64, mem: u64, bw: u64) -> Footprint {
        Footprint {
            link_bw: BTreeMap::from([(0, bw)]),
            node_mem: BTreeMap::from([(0, mem)]),
            node_cpu: BTreeMap::from([(0, cpu)]),
        }
    }

    fn ok() -> FeasibilityVerdict {
        FeasibilityVerdict::from_violations(vec![])
    }

    #[test]
    fn identity_commit() {
        let mut l = ledger();
        l.commit_slot(&ok(), &[], &[]).unwrap();
        assert_eq!(l, ledger());
    }

    #[test]
    fn round_trip_restores() {
        let mut l = ledger();
        let s = fp(2_000_000_000, 100_000_000, 10_000_000);
        l.commit_slot(&ok(), std::slice::from_ref(&s), &[]).unwrap();
        assert_eq!(l.node_cpu[0], 2_000_000_000);
        l.commit_slot(&ok(), &[], &[s]).unwrap();
        assert_eq!(l, ledger());
    }

    #[test]
    fn shared_node_subtracts_both() {
        let mut l = ledger();
        let a = fp(1_500_000_000, 1, 1);
        let b = fp(700_000_000, 1, 1);
        l.commit_slot(&ok(), &[a], &[]).unwrap();
        l.commit_slot(&ok(), &[b], &[]).unwrap();
        let mut oracle = 4_000_000_000u64;
        oracle -= 1_500_000_000;
        oracle -= 700_000_000;
        assert_eq!(l.node_cpu[0], oracle);
    }

    #[test]
    fn contract_violations_leave_ledger() {
        let mut l = ledger();
        let bad = FeasibilityVerdict::from_violations(vec![Violation::new(super::super::Constraint::Bw2)]);
        assert!(matches!(l.commit_slot(&bad, &[fp(1, 1, 1)], &[]), Err(Error::Contract(_))));
        assert!(l.commit_slot(&ok(), &[fp(5_000_000_000, 1, 1)], &[]).is_err());
        assert_eq!(l, ledger());
    }

    #[test]
    fn restoration_clamps_at_capacity() {
        let mut l = ledger();
        l.commit_slot(&ok(), &[], &[fp(1, 1, 1)]).unwrap();
        assert_eq!(l, ledger());
    }
}
