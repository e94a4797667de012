//! VNF types, service function chains, request arrivals and the per-slot
//! lifecycle partition of requests.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::VirtualLink;
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfType {
    pub id: usize,
    /// Cycles per (bit/s).
    pub cpu_per_bitrate: f64,
    /// Bytes per (bit/s).
    pub mem_per_bitrate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceChain {
    pub id: usize,
    pub vnf_sequence: Vec<usize>,
    /// bits/s.
    pub bitrate: u64,
}

impl ServiceChain {
    pub fn len(&self) -> usize {
        self.vnf_sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vnf_sequence.is_empty()
    }
}

/// Resource demand of one function on its node and outgoing link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demand {
    pub cpu_hz: u64,
    pub mem_bytes: u64,
    pub bw_hz: u64,
}

fn ceil_u64(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        x.ceil() as u64
    }
}

/// CPU, memory and bandwidth needed by function `f` of `chain` when its
/// output leaves over `link`. Values are rounded up to whole base units.
pub fn demand_profile(
    chain: &ServiceChain,
    types: &[VnfType],
    f: usize,
    link: &VirtualLink,
) -> Result<Demand> {
    let &ty = chain.vnf_sequence.get(f).ok_or(Error::Index {
        what: "chain function",
        index: f,
        len: chain.len(),
    })?;
    let vt = types.get(ty).ok_or(Error::Index {
        what: "VNF type",
        index: ty,
        len: types.len(),
    })?;
    if !(link.spectral_efficiency > 0.0) {
        return Err(Error::Config("link spectral efficiency must be positive".into()));
    }
    let r = chain.bitrate as f64;
    Ok(Demand {
        cpu_hz: ceil_u64(r * vt.cpu_per_bitrate),
        mem_bytes: ceil_u64(r * vt.mem_per_bitrate),
        bw_hz: ceil_u64(r / link.spectral_efficiency),
    })
}

/// Node-side demand of a function, independent of the outgoing link.
pub fn node_demand(chain: &ServiceChain, types: &[VnfType], f: usize) -> Result<(u64, u64)> {
    let ty = *chain.vnf_sequence.get(f).ok_or(Error::Index {
        what: "chain function",
        index: f,
        len: chain.len(),
    })?;
    let vt = types.get(ty).ok_or(Error::Index {
        what: "VNF type",
        index: ty,
        len: types.len(),
    })?;
    let r = chain.bitrate as f64;
    Ok((ceil_u64(r * vt.cpu_per_bitrate), ceil_u64(r * vt.mem_per_bitrate)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSpec {
    pub num_types: usize,
    pub cpu_per_bitrate_range: [f64; 2],
    pub mem_per_bitrate_range: [f64; 2],
    pub num_chains: usize,
    pub chain_length_range: [usize; 2],
    pub bitrate: u64,
    pub seed: u64,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            num_types: 8,
            cpu_per_bitrate_range: [5.0, 20.0],
            mem_per_bitrate_range: [50.0, 200.0],
            num_chains: 12,
            chain_length_range: [4, 7],
            bitrate: 50_000_000,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainCatalog {
    pub types: Vec<VnfType>,
    pub chains: Vec<ServiceChain>,
}

impl ChainCatalog {
    pub fn generate(spec: &CatalogSpec) -> Result<Self> {
        let [lmin, lmax] = spec.chain_length_range;
        if lmin == 0 || lmin > lmax || lmax > spec.num_types {
            return Err(Error::Config(format!(
                "chain lengths {lmin}..={lmax} incompatible with {} VNF types",
                spec.num_types
            )));
        }
        let ok = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !ok(spec.cpu_per_bitrate_range) || !ok(spec.mem_per_bitrate_range) {
            return Err(Error::Config("per-bitrate demand ranges must be positive".into()));
        }
        let mut rng = rng_for(spec.seed, &[0x5e_7c]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..r[1])
            }
        };
        let types = (0..spec.num_types)
            .map(|id| VnfType {
                id,
                cpu_per_bitrate: draw(&mut rng, spec.cpu_per_bitrate_range),
                mem_per_bitrate: draw(&mut rng, spec.mem_per_bitrate_range),
            })
            .collect();
        let chains = (0..spec.num_chains)
            .map(|id| {
                let len = rng.random_range(lmin..=lmax);
                ServiceChain {
                    id,
                    vnf_sequence: sample(&mut rng, spec.num_types, len).into_vec(),
                    bitrate: spec.bitrate,
                }
            })
            .collect();
        let cat = ChainCatalog { types, chains };
        cat.validate()?;
        Ok(cat)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.types.iter().enumerate() {
            if t.id != i || !(t.cpu_per_bitrate > 0.0) || !(t.mem_per_bitrate > 0.0) {
                return Err(Error::Config(format!("VNF type {i} invalid")));
            }
        }
        for c in &self.chains {
            if c.is_empty() || c.bitrate == 0 {
                return Err(Error::Config(format!("chain {} is empty or has zero bitrate", c.id)));
            }
            if let Some(&f) = c.vnf_sequence.iter().find(|&&f| f >= self.types.len()) {
                return Err(Error::Config(format!("chain {} uses unknown type {f}", c.id)));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ChainCatalog = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    Poisson,
    /// Exactly `round(rate)` arrivals every slot.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalSpec {
    pub rate: f64,
    pub process: ArrivalProcess,
    pub devices: usize,
    pub users: usize,
    /// Service duration range in slots (continuous uniform).
    pub duration_slots_range: [f64; 2],
    pub packets_range: [u32; 2],
    /// Access delay threshold range in seconds.
    pub delay_threshold_range: [f64; 2],
}

impl Default for ArrivalSpec {
    fn default() -> Self {
        ArrivalSpec {
            rate: 5.0,
            process: ArrivalProcess::Poisson,
            devices: 5,
            users: 5,
            duration_slots_range: [2.0, 10.0],
            packets_range: [2, 6],
            delay_threshold_range: [0.0125, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: u64,
    pub chain: ServiceChain,
    pub device: usize,
    pub user: usize,
    pub arrival_slot: u64,
    /// Seconds of service required.
    pub duration: f64,
    /// Seconds.
    pub delay_threshold: f64,
    pub min_bitrate_ul: u64,
    pub min_bitrate_dl: u64,
    pub packets: u32,
}

impl ServiceRequest {
    /// Admission indicator: 1 exactly in the arrival slot.
    pub fn admission(&self, t: u64) -> bool {
        t == self.arrival_slot
    }

    /// Slots needed to accumulate `duration` of service.
    pub fn lifetime_slots(&self, slot_len: f64) -> u64 {
        ((self.duration / slot_len) - 1e-9).ceil().max(1.0) as u64
    }
}

/// Request ids encode the arrival slot so they stay unique across slots.
pub const IDS_PER_SLOT: u64 = 1 << 16;

/// Draws the arrivals of slot `t`. The stream depends only on `(seed, t)`.
pub fn spawn_arrivals(
    t: u64,
    spec: &ArrivalSpec,
    catalog: &ChainCatalog,
    slot_len: f64,
    seed: u64,
) -> Result<Vec<ServiceRequest>> {
    if !(spec.rate >= 0.0) || !spec.rate.is_finite() {
        return Err(Error::Config(format!("arrival rate {} must be finite and >= 0", spec.rate)));
    }
    if spec.rate == 0.0 {
        return Ok(Vec::new());
    }
    if catalog.chains.is_empty() {
        return Err(Error::Empty("chain catalog"));
    }
    if spec.devices == 0 || spec.users == 0 {
        return Err(Error::Config("arrivals need at least one device and one user".into()));
    }
    let mut rng = rng_for(seed, &[0xa7_71, t]);
    let count = match spec.process {
        ArrivalProcess::Poisson => {
            let d = Poisson::new(spec.rate).map_err(|e| Error::Config(e.to_string()))?;
            d.sample(&mut rng) as u64
        }
        ArrivalProcess::Deterministic => spec.rate.round() as u64,
    }
    .min(IDS_PER_SLOT - 1);
    let uni = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| {
        if r[0] >= r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..r[1])
        }
    };
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let chain = catalog.chains[rng.random_range(0..catalog.chains.len())].clone();
        let device = rng.random_range(0..spec.devices);
        let user = rng.random_range(0..spec.users);
        let duration = uni(&mut rng, spec.duration_slots_range) * slot_len;
        let delay_threshold = uni(&mut rng, spec.delay_threshold_range);
        let packets = rng.random_range(spec.packets_range[0]..=spec.packets_range[1]);
        let bitrate = chain.bitrate;
        out.push(ServiceRequest {
            id: t * IDS_PER_SLOT + i,
            chain,
            device,
            user,
            arrival_slot: t,
            duration,
            delay_threshold,
            min_bitrate_ul: bitrate,
            min_bitrate_dl: bitrate,
            packets,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lifecycle {
    /// Awaiting admission; `attempts` decisions have rejected it so far.
    Pending { attempts: u32 },
    Active { admitted: u64 },
    Terminated { slot: u64 },
    Dropped { slot: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request: ServiceRequest,
    pub state: Lifecycle,
    /// `(slot, Σ_f Σ_n v)` for every slot the service ran.
    pub placement_history: Vec<(u64, u32)>,
}

/// The per-slot partition: arrived (awaiting admission), terminating this
/// slot, and the remaining active services.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub arrived: Vec<u64>,
    pub terminated: Vec<u64>,
    pub active: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRegistry {
    pub slot_len: f64,
    pub retry_window: u32,
    records: BTreeMap<u64, RequestRecord>,
    max_duration: f64,
}

impl ServiceRegistry {
    pub fn new(slot_len: f64, retry_window: u32) -> Self {
        ServiceRegistry {
            slot_len,
            retry_window,
            records: BTreeMap::new(),
            max_duration: 0.0,
        }
    }

    pub fn insert(&mut self, request: ServiceRequest) {
        self.max_duration = self.max_duration.max(request.duration);
        self.records.insert(
            request.id,
            RequestRecord {
                request,
                state: Lifecycle::Pending { attempts: 0 },
                placement_history: Vec::new(),
            },
        );
    }

    pub fn max_duration(&self) -> f64 {
        self.max_duration
    }

    pub fn get(&self, id: u64) -> Option<&RequestRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &RequestRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn record_mut(&mut self, id: u64) -> Result<&mut RequestRecord> {
        self.records
            .get_mut(&id)
            .ok_or_else(|| Error::Contract(format!("unknown request {id}")))
    }

    pub fn admit(&mut self, id: u64, t: u64) -> Result<()> {
        let r = self.record_mut(id)?;
        match r.state {
            Lifecycle::Pending { .. } => {
                r.state = Lifecycle::Active { admitted: t };
                Ok(())
            }
            s => Err(Error::Contract(format!("admit of request {id} in state {s:?}"))),
        }
    }

    /// Records a failed admission attempt. Returns `true` when the request is
    /// dropped because its retry window is exhausted.
    pub fn reject(&mut self, id: u64, t: u64) -> Result<bool> {
        let window = self.retry_window;
        let r = self.record_mut(id)?;
        match r.state {
            Lifecycle::Pending { attempts } => {
                if attempts >= window {
                    r.state = Lifecycle::Dropped { slot: t };
                    Ok(true)
                } else {
                    r.state = Lifecycle::Pending { attempts: attempts + 1 };
                    Ok(false)
                }
            }
            s => Err(Error::Contract(format!("reject of request {id} in state {s:?}"))),
        }
    }

    /// Adds the number of node assignments made for `id` in slot `t`.
    pub fn record_placement(&mut self, id: u64, t: u64, assigned: u32) -> Result<()> {
        let r = self.record_mut(id)?;
        match r.state {
            Lifecycle::Active { .. } => {
                r.placement_history.push((t, assigned));
                Ok(())
            }
            s => Err(Error::Contract(format!("placement for request {id} in state {s:?}"))),
        }
    }

    /// Accumulated service time up to and including slot `t`.
    pub fn served_time(&self, id: u64, t: u64) -> f64 {
        self.records.get(&id).map_or(0.0, |r| accumulated(r, t, self.slot_len))
    }

    pub fn classify(&self, t: u64) -> Partition {
        let mut p = Partition::default();
        for (&id, r) in &self.records {
            match r.state {
                Lifecycle::Pending { .. } => p.arrived.push(id),
                Lifecycle::Active { .. } => {
                    if accumulated(r, t, self.slot_len) >= r.request.duration - 1e-9 {
                        p.terminated.push(id);
                    } else {
                        p.active.push(id);
                    }
                }
                _ => {}
            }
        }
        p
    }

    pub fn mark_terminated(&mut self, id: u64, t: u64) -> Result<()> {
        let r = self.record_mut(id)?;
        match r.state {
            Lifecycle::Active { .. } => {
                r.state = Lifecycle::Terminated { slot: t };
                Ok(())
            }
            s => Err(Error::Contract(format!("terminate of request {id} in state {s:?}"))),
        }
    }

    /// Forgets finished requests whose records are no longer needed.
    pub fn prune(&mut self, keep: impl Fn(&RequestRecord) -> bool) {
        self.records.retain(|_, r| keep(r));
    }
}

fn accumulated(r: &RequestRecord, t: u64, slot_len: f64) -> f64 {
    let f = r.request.chain.len().max(1) as f64;
    let total: u64 = r
        .placement_history
        .iter()
        .filter(|(s, _)| *s <= t)
        .map(|(_, v)| *v as u64)
        .sum();
    slot_len * total as f64 / f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(eta: f64) -> VirtualLink {
        VirtualLink {
            src: 0,
            dst: 1,
            bandwidth: 1_000_000_000,
            spectral_efficiency: eta,
            distance: 10.0,
        }
    }

    fn catalog() -> ChainCatalog {
        ChainCatalog {
            types: vec![VnfType { id: 0, cpu_per_bitrate: 40.0, mem_per_bitrate: 2.0 }],
            chains: vec![ServiceChain { id: 0, vnf_sequence: vec![0], bitrate: 50_000_000 }],
        }
    }

    #[test]
    fn demand_examples() {
        let cat = catalog();
        let d = demand_profile(&cat.chains[0], &cat.types, 0, &link(5.0)).unwrap();
        assert_eq!(d.bw_hz, 10_000_000);
        // Independent product: 50e6 * 40.
        assert_eq!(d.cpu_hz, 50_000_000u64 * 40);
        assert_eq!(d.mem_bytes, 100_000_000);

        let zero = ServiceChain { bitrate: 0, ..cat.chains[0].clone() };
        assert_eq!(
            demand_profile(&zero, &cat.types, 0, &link(5.0)).unwrap(),
            Demand::default()
        );
        assert!(matches!(
            demand_profile(&cat.chains[0], &cat.types, 3, &link(5.0)),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn zero_rate_spawns_nothing() {
        let spec = ArrivalSpec { rate: 0.0, ..ArrivalSpec::default() };
        let empty = ChainCatalog { types: vec![], chains: vec![] };
        assert!(spawn_arrivals(3, &spec, &empty, 0.5, 1).unwrap().is_empty());
        let spec = ArrivalSpec::default();
        assert!(matches!(spawn_arrivals(3, &spec, &empty, 0.5, 1), Err(Error::Empty(_))));
    }

    #[test]
    fn arrival_mean_converges() {
        let cat = ChainCatalog::generate(&CatalogSpec::default()).unwrap();
        let spec = ArrivalSpec::default();
        let n = 10_000u64;
        let total: usize = (0..n)
            .map(|t| spawn_arrivals(t, &spec, &cat, 0.5, 42).unwrap().len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn generated_chains_within_bounds() {
        let cat = ChainCatalog::generate(&CatalogSpec::default()).unwrap();
        let spec = ArrivalSpec::default();
        for t in 0..200 {
            for r in spawn_arrivals(t, &spec, &cat, 0.5, 9).unwrap() {
                assert!((4..=7).contains(&r.chain.len()));
                assert!((2..=6).contains(&r.packets));
                assert!(r.duration >= 1.0 && r.duration <= 5.0);
                assert!(r.admission(t) && !r.admission(t + 1));
            }
        }
    }

    #[test]
    fn arrivals_deterministic_per_slot() {
        let cat = ChainCatalog::generate(&CatalogSpec::default()).unwrap();
        let spec = ArrivalSpec::default();
        let a = spawn_arrivals(17, &spec, &cat, 0.5, 5).unwrap();
        let b = spawn_arrivals(17, &spec, &cat, 0.5, 5).unwrap();
        assert_eq!(a, b);
    }

    fn request(id: u64, duration: f64) -> ServiceRequest {
        ServiceRequest {
            id,
            chain: ServiceChain { id: 0, vnf_sequence: vec![0, 1], bitrate: 1 },
            device: 0,
            user: 0,
            arrival_slot: 0,
            duration,
            delay_threshold: 0.1,
            min_bitrate_ul: 1,
            min_bitrate_dl: 1,
            packets: 2,
        }
    }

    #[test]
    fn classify_examples() {
        let reg = ServiceRegistry::new(0.5, 3);
        assert_eq!(reg.classify(0), Partition::default());

        let mut reg = ServiceRegistry::new(0.5, 3);
        reg.insert(request(1, 1.0));
        assert_eq!(reg.classify(0).arrived, vec![1]);
        reg.admit(1, 0).unwrap();
        reg.record_placement(1, 0, 2).unwrap();
        let p = reg.classify(0);
        assert_eq!((p.active.clone(), p.terminated.clone()), (vec![1], vec![]));
        reg.record_placement(1, 1, 2).unwrap();
        // Explicit accumulation: 0.5 * (2 + 2) / 2 = 1.0 >= 1.0.
        assert_eq!(reg.classify(1).terminated, vec![1]);
        reg.mark_terminated(1, 1).unwrap();
        assert_eq!(reg.classify(2), Partition::default());
    }

    #[test]
    fn retry_window_then_drop() {
        let mut reg = ServiceRegistry::new(0.5, 2);
        reg.insert(request(4, 1.0));
        assert!(!reg.reject(4, 0).unwrap());
        assert!(!reg.reject(4, 1).unwrap());
        assert!(reg.reject(4, 2).unwrap());
        assert_eq!(reg.get(4).unwrap().state, Lifecycle::Dropped { slot: 2 });
        assert!(reg.classify(3).arrived.is_empty());
    }
}
