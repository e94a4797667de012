use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aoi_vnf::aoi::{AoiCaps, AoiState, SlotEvents};
use aoi_vnf::env::{encode_action, Env, EnvConfig};
use aoi_vnf::nfv::{FeasibilityVerdict, Footprint, ResourceLedger};
use aoi_vnf::radio::{
    link_rate, sample_channel, validate_radio, Direction, LinkAllocation, RadioAllocation, RadioConfig, RadioGeometry,
    RadioViolation, SubcarrierPower,
};
use aoi_vnf::service::{demand_profile, node_demand, Lifecycle, ServiceChain, ServiceRegistry, ServiceRequest, VnfType};
use aoi_vnf::topology::{build_topology, link_allowed, NetworkGraph, TopologySpec};

fn small_spec(s: usize, m: usize, d: usize, dense: bool, seed: u64) -> TopologySpec {
    let mut spec = TopologySpec {
        sources: s,
        middles: m,
        destinations: d,
        links: None,
        num_vnf_types: 4,
        seed,
        ..TopologySpec::default()
    };
    if !dense {
        spec.links = Some(spec.allowed_pairs() / 2 + 1);
    }
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topology_respects_roles_and_ranges(s in 1usize..4, m in 1usize..6, d in 1usize..4, dense: bool, seed: u64) {
        let spec = small_spec(s, m, d, dense, seed);
        let g = build_topology(&spec).unwrap();
        prop_assert_eq!(g.num_nodes(), s + m + d);
        let mut pairs = BTreeSet::new();
        for l in &g.links {
            prop_assert!(link_allowed(g.nodes[l.src].role, g.nodes[l.dst].role));
            prop_assert!(l.src != l.dst && pairs.insert((l.src, l.dst)));
            prop_assert!(l.bandwidth >= spec.bandwidth_range[0] && l.bandwidth <= spec.bandwidth_range[1]);
        }
        for n in &g.nodes {
            prop_assert!(n.cpu_capacity >= spec.cpu_range[0] && n.cpu_capacity <= spec.cpu_range[1]);
            prop_assert!(n.mem_capacity >= spec.mem_range[0] && n.mem_capacity <= spec.mem_range[1]);
        }
        for f in 0..g.num_vnf_types {
            let want: Vec<usize> = g.nodes.iter().filter(|n| n.supported_vnf_types.contains(&f)).map(|n| n.id).collect();
            prop_assert_eq!(&g.vnf_support[f], &want);
        }
    }

    #[test]
    fn topology_generation_is_deterministic(s in 1usize..4, m in 1usize..6, d in 1usize..4, seed: u64) {
        let spec = small_spec(s, m, d, false, seed);
        let (a, b) = (build_topology(&spec).unwrap(), build_topology(&spec).unwrap());
        prop_assert_eq!(a.to_toml().unwrap(), b.to_toml().unwrap());
        prop_assert_eq!(NetworkGraph::from_toml(&a.to_toml().unwrap()).unwrap(), a);
    }

    #[test]
    fn demand_scales_with_bitrate(c in 1u32..30, mm in 1u32..300, r in 1u64..1_000_000, k in 1u64..50, eta in 1.0f64..8.0) {
        let types = vec![VnfType { id: 0, cpu_per_bitrate: c as f64, mem_per_bitrate: mm as f64 }];
        let chain = |bitrate| ServiceChain { id: 0, vnf_sequence: vec![0], bitrate };
        let (c1, m1) = node_demand(&chain(r), &types, 0).unwrap();
        let (ck, mk) = node_demand(&chain(r * k), &types, 0).unwrap();
        prop_assert_eq!((ck, mk), (k * c1, k * m1));
        let link = aoi_vnf::topology::VirtualLink { src: 0, dst: 1, bandwidth: 1, spectral_efficiency: eta, distance: 0.0 };
        let b1 = demand_profile(&chain(r), &types, 0, &link).unwrap().bw_hz;
        let bk = demand_profile(&chain(r * k), &types, 0, &link).unwrap().bw_hz;
        prop_assert!(bk <= k * b1);
        prop_assert!(bk as f64 * eta >= (r * k) as f64 * (1.0 - 1e-12));
    }

    #[test]
    fn registry_partition_is_exact(seed: u64, n in 1usize..30, t_end in 1u64..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slot = 0.5;
        let mut reg = ServiceRegistry::new(slot, 2);
        let chain = ServiceChain { id: 0, vnf_sequence: vec![0, 1], bitrate: 10 };
        for i in 0..n as u64 {
            reg.insert(ServiceRequest {
                id: i,
                chain: chain.clone(),
                device: 0,
                user: 0,
                arrival_slot: rng.random_range(0..t_end),
                duration: rng.random_range(0.5..4.0),
                delay_threshold: 0.02,
                min_bitrate_ul: 10,
                min_bitrate_dl: 10,
                packets: 1,
            });
        }
        for t in 0..t_end {
            for i in 0..n as u64 {
                let rec = reg.get(i).unwrap();
                if rec.request.arrival_slot > t {
                    continue;
                }
                match rec.state {
                    Lifecycle::Pending { .. } if rng.random_bool(0.5) => reg.admit(i, t).unwrap(),
                    Lifecycle::Pending { .. } => {
                        reg.reject(i, t).unwrap();
                    }
                    Lifecycle::Active { .. } => reg.record_placement(i, t, rng.random_range(0..3)).unwrap(),
                    _ => {}
                }
            }
            let p = reg.classify(t);
            let all: Vec<u64> = p.arrived.iter().chain(&p.terminated).chain(&p.active).copied().collect();
            let set: BTreeSet<u64> = all.iter().copied().collect();
            prop_assert_eq!(set.len(), all.len());
            let live: BTreeSet<u64> = reg
                .records()
                .filter(|r| matches!(r.state, Lifecycle::Pending { .. } | Lifecycle::Active { .. }))
                .map(|r| r.request.id)
                .collect();
            prop_assert_eq!(&set, &live);
            for &id in &p.terminated {
                prop_assert!(reg.served_time(id, t) >= reg.get(id).unwrap().request.duration - 1e-9);
            }
            for &id in &p.active {
                prop_assert!(reg.served_time(id, t) < reg.get(id).unwrap().request.duration - 1e-9);
            }
            for id in p.terminated {
                reg.mark_terminated(id, t).unwrap();
            }
        }
    }
}

fn radio_setup(seed: u64) -> (RadioGeometry, RadioConfig, aoi_vnf::radio::ChannelState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = || [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)];
    let geo = RadioGeometry {
        devices: vec![pos(), pos()],
        users: vec![pos(), pos()],
        sources: vec![(0, pos())],
        destinations: vec![(5, pos())],
    };
    let cfg = RadioConfig::default();
    let ch = sample_channel(&geo, &cfg, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
    (geo, cfg, ch)
}

fn ul(service: u64, tx: usize, subs: &[(usize, f64)]) -> LinkAllocation {
    LinkAllocation {
        service,
        direction: Direction::Ul,
        tx,
        rx: 0,
        subcarriers: subs.iter().map(|&(index, power)| SubcarrierPower { index, power }).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rate_grows_with_power(seed: u64, h in 0usize..10, p in 0.0f64..15.0, extra in 0.0f64..15.0) {
        let (geo, cfg, ch) = radio_setup(seed);
        let lo = link_rate(&ul(1, 0, &[(h, p)]), &ch, &geo, &cfg).unwrap();
        let hi = link_rate(&ul(1, 0, &[(h, p + extra)]), &ch, &geo, &cfg).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn extra_subcarrier_adds_rate(seed: u64, h in 0usize..9, p in 0.01f64..10.0) {
        let (geo, cfg, ch) = radio_setup(seed);
        let one = link_rate(&ul(1, 0, &[(h, p)]), &ch, &geo, &cfg).unwrap();
        let two = link_rate(&ul(1, 0, &[(h, p), (h + 1, p)]), &ch, &geo, &cfg).unwrap();
        prop_assert!(two > one);
    }

    #[test]
    fn shared_subcarrier_is_rejected(seed: u64, h in 0usize..10, p in 0.1f64..10.0) {
        let (geo, cfg, ch) = radio_setup(seed);
        let ongoing = RadioAllocation { links: vec![ul(1, 0, &[(h, p)])] };
        let alloc = RadioAllocation { links: vec![ul(2, 1, &[(h, p)])] };
        let v = validate_radio(&alloc, &ongoing, &BTreeMap::new(), &ch, &geo, &cfg);
        prop_assert!(!v.ok);
        let exclusivity = v.violations.iter().any(|x| matches!(x, RadioViolation::Exclusivity { subcarrier, .. } if *subcarrier == h));
        prop_assert!(exclusivity);
        let free = RadioAllocation { links: vec![ul(2, 1, &[((h + 1) % 10, p)])] };
        prop_assert!(validate_radio(&free, &ongoing, &BTreeMap::new(), &ch, &geo, &cfg).ok);
    }

    #[test]
    fn overdrawn_commit_leaves_ledger_untouched(seed: u64, extra in 1u64..1000) {
        let g = build_topology(&small_spec(1, 2, 1, true, seed)).unwrap();
        let mut ledger = ResourceLedger::new(&g);
        let before = ledger.clone();
        let mut fp = Footprint::default();
        fp.node_cpu.insert(0, ledger.node_cpu[0] + extra);
        let ok = FeasibilityVerdict::from_violations(Vec::new());
        prop_assert!(ledger.commit_slot(&ok, &[fp.clone()], &[]).is_err());
        prop_assert_eq!(&ledger, &before);
        // Releasing more than was taken clamps at capacity.
        prop_assert!(ledger.commit_slot(&ok, &[], &[fp]).is_ok());
        prop_assert!(ledger.within_bounds() && ledger.is_full());
    }

    #[test]
    fn ages_grow_without_deliveries(f in 1usize..6, start in 0u64..50, slots in 1usize..200, cap in 1.0f64..50.0) {
        let caps = AoiCaps { source: cap, node: cap, user: cap };
        let mut st = AoiState::new(f, caps, 0.5, start);
        let mut prev = (st.source_age, st.node_age, st.user_age);
        for _ in 0..slots {
            st.step(SlotEvents::default());
            let now = (st.source_age, st.node_age, st.user_age);
            prop_assert!(now.0 >= prev.0 && now.1 >= prev.1 && now.2 >= prev.2);
            prop_assert!(now.0 <= cap && now.1 <= cap && now.2 <= cap);
            prev = now;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Random (often infeasible) actions: the reward is the base reward unless
    /// some decision offended, in which case it is exactly the penalty.
    #[test]
    fn reward_decomposes_and_penalty_is_exclusive(seed in 0u64..1000, scale in 0.0f64..2.0) {
        let mut e = Env::new(EnvConfig { steps_per_episode: 12, ..EnvConfig::default() }).unwrap();
        e.reset(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = e.config().cost.weights;
        let penalty = e.config().penalty;
        let mut penalized = 0;
        while !e.done() {
            let action = {
                let mut planner = e.planner();
                for i in 0..planner.pending_len() {
                    let ctx = planner.context(i).unwrap();
                    let cand = &ctx.candidates[rng.random_range(0..ctx.candidates.len())];
                    let (id, mut powers) = encode_action(&ctx, cand);
                    for p in &mut powers {
                        *p *= scale;
                    }
                    planner.commit(&ctx, id, &powers).unwrap();
                }
                planner.finish()
            };
            let out = e.step(&action).unwrap();
            let bd = out.breakdown;
            prop_assert_eq!(bd.penalty, !out.info.offending.is_empty());
            let base = -(w.aoi * bd.avg_aoi + bd.weighted_cost(&w));
            prop_assert!((bd.base - base).abs() <= 1e-9 * base.abs().max(1.0));
            prop_assert!(bd.fwd_cost >= 0.0 && bd.exec_cost >= 0.0 && bd.ul_cost >= 0.0 && bd.dl_cost >= 0.0);
            if bd.penalty {
                penalized += 1;
                prop_assert_eq!(bd.reward, -penalty);
            } else {
                prop_assert_eq!(bd.reward, bd.base);
            }
            prop_assert_eq!(out.reward, bd.reward);
        }
        prop_assert_eq!(e.episode_metrics().penalties, penalized);
    }
}
