use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aoi_vnf::baselines::{greedy_action, rank_candidates, run_greedy_episode, GreedyKind};
use aoi_vnf::env::{CandidateKind, Env, EnvConfig};
use aoi_vnf::service::{ArrivalProcess, ArrivalSpec, ChainCatalog, ServiceChain, VnfType};
use aoi_vnf::topology::{NetworkGraph, NodeRole, VirtualLink, VirtualNode};
use aoi_vnf::SPEED_OF_LIGHT;

const BITRATE: u64 = 50_000_000;
const CPU_PER_BIT: f64 = 5.0;

fn node(id: usize, role: NodeRole, cpu: u64) -> VirtualNode {
    VirtualNode {
        id,
        role,
        cpu_capacity: cpu,
        mem_capacity: 100_000_000_000,
        supported_vnf_types: if role == NodeRole::Destination { BTreeSet::new() } else { BTreeSet::from([0]) },
        position: [450.0 + 20.0 * id as f64, 500.0],
    }
}

fn link(src: usize, dst: usize, distance: f64) -> VirtualLink {
    VirtualLink { src, dst, bandwidth: 1_000_000_000, spectral_efficiency: 4.0, distance }
}

fn config(rate: f64) -> EnvConfig {
    let mut cfg = EnvConfig {
        arrivals: ArrivalSpec {
            rate,
            process: ArrivalProcess::Deterministic,
            devices: 1,
            users: 1,
            duration_slots_range: [1.0, 1.0],
            delay_threshold_range: [0.1, 0.1],
            ..ArrivalSpec::default()
        },
        payload_fraction: 0.01,
        steps_per_episode: 6,
        ..EnvConfig::default()
    };
    cfg.cost.range = [1.0, 1.0];
    cfg
}

fn env(rate: f64, nodes: Vec<VirtualNode>, links: Vec<VirtualLink>, chain_len: usize) -> Env {
    let graph = NetworkGraph::new(1, nodes, links).unwrap();
    let catalog = ChainCatalog {
        types: vec![VnfType { id: 0, cpu_per_bitrate: CPU_PER_BIT, mem_per_bitrate: 50.0 }],
        chains: vec![ServiceChain { id: 0, vnf_sequence: vec![0; chain_len], bitrate: BITRATE }],
    };
    Env::with_parts(config(rate), graph, catalog).unwrap()
}

/// Hosts chosen by the greedy action for the first pending request.
fn chosen_nodes(e: &Env, kind: GreedyKind) -> Vec<usize> {
    let a = greedy_action(e, kind).unwrap();
    a.placement.services[0].functions.iter().map(|f| f.nodes[0]).collect()
}

#[test]
fn single_feasible_path_is_chosen() {
    let mut e = env(
        1.0,
        vec![node(0, NodeRole::Source, 2e9 as u64), node(1, NodeRole::Middle, 2e9 as u64), node(2, NodeRole::Destination, 2e9 as u64)],
        vec![link(0, 1, 100.0), link(1, 2, 100.0)],
        2,
    );
    for kind in [GreedyKind::Aoi, GreedyKind::Cost] {
        e.reset(0).unwrap();
        let a = greedy_action(&e, kind).unwrap();
        assert_eq!(a.placement.services.len(), 1);
        let fs = &a.placement.services[0].functions;
        assert_eq!(fs.iter().map(|f| f.nodes.clone()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        assert_eq!(fs.iter().map(|f| f.links.clone()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        let out = e.step(&a).unwrap();
        assert_eq!(out.info.admitted.len(), 1);
        assert!(out.info.offending.is_empty());
    }
}

#[test]
fn stalest_request_is_served_first() {
    // Each host fits one function at a time; services live one slot.
    let cpu = (BITRATE as f64 * CPU_PER_BIT * 1.5) as u64;
    let mut e = env(
        2.0,
        vec![node(0, NodeRole::Source, cpu), node(1, NodeRole::Middle, cpu), node(2, NodeRole::Destination, cpu)],
        vec![link(0, 1, 100.0), link(1, 2, 100.0)],
        2,
    );
    e.reset(0).unwrap();
    let a = greedy_action(&e, GreedyKind::Aoi).unwrap();
    let out = e.step(&a).unwrap();
    assert_eq!(out.info.admitted.len(), 1);
    let waiting = out.info.rejected[0];
    assert!(e.pending().contains(&waiting));
    let fresh: Vec<u64> = e.pending().iter().copied().filter(|&id| id != waiting).collect();
    assert_eq!(fresh.len(), 2);
    assert!(fresh.iter().all(|&id| e.user_age(waiting) > e.user_age(id)));
    let order = e.planner().order_by_age();
    assert_eq!(e.pending()[order[0]], waiting);
    let out = e.step(&greedy_action(&e, GreedyKind::Aoi).unwrap()).unwrap();
    assert_eq!(out.info.admitted, vec![waiting]);
}

/// Source 0, middles 1..=3 (fully meshed), destination 4.
fn five_nodes(rng: &mut ChaCha8Rng) -> (Vec<VirtualNode>, Vec<VirtualLink>) {
    let nodes = (0..5)
        .map(|id| {
            let role = match id {
                0 => NodeRole::Source,
                4 => NodeRole::Destination,
                _ => NodeRole::Middle,
            };
            node(id, role, rng.random_range(1_000_000_000..2_000_000_000))
        })
        .collect();
    let mut links = Vec::new();
    for (a, b) in [(0, 1), (0, 2), (0, 3), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2), (1, 4), (2, 4), (3, 4)] {
        links.push(link(a, b, rng.random_range(10.0..50_000.0)));
    }
    (nodes, links)
}

#[test]
fn five_node_choice_matches_exhaustive_latency_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (nodes, links) = five_nodes(&mut rng);
        let mut e = env(1.0, nodes.clone(), links.clone(), 3);
        e.reset(0).unwrap();
        let payload = e.config().payload_bits(BITRATE);
        let proc = |n: usize| payload * CPU_PER_BIT / nodes[n].cpu_capacity as f64;
        let hop = |a: usize, b: usize| {
            let l = links.iter().find(|l| l.src == a && l.dst == b)?;
            let bw = (BITRATE as f64 / l.spectral_efficiency).ceil();
            Some(l.distance / SPEED_OF_LIGHT + payload / (bw * l.spectral_efficiency))
        };
        let mut best = (f64::INFINITY, vec![]);
        for a in 1..=3 {
            for b in 1..=3 {
                let (Some(x), Some(y), Some(z)) = (hop(0, a), hop(a, b), hop(b, 4)) else { continue };
                let lat = proc(0) + x + proc(a) + y + proc(b) + z;
                if lat < best.0 {
                    best = (lat, vec![0, a, b]);
                }
            }
        }
        assert_eq!(chosen_nodes(&e, GreedyKind::Aoi), best.1);
    }
}

#[test]
fn uniform_costs_score_paths_by_hop_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (nodes, links) = five_nodes(&mut rng);
    for len in 2..=3 {
        let mut e = env(1.0, nodes.clone(), links.clone(), len);
        e.reset(0).unwrap();
        let planner = e.planner();
        let ctx = planner.context(0).unwrap();
        let mut paths = 0;
        for c in &ctx.candidates {
            if let CandidateKind::Serve(opt) = &c.kind {
                paths += 1;
                let hops = (opt.path.links.len() + opt.path.nodes.len()) as f64;
                assert_eq!(opt.path.cost, hops);
            }
        }
        assert!(paths > 0);
        let ranked = rank_candidates(&planner, &ctx, GreedyKind::Cost).unwrap();
        let fewest = ranked.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
        assert_eq!(ranked[0].cost, fewest);
    }
}

#[test]
fn expensive_short_link_forces_a_detour() {
    // Middle 1 is fast, middle 2 slow; the link into middle 1 is pricey.
    let nodes = vec![
        node(0, NodeRole::Source, 2_000_000_000),
        node(1, NodeRole::Middle, 2_000_000_000),
        node(2, NodeRole::Middle, 1_000_000_000),
        node(3, NodeRole::Destination, 2_000_000_000),
    ];
    let links = vec![link(0, 1, 100.0), link(1, 3, 100.0), link(0, 2, 100.0), link(2, 3, 100.0)];
    let mut e = env(1.0, nodes, links, 2);
    let mut costs = e.costs().clone();
    costs.link_cost[0] = 100.0;
    e.set_cost_model(costs).unwrap();
    e.reset(0).unwrap();
    assert_eq!(chosen_nodes(&e, GreedyKind::Aoi), vec![0, 1]);
    assert_eq!(chosen_nodes(&e, GreedyKind::Cost), vec![0, 2]);
}

#[test]
fn request_without_feasible_path_is_rejected() {
    let mut src = node(0, NodeRole::Source, 2_000_000_000);
    src.supported_vnf_types.clear();
    let mut e = env(
        1.0,
        vec![src, node(1, NodeRole::Middle, 2_000_000_000), node(2, NodeRole::Destination, 2_000_000_000)],
        vec![link(0, 1, 100.0), link(1, 2, 100.0)],
        2,
    );
    for kind in [GreedyKind::Aoi, GreedyKind::Cost] {
        e.reset(0).unwrap();
        let id = e.pending()[0];
        let a = greedy_action(&e, kind).unwrap();
        assert!(a.placement.services.iter().all(|s| !s.claimed()));
        let out = e.step(&a).unwrap();
        assert!(out.info.admitted.is_empty() && out.info.offending.is_empty());
        assert_eq!(out.info.rejected, vec![id]);
    }
}

#[test]
fn greedy_is_never_penalized_and_is_deterministic() {
    let cfg = EnvConfig { steps_per_episode: 25, ..EnvConfig::default() };
    let mut e = Env::new(cfg).unwrap();
    for kind in [GreedyKind::Aoi, GreedyKind::Cost] {
        for seed in 0..3 {
            let a = run_greedy_episode(&mut e, kind, seed).unwrap();
            let b = run_greedy_episode(&mut e, kind, seed).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.infeasible, 0);
            assert_eq!(a.metrics.penalties, 0);
            assert!(a.metrics.admitted > 0);
        }
    }
}
