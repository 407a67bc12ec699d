use std::collections::HashSet;

use hetmatch_core::counts::{run_replicas, AgentType, PolicyKind};
use hetmatch_core::ctmc::chain_seg_pmf;
use hetmatch_core::graph::*;
use hetmatch_core::params::replica_rng;
use hetmatch_core::{Error, MarketParams, RunControls};
use proptest::prelude::*;
use rand::Rng;

fn mp(lh: f64, le: f64, ph: f64, pe: f64, d: u32) -> MarketParams {
    MarketParams::new(lh, le, ph, pe, d).unwrap()
}

#[test]
fn arrival_in_degree_matches_compatibility() {
    let p = mp(1.0, 2.0, 0.1, 0.5, 1);
    let n = 200;
    let trials = 2000;
    let mut rng = replica_rng(5, 0);
    for (kind, prob) in [(AgentType::H, p.p_h), (AgentType::E, p.p_e)] {
        let mut total = 0usize;
        for _ in 0..trials {
            let mut g = CompatibilityGraph::new(0);
            for _ in 0..n {
                g.insert_agent(AgentType::H, 0, Status::Waiting);
            }
            let id = g.arrive(kind, 1, &p, &mut rng).unwrap();
            total += g.in_neighbors(id).count();
            assert!(g.out_neighbors(id).count() <= n);
            assert_eq!(g.coins_drawn(), 2 * n as u64);
        }
        let mean = total as f64 / trials as f64;
        let sd = (n as f64 * prob * (1.0 - prob) / trials as f64).sqrt();
        assert!(
            (mean - n as f64 * prob).abs() <= 3.0 * sd,
            "{kind:?}: {mean}"
        );
    }
}

#[test]
fn two_agent_segment_law() {
    let p = mp(1.0, 2.0, 0.3, 0.5, 1);
    let mut rng = replica_rng(9, 0);
    let mut counts = [0u64; 3];
    let mut n = 0u64;
    while n < 200_000 {
        let mut g = CompatibilityGraph::new(1);
        g.arrive(AgentType::H, 1, &p, &mut rng).unwrap();
        g.arrive(AgentType::H, 2, &p, &mut rng).unwrap();
        let new = g.arrive(AgentType::H, 3, &p, &mut rng).unwrap();
        if let Some(path) = find_chain_local(&g, new, &mut rng) {
            counts[path.h_count - 1] += 1;
            n += 1;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        let prob = chain_seg_pmf(2, i, &p);
        let got = c as f64 / n as f64;
        let sd = (prob * (1.0 - prob) / n as f64).sqrt();
        assert!((got - prob).abs() <= 3.0 * sd, "i = {i}: {got} vs {prob}");
    }
}

/// Graph with one bridge (id 0), waiting agents of the given kinds and edges.
fn build(kinds: &[AgentType], edges: &[(u64, u64)]) -> CompatibilityGraph {
    let mut g = CompatibilityGraph::new(1);
    for &k in kinds {
        g.insert_agent(k, 0, Status::Waiting);
    }
    for &(a, b) in edges {
        g.add_edge(a, b);
    }
    g
}

#[test]
fn max_chains_beats_greedy_on_adversarial_instance() {
    use AgentType::*;
    // new = 1 (H). Greedy takes H agent 2 and stops; the best path goes
    // through E agent 3 to H agents 4 and 5.
    let g = build(&[H, H, E, H, H], &[(0, 1), (1, 2), (1, 3), (3, 4), (4, 5)]);
    let mut rng = replica_rng(1, 0);
    for _ in 0..20 {
        let local = find_chain_local(&g, 1, &mut rng).unwrap();
        assert_eq!(local.agents, vec![0, 1, 2]);
    }
    let (best, _) = find_chain_max(&g, 1, DEFAULT_SEARCH_BUDGET).unwrap();
    let best = best.unwrap();
    assert_eq!(best.agents, vec![0, 1, 3, 4, 5]);
    assert_eq!((best.h_count, best.e_count), (3, 1));
    assert_eq!(best.score(), (3, 4));
}

#[test]
fn max_chains_reports_budget_exhaustion() {
    let n = 14;
    let kinds = vec![AgentType::H; n];
    let mut edges = vec![(0, 1)];
    for a in 1..=n as u64 {
        for b in 1..=n as u64 {
            if a != b {
                edges.push((a, b));
            }
        }
    }
    let g = build(&kinds, &edges);
    assert!(matches!(
        find_chain_max(&g, 1, 5),
        Err(Error::SearchBudgetExceeded(5))
    ));
    let (best, _) = find_chain_max(&g, 1, DEFAULT_SEARCH_BUDGET).unwrap();
    assert_eq!(best.unwrap().len(), n);
}

/// Best `(H receivers, receivers)` and the lexicographically smallest path
/// attaining it, by plain enumeration in increasing id order.
fn brute_best(g: &CompatibilityGraph, new: AgentId) -> Option<((usize, usize), Vec<AgentId>)> {
    fn go(
        g: &CompatibilityGraph,
        path: &mut Vec<AgentId>,
        h: usize,
        best: &mut ((usize, usize), Vec<AgentId>),
    ) {
        if (h, path.len()) > best.0 {
            *best = ((h, path.len()), path.clone());
        }
        let cur = *path.last().unwrap();
        let mut next: Vec<_> = g
            .out_neighbors(cur)
            .filter(|j| g.is_waiting(*j) && !path.contains(j))
            .collect();
        next.sort_unstable();
        for j in next {
            path.push(j);
            go(g, path, h + (g.kind(j) == AgentType::H) as usize, best);
            path.pop();
        }
    }
    if !g.bridges().any(|b| g.has_edge(b, new)) {
        return None;
    }
    let mut best = ((0, 0), Vec::new());
    go(
        g,
        &mut vec![new],
        (g.kind(new) == AgentType::H) as usize,
        &mut best,
    );
    Some(best)
}

fn check_path(g: &CompatibilityGraph, path: &ChainPath) {
    assert!(g.bridges().any(|b| b == path.bridge()));
    for w in path.agents.windows(2) {
        assert!(g.has_edge(w[0], w[1]));
    }
    let distinct: HashSet<_> = path.agents.iter().collect();
    assert_eq!(distinct.len(), path.agents.len());
    let h = path.agents[1..]
        .iter()
        .filter(|&&a| g.kind(a) == AgentType::H)
        .count();
    assert_eq!((h, path.len() - h), (path.h_count, path.e_count));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn max_chains_matches_exhaustive_search(
        seed in any::<u64>(),
        n in 1usize..12,
        into_h in 0.05f64..0.6,
        into_e in 0.05f64..0.9,
    ) {
        let mut rng = replica_rng(seed, 0);
        let kinds: Vec<_> = (0..n).map(|_| if rng.gen::<bool>() { AgentType::H } else { AgentType::E }).collect();
        let mut g = build(&kinds, &[]);
        for a in 1..=n as u64 {
            for b in 1..=n as u64 {
                let density = if kinds[b as usize - 1] == AgentType::H { into_h } else { into_e };
                if a != b && rng.gen::<f64>() < density {
                    g.add_edge(a, b);
                }
            }
        }
        g.add_edge(0, 1);
        let (best, _) = find_chain_max(&g, 1, DEFAULT_SEARCH_BUDGET).unwrap();
        let best = best.unwrap();
        check_path(&g, &best);
        let (score, path) = brute_best(&g, 1).unwrap();
        prop_assert_eq!(best.score(), score);
        prop_assert_eq!(&best.agents[1..], &path[..]);
        let local = find_chain_local(&g, 1, &mut rng).unwrap();
        check_path(&g, &local);
        prop_assert!(local.score() <= best.score());
    }
}

#[test]
fn bilateral_priority_is_respected() {
    use AgentType::*;
    // Arrival 3 (H) forms 2-cycles with H agent 1 and E agent 2.
    let g = build(&[H, E, H], &[(3, 1), (1, 3), (3, 2), (2, 3)]);
    let mut rng = replica_rng(2, 0);
    assert_eq!(
        find_bilateral_partner(&g, 3, Priority::HFirst, &mut rng),
        Some(1)
    );
    assert_eq!(
        find_bilateral_partner(&g, 3, Priority::EFirst, &mut rng),
        Some(2)
    );
    let g = build(&[H, E, H], &[(3, 1), (3, 2), (2, 3)]);
    assert_eq!(
        find_bilateral_partner(&g, 3, Priority::HFirst, &mut rng),
        Some(2)
    );
    let g = build(&[H, E, H], &[(3, 1), (2, 3)]);
    assert_eq!(
        find_bilateral_partner(&g, 3, Priority::HFirst, &mut rng),
        None
    );
}

#[test]
fn bridges_lose_in_edges_and_departed_agents_vanish() {
    use AgentType::*;
    let mut g = build(&[H, H, E], &[(0, 1), (1, 2), (2, 1), (3, 1), (1, 3)]);
    g.make_bridge(1);
    assert_eq!(g.status(1), Status::Bridge);
    assert_eq!(g.in_neighbors(1).count(), 0);
    assert!(g.check_bridges_idle().is_err());
    g.depart(2);
    assert_eq!(g.status(2), Status::Departed);
    assert!(!g.has_edge(1, 2) && !g.has_edge(2, 1));
    assert_eq!(g.waiting().collect::<Vec<_>>(), vec![3]);
    assert!(g.check_bridges_idle().is_err());
    g.depart(3);
    g.check_bridges_idle().unwrap();
    g.check_no_two_cycles().unwrap();
}

#[test]
fn coin_audit_rejects_double_sampling() {
    let p = mp(1.0, 2.0, 0.2, 0.5, 1);
    let mut g = CompatibilityGraph::new(1).with_coin_audit();
    let mut rng = replica_rng(3, 0);
    for t in 0..50 {
        g.arrive(
            if t % 3 == 0 {
                AgentType::E
            } else {
                AgentType::H
            },
            t,
            &p,
            &mut rng,
        )
        .unwrap();
    }
}

#[test]
fn replicas_keep_structural_invariants() {
    let p = mp(1.0, 2.0, 0.1, 0.5, 2);
    let rc = RunControls::new(4_000, 17);
    let config = GraphConfig {
        check_invariants: true,
        audit_coins: true,
        compare_local: true,
        ..GraphConfig::default()
    };
    for policy in [
        GraphPolicy::BilateralH,
        GraphPolicy::BilateralE,
        GraphPolicy::Chain,
        GraphPolicy::ChainHat,
        GraphPolicy::ChainMax,
    ] {
        let s = run_graph_replica(policy, &p, &rc, 0, &config).unwrap();
        assert!(s.summary.mean_h > 0.0);
        assert_eq!(s.comparison_violations, 0);
        let again = run_graph_replica(policy, &p, &rc, 0, &config).unwrap();
        assert_eq!(s, again);
    }
}

#[test]
fn graph_engine_agrees_with_counts_engine() {
    let p = mp(1.0, 2.0, 0.1, 0.5, 1);
    let rc = RunControls {
        replicas: 4,
        ..RunControls::new(100_000, 31)
    };
    let config = GraphConfig {
        check_invariants: false,
        ..GraphConfig::default()
    };
    for (gp, cp) in [
        (GraphPolicy::BilateralH, PolicyKind::BilateralH),
        (GraphPolicy::BilateralE, PolicyKind::BilateralE),
        (GraphPolicy::Chain, PolicyKind::Chain),
        (GraphPolicy::ChainHat, PolicyKind::ChainHat),
    ] {
        let graph = run_graph_replicas(gp, &p, &rc, &config).unwrap();
        let counts = run_replicas(cp, &p, &rc).unwrap();
        let k = rc.replicas as f64;
        let gm = graph.iter().map(|s| s.summary.mean_h).sum::<f64>() / k;
        let gse = graph
            .iter()
            .map(|s| s.summary.se_mean_h.powi(2))
            .sum::<f64>()
            .sqrt()
            / k;
        let cm = counts.iter().map(|s| s.mean_h).sum::<f64>() / k;
        let cse = counts
            .iter()
            .map(|s| s.se_mean_h.powi(2))
            .sum::<f64>()
            .sqrt()
            / k;
        assert!(
            (gm - cm).abs() <= 3.0 * (gse * gse + cse * cse).sqrt(),
            "{}: graph {gm} +- {gse}, counts {cm} +- {cse}",
            gp.name()
        );
    }
}

#[test]
fn direct_waits_agree_with_little_law() {
    let p = mp(1.0, 2.0, 0.1, 0.5, 1);
    let rc = RunControls::new(200_000, 8);
    let config = GraphConfig {
        check_invariants: false,
        ..GraphConfig::default()
    };
    for policy in [GraphPolicy::BilateralH, GraphPolicy::Chain] {
        let s = run_graph_replica(policy, &p, &rc, 0, &config).unwrap();
        let se =
            (s.direct_w_h_se.powi(2) + s.summary.se_mean_h.powi(2) / p.lambda_h.powi(2)).sqrt();
        assert!(
            (s.direct_w_h - s.summary.w_h).abs() <= 3.0 * se,
            "{}: {} vs {} (se {se})",
            policy.name(),
            s.direct_w_h,
            s.summary.w_h
        );
        assert!(s.direct_w_e > 0.0);
    }
}
