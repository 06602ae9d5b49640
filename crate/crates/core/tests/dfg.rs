mod common;

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use common::random_design;
use proptest::prelude::*;
use tguard_core::dfg::{build_graph, encode_features, extract, normalize, CircuitGraph, NodeKind, Vocabulary};
use tguard_core::fixtures::synthetic_core;
use tguard_core::verilog::{elaborate, SourceUnit};

fn graph(seed: u64) -> CircuitGraph {
    build_graph(&elaborate(&SourceUnit::single("rand.v", random_design(seed), "top")).unwrap()).unwrap()
}

/// Component count by breadth-first flood fill over undirected edges.
fn flood_components(g: &CircuitGraph) -> usize {
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    count
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialization_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(graph(seed).to_json(), graph(seed).to_json());
    }

    #[test]
    fn exactly_one_component(seed in any::<u64>()) {
        prop_assert_eq!(flood_components(&graph(seed)), 1);
    }

    #[test]
    fn signals_are_unique_and_round_trip(seed in any::<u64>()) {
        let g = graph(seed);
        let mut seen = BTreeSet::new();
        for n in g.nodes.iter().filter(|n| n.kind.is_signal()) {
            prop_assert!(seen.insert(n.label.clone()), "duplicate signal {}", n.label);
        }
        let back = CircuitGraph::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(&back, &g);
    }

    #[test]
    fn normalize_changes_nothing(seed in any::<u64>()) {
        let g = graph(seed);
        prop_assert_eq!(normalize(&g).unwrap(), g);
    }

    #[test]
    fn feature_rows_match_nodes(seed in any::<u64>()) {
        let g = graph(seed);
        let vocab = Vocabulary::standard();
        let f = encode_features(&g, &vocab);
        prop_assert_eq!(f.rows, g.node_count());
        prop_assert_eq!(f.data.len(), f.rows * f.dim);
    }

    #[test]
    fn kept_component_holds_an_output(seed in any::<u64>()) {
        let g = graph(seed);
        prop_assert!(g.nodes.iter().any(|n| n.kind == NodeKind::Output));
    }
}

#[test]
fn clean_corpus_features_match_nodes() {
    let vocab = Vocabulary::standard();
    for d in tguard_core::inject::CleanDesign::load_dir(common::clean_dir()).unwrap() {
        let (g, _) = extract(&d.source).unwrap();
        assert_eq!(encode_features(&g, &vocab).rows, g.node_count(), "{}", d.name);
        assert_eq!(flood_components(&g), 1, "{}", d.name);
    }
}

#[test]
fn large_design_is_fast_and_stable() {
    let src = SourceUnit::single("core.v", synthetic_core(52), "synth_core");
    let t = Instant::now();
    let (a, stats) = extract(&src).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0);
    assert!((1500..=2500).contains(&stats.nodes), "{} nodes", stats.nodes);
    assert_eq!(extract(&src).unwrap().0.to_json(), a.to_json());
}
