mod common;

use std::collections::BTreeSet;

use common::{co_membership, dense_modularity, graph_modularity, random_graph, random_labels};
use echoscope::community::{
    aggregate_graph, filter_communities, louvain, louvain_observed, modularity, weighted_modularity,
    DropReason, WeightedGraph,
};
use echoscope::graph::{UndirectedGraph, UserId};
use echoscope::synth::{nmi, planted_partition_graph, PlantedPartitionSpec};
use echoscope::{LouvainConfig, Partition};
use proptest::prelude::*;
use rand::Rng;

fn ids(xs: &[u64]) -> Vec<UserId> {
    xs.iter().copied().map(UserId).collect()
}

fn dense_weighted(g: &WeightedGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, w) in g.neighbors(i) {
            row[j] = w;
        }
        row[i] = 2.0 * g.self_loop(i);
    }
    a
}

#[test]
fn spot_values() {
    let g = common::two_clique_bridge();
    let all = Partition::from_communities(vec![g.nodes().to_vec()]).unwrap();
    assert_eq!(modularity(&g, &all, 1.0).unwrap(), 0.0);

    let g = UndirectedGraph::from_edges([], [(UserId(1), UserId(2)), (UserId(3), UserId(4))]);
    let p = Partition::from_communities(vec![ids(&[1, 2]), ids(&[3, 4])]).unwrap();
    assert_eq!(modularity(&g, &p, 1.0).unwrap(), 0.5);

    let g = UndirectedGraph::from_edges(
        [],
        [(UserId(1), UserId(2)), (UserId(2), UserId(3)), (UserId(1), UserId(3))],
    );
    let q = modularity(&g, &Partition::singletons(g.nodes()), 1.0).unwrap();
    assert_eq!(q, -1.0 / 3.0);
}

#[test]
fn direct_modularity_matches_dense_oracle() {
    let mut rng = common::rng(21);
    for round in 0..60 {
        let n = rng.random_range(5..80);
        let density = rng.random_range(0.05..0.5);
        let g = random_graph(&mut rng, n, density);
        if g.edge_count() == 0 {
            continue;
        }
        let k = rng.random_range(1..8);
        let labels = random_labels(&mut rng, n, k);
        let p = Partition::from_labels(g.nodes(), &labels);
        for gamma in [0.5, 1.0, 2.0] {
            let got = modularity(&g, &p, gamma).unwrap();
            let want = graph_modularity(&g, &labels, gamma);
            assert!((got - want).abs() < 1e-10, "round {round}: {got} vs {want}");
        }
    }
}

#[test]
fn incremental_gain_matches_full_recompute() {
    let mut rng = common::rng(1);
    let mut checked = 0usize;
    for round in 0..100 {
        let n = rng.random_range(10..=200);
        let avg = rng.random_range(2.0..10.0);
        let g = random_graph(&mut rng, n, (avg / n as f64).min(1.0));
        if g.edge_count() == 0 {
            continue;
        }
        let cfg = LouvainConfig {
            seed: round,
            resolution: [0.5, 1.0, 1.5][round as usize % 3],
            ..Default::default()
        };
        let mut worst = 0.0f64;
        louvain_observed(&g, &cfg, |level, labels, mv| {
            let before = weighted_modularity(level, labels, cfg.resolution).unwrap();
            let mut after_labels = labels.to_vec();
            after_labels[mv.node] = mv.to;
            let after = weighted_modularity(level, &after_labels, cfg.resolution).unwrap();
            worst = worst.max(((after - before) - mv.gain).abs());
            checked += 1;
        })
        .unwrap();
        assert!(worst < 1e-10, "round {round}: drift {worst}");
    }
    assert!(checked > 1000);
}

#[test]
fn weighted_level_modularity_matches_dense_oracle() {
    let mut rng = common::rng(4);
    for _ in 0..20 {
        let n = rng.random_range(10..60);
        let g = random_graph(&mut rng, n, 0.15);
        if g.edge_count() == 0 {
            continue;
        }
        let labels = random_labels(&mut rng, n, 6);
        let p = Partition::from_labels(g.nodes(), &labels);
        let agg = aggregate_graph(&g, &p).unwrap();
        let coarse = random_labels(&mut rng, agg.node_count(), 3);
        let got = weighted_modularity(&agg, &coarse, 1.0).unwrap();
        let want = dense_modularity(&dense_weighted(&agg), &coarse, 1.0);
        assert!((got - want).abs() < 1e-10);
    }
}

#[test]
fn modularity_survives_aggregation() {
    let mut rng = common::rng(9);
    for _ in 0..50 {
        let n = rng.random_range(5..100);
        let g = random_graph(&mut rng, n, 0.1);
        if g.edge_count() == 0 {
            continue;
        }
        let k = rng.random_range(1..10);
        let labels = random_labels(&mut rng, n, k);
        let p = Partition::from_labels(g.nodes(), &labels);
        let agg = aggregate_graph(&g, &p).unwrap();
        let singles: Vec<usize> = (0..agg.node_count()).collect();
        let via_agg = weighted_modularity(&agg, &singles, 1.0).unwrap();
        let direct = modularity(&g, &p, 1.0).unwrap();
        assert!((via_agg - direct).abs() < 1e-10);
    }
}

#[test]
fn aggregation_matches_edge_tally() {
    let mut rng = common::rng(30);
    for _ in 0..20 {
        let g = random_graph(&mut rng, 30, 0.2);
        let labels = random_labels(&mut rng, 30, 5);
        let p = Partition::from_labels(g.nodes(), &labels);
        let agg = aggregate_graph(&g, &p).unwrap();
        let k = p.len();
        let mut tally = vec![vec![0.0; k]; k];
        for (a, b) in g.edges() {
            let (ca, cb) = (p.community_of(a).unwrap(), p.community_of(b).unwrap());
            tally[ca][cb] += 1.0;
            if ca != cb {
                tally[cb][ca] += 1.0;
            }
        }
        assert_eq!(agg.node_count(), k);
        assert_eq!(agg.total_weight(), g.edge_count() as f64);
        for c in 0..k {
            for d in 0..k {
                assert_eq!(agg.edge_weight(c, d), tally[c][d], "({c}, {d})");
            }
            let deg: usize = p.members(c).iter().map(|&u| g.degree(g.index_of(u).unwrap())).sum();
            assert_eq!(agg.degree(c), deg as f64);
        }
    }
}

#[test]
fn trivial_aggregations() {
    let g = common::two_clique_bridge();
    let single = aggregate_graph(&g, &Partition::singletons(g.nodes())).unwrap();
    assert_eq!(single.node_count(), g.node_count());
    for (i, a) in g.nodes().iter().enumerate() {
        assert_eq!(single.self_loop(i), 0.0);
        for (j, b) in g.nodes().iter().enumerate() {
            let want = if g.has_edge(*a, *b) { 1.0 } else { 0.0 };
            if i != j {
                assert_eq!(single.edge_weight(i, j), want);
            }
        }
    }
    let all = Partition::from_communities(vec![g.nodes().to_vec()]).unwrap();
    let one = aggregate_graph(&g, &all).unwrap();
    assert_eq!(one.node_count(), 1);
    assert_eq!(one.self_loop(0), g.edge_count() as f64);
}

#[test]
fn two_cliques_match_exhaustive_optimum() {
    let g = common::two_clique_bridge();
    let a = common::adjacency(&g);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let all = common::set_partitions(10);
    assert_eq!(all.len(), 115_975);
    for labels in all {
        let q = dense_modularity(&a, &labels, 1.0);
        if q > best.0 + 1e-12 {
            best = (q, labels);
        }
    }
    let optimum = Partition::from_labels(g.nodes(), &best.1);
    for seed in 0..10 {
        let cfg = LouvainConfig {
            seed,
            ..Default::default()
        };
        let p = louvain(&g, &cfg).unwrap().into_partition();
        assert_eq!(co_membership(&p), co_membership(&optimum), "seed {seed}");
        assert!((p.modularity.unwrap() - best.0).abs() < 1e-12);
    }
}

#[test]
fn single_edge_joins() {
    let g = UndirectedGraph::from_edges([], [(UserId(1), UserId(2))]);
    let p = louvain(&g, &LouvainConfig::default()).unwrap().into_partition();
    assert_eq!(p.len(), 1);
    let singles = modularity(&g, &Partition::singletons(g.nodes()), 1.0).unwrap();
    assert_eq!(singles, -0.5);
    assert_eq!(p.modularity, Some(0.0));
}

#[test]
fn dendrogram_levels_never_lose_modularity() {
    let mut rng = common::rng(77);
    for seed in 0..30 {
        let n = rng.random_range(50..300);
        let g = random_graph(&mut rng, n, 6.0 / n as f64);
        if g.edge_count() == 0 {
            continue;
        }
        let d = louvain(&g, &LouvainConfig { seed, ..Default::default() }).unwrap();
        let qs: Vec<f64> = d.levels.iter().map(|l| l.modularity.unwrap()).collect();
        for w in qs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{qs:?}");
        }
        for level in &d.levels {
            let direct = modularity(&g, &level.partition, 1.0).unwrap();
            assert!((direct - level.modularity.unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn seeded_runs_repeat() {
    let mut rng = common::rng(2);
    let g = random_graph(&mut rng, 150, 0.05);
    let cfg = LouvainConfig { seed: 9, ..Default::default() };
    let a = louvain(&g, &cfg).unwrap().into_partition();
    let b = louvain(&g, &cfg).unwrap().into_partition();
    assert_eq!(a, b);
}

#[test]
fn higher_resolution_gives_more_communities() {
    let (g, _) = planted_partition_graph(&PlantedPartitionSpec {
        block_sizes: vec![40; 6],
        p_in: 0.3,
        p_out: 0.03,
        seed: 5,
        first_id: 0,
    })
    .unwrap();
    let count = |gamma: f64| {
        let cfg = LouvainConfig { resolution: gamma, ..Default::default() };
        louvain(&g, &cfg).unwrap().into_partition().len()
    };
    assert!(count(0.2) <= count(1.0));
    assert!(count(1.0) <= count(4.0));
}

#[test]
fn planted_partition_recovered() {
    let mut good = 0;
    for seed in 0..20 {
        let (g, truth) = planted_partition_graph(&PlantedPartitionSpec {
            block_sizes: vec![50; 4],
            p_in: 0.3,
            p_out: 0.02,
            seed,
            first_id: 0,
        })
        .unwrap();
        let cfg = LouvainConfig { seed, ..Default::default() };
        let p = louvain(&g, &cfg).unwrap().into_partition();
        if nmi(&p, &truth).unwrap() >= 0.95 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn filter_examples() {
    let big: Vec<UserId> = (0..12).map(UserId).collect();
    let small: Vec<UserId> = (100..103).map(UserId).collect();
    let p = Partition::from_communities(vec![big.clone(), small]).unwrap();
    let (kept, report) = filter_communities(&p, 10, &BTreeSet::new()).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept.members(0), &big[..]);
    assert_eq!(report.dropped.len(), 1);
    assert_eq!(report.dropped[0].reason, DropReason::TooSmall);

    let (same, report) = filter_communities(&p, 1, &BTreeSet::new()).unwrap();
    assert_eq!(same.communities(), p.communities());
    assert!(report.dropped.is_empty());

    let excluded: BTreeSet<UserId> = big.iter().copied().collect();
    let (kept, report) = filter_communities(&p, 1, &excluded).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(report.dropped[0].reason, DropReason::Excluded);
    assert_eq!(report.kept, vec![1]);
}

#[test]
fn partition_json_layout() {
    let p = Partition::from_communities(vec![ids(&[3, 1]), ids(&[2])])
        .unwrap()
        .with_score(1.0, Some(0.25));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    p.write_json(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["resolution"], 1.0);
    assert_eq!(v["modularity"], 0.25);
    assert_eq!(v["communities"][0]["id"], 0);
    assert_eq!(v["communities"][0]["size"], 2);
    assert_eq!(v["communities"][1]["members"], serde_json::json!([2]));
    assert_eq!(Partition::read_json(&path).unwrap(), p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn louvain_output_is_a_partition_no_worse_than_singletons(
        raw in proptest::collection::vec((0u64..40, 0u64..40), 1..200),
        seed in 0u64..1000,
    ) {
        let g = UndirectedGraph::from_edges([], raw.iter().map(|&(a, b)| (UserId(a), UserId(b))));
        prop_assume!(g.edge_count() > 0);
        let p = louvain(&g, &LouvainConfig { seed, ..Default::default() }).unwrap().into_partition();
        prop_assert_eq!(p.node_count(), g.node_count());
        for &u in g.nodes() {
            prop_assert!(p.community_of(u).is_some());
        }
        let q = modularity(&g, &p, 1.0).unwrap();
        let q0 = modularity(&g, &Partition::singletons(g.nodes()), 1.0).unwrap();
        prop_assert!(q >= q0 - 1e-12);
        prop_assert!(q <= 1.0);
        prop_assert!((q - p.modularity.unwrap()).abs() < 1e-10);
    }
}
