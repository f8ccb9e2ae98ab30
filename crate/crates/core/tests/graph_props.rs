use gfvl::graph::{self, Topology, TopologyKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 1_000_000;

fn small_topologies() -> Vec<(String, Topology)> {
    let mut out = Vec::new();
    for k in 2..=6 {
        for kind in [TopologyKind::Star, TopologyKind::Ring, TopologyKind::Complete] {
            if kind == TopologyKind::Ring && k < 3 {
                continue;
            }
            out.push((format!("{kind} K={k}"), Topology::build(kind, k).unwrap()));
        }
    }
    out.push((
        "path K=4".into(),
        Topology::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
    ));
    out
}

#[test]
fn mh_transition_frequencies_match_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, t) in small_topologies() {
        for cur in 0..t.node_count() {
            let p = t.transition_probabilities(cur);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut counts = vec![0usize; t.node_count()];
            for _ in 0..DRAWS {
                counts[t.mh_step(cur, &mut rng)] += 1;
            }
            for (j, (&c, &pj)) in counts.iter().zip(&p).enumerate() {
                let freq = c as f64 / DRAWS as f64;
                if pj == 0.0 {
                    assert_eq!(c, 0, "{name}: {cur}->{j} has zero probability");
                    continue;
                }
                let sigma = (pj * (1.0 - pj) / DRAWS as f64).sqrt();
                assert!(
                    (freq - pj).abs() <= 3.0 * sigma,
                    "{name}: {cur}->{j} freq {freq} vs {pj} (sigma {sigma})"
                );
            }
        }
    }
}

#[test]
fn detailed_balance_under_uniform_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (name, t) in small_topologies() {
        let k = t.node_count();
        // Exact: uniform π and symmetric flows.
        for i in 0..k {
            let pi = t.transition_probabilities(i);
            for j in 0..k {
                let pj = t.transition_probabilities(j);
                assert!((pi[j] - pj[i]).abs() < 1e-15, "{name}: P({i},{j}) != P({j},{i})");
            }
        }
        // Empirical flows along one long walk.
        let trace = graph::walk(&t, DRAWS + 1, &mut rng);
        assert!(trace.is_valid_for(&t));
        let mut flow = vec![vec![0usize; k]; k];
        for w in trace.nodes.windows(2) {
            flow[w[0]][w[1]] += 1;
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let (a, b) = (flow[i][j] as f64, flow[j][i] as f64);
                let sigma = (a + b).sqrt().max(1.0);
                assert!((a - b).abs() <= 3.0 * sigma, "{name}: flow {i}->{j} {a} vs {j}->{i} {b}");
            }
        }
    }
}

#[test]
fn complete_graph_cover_and_hitting_formulas() {
    assert!((graph::complete_cover_steps(10) - 25.460_714_285_714_286).abs() < 1e-12);
    assert!((graph::complete_hitting_slots(10) - 9.1).abs() < 1e-12);
    assert!((graph::complete_cover_steps(2) - 1.0).abs() < 1e-15);
}

fn connected_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..9).prop_flat_map(|k| {
        // A random spanning tree plus extra edges keeps the graph connected.
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), k - 1);
        let extra = proptest::collection::vec((0..k, 0..k), 0..10);
        (Just(k), parents, extra).prop_map(|(k, parents, extra)| {
            let mut edges: Vec<(usize, usize)> =
                parents.iter().enumerate().map(|(i, p)| (i + 1, p.index(i + 1))).collect();
            edges.extend(extra.into_iter().filter(|(u, v)| u != v));
            (k, edges)
        })
    })
}

proptest! {
    #[test]
    fn random_graphs_give_valid_walks((k, edges) in connected_edges(), seed in any::<u64>()) {
        let t = Topology::from_edges(k, &edges).unwrap();
        for node in 0..k {
            let p = t.transition_probabilities(node);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            for (j, &pj) in p.iter().enumerate() {
                if j != node && pj > 0.0 {
                    prop_assert!(t.is_adjacent(node, j));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = graph::walk(&t, 200, &mut rng);
        prop_assert!(trace.is_valid_for(&t));
    }

    #[test]
    fn edge_list_round_trip((k, edges) in connected_edges()) {
        let t = Topology::from_edges(k, &edges).unwrap();
        let text: String = t.edges().iter().map(|(u, v)| format!("{u} {v}\n")).collect();
        let back = Topology::parse_edge_list(&text).unwrap();
        prop_assert_eq!(back.edges(), t.edges());
    }
}
