use latentgraph::canonical::{has_singleton_classes, threshold_decode, to_padded};
use latentgraph::experiments::{encode_sweep, randomization_sweep, traverse, TraversalSpec};
use latentgraph::graphgen::{assign_uniform_attribute, gen_graph, Dataset, GenParams, Graph, Record};
use latentgraph::metrics::{discretize, entropy, mig, mutual_information};
use latentgraph::model::{kl_divergence, GraphVae, LatentDistribution, LatentVector, ModelConfig};
use latentgraph::training::{checkpoint_bytes, parse_checkpoint, TrainConfig};
use proptest::prelude::*;

/// Backtracking isomorphism test, independent of the canonical ordering.
fn isomorphic(a: &Graph, b: &Graph) -> bool {
    if a.n() != b.n() || a.edge_count() != b.edge_count() {
        return false;
    }
    let mut da = a.degrees();
    let mut db = b.degrees();
    da.sort_unstable();
    db.sort_unstable();
    if da != db {
        return false;
    }
    fn extend(a: &Graph, b: &Graph, map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        let v = map.len();
        if v == a.n() {
            return true;
        }
        for w in 0..b.n() {
            if used[w] || a.degree(v) != b.degree(w) {
                continue;
            }
            if (0..v).all(|u| a.has_edge(u, v) == b.has_edge(map[u], w)) {
                map.push(w);
                used[w] = true;
                if extend(a, b, map, used) {
                    return true;
                }
                map.pop();
                used[w] = false;
            }
        }
        false
    }
    extend(a, b, &mut Vec::new(), &mut vec![false; b.n()])
}

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (0..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let len = pairs.len();
        proptest::collection::vec(any::<bool>(), len).prop_map(move |bits| {
            let edges = pairs.iter().zip(bits).filter(|(_, b)| *b).map(|(e, _)| *e);
            Graph::from_edges(n, edges).unwrap()
        })
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn small_model(use_attributes: bool) -> GraphVae {
    let cfg = ModelConfig {
        j_latent: 3,
        n_max: 8,
        gcn_layers: vec![4],
        encoder_dense_layers: vec![8],
        dense_decoder_layers: vec![8],
        param_dim: 2,
        use_attributes,
    };
    GraphVae::new(cfg, 13).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decode_of_padded_is_isomorphic(g in graph_strategy(8)) {
        let back = threshold_decode(&to_padded(&g, 8).unwrap(), 0.5).unwrap();
        prop_assert!(isomorphic(&g, &back));
    }

    #[test]
    fn canonical_form_ignores_labels((g, perm) in graph_strategy(8).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), permutation(n))
    })) {
        prop_assume!(has_singleton_classes(&g));
        prop_assert_eq!(to_padded(&g.permute(&perm), 8).unwrap(), to_padded(&g, 8).unwrap());
    }
}

proptest! {
    #[test]
    fn permutation_preserves_degree_multiset((g, perm) in graph_strategy(10).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), permutation(n))
    })) {
        let h = g.permute(&perm);
        let (mut a, mut b) = (g.degrees(), h.degrees());
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert_eq!(g.edge_count(), h.edge_count());
    }

    #[test]
    fn kl_is_nonnegative(mu in proptest::collection::vec(-5.0..5.0f64, 1..6), lv_seed in any::<u64>()) {
        let log_var: Vec<f64> = mu.iter().enumerate()
            .map(|(i, _)| ((lv_seed.rotate_left(i as u32 * 7) % 1000) as f64 / 100.0) - 5.0)
            .collect();
        let d = LatentDistribution { mu: mu.clone(), log_var };
        prop_assert!(kl_divergence(&d) >= 0.0);
        let zero = LatentDistribution { mu: vec![0.0; mu.len()], log_var: vec![0.0; mu.len()] };
        prop_assert_eq!(kl_divergence(&zero), 0.0);
    }

    #[test]
    fn mutual_information_bounds(pairs in proptest::collection::vec((0usize..5, 0usize..4), 2..200)) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let ab = mutual_information(&a, &b).unwrap();
        let ba = mutual_information(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= entropy(&a).min(entropy(&b)) + 1e-12);
    }

    #[test]
    fn mig_in_unit_interval_and_column_order_free(
        rows in proptest::collection::vec((any::<f64>().prop_map(|x| x.fract()), -3.0..3.0f64, -3.0..3.0f64, 1u8..6), 5..100),
    ) {
        let z: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1, r.2]).collect();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| vec![f64::from(r.3)]).collect();
        let rep = mig(&z, &v, 20).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.score));
        let swapped: Vec<Vec<f64>> = z.iter().map(|r| vec![r[2], r[0], r[1]]).collect();
        prop_assert_eq!(mig(&swapped, &v, 20).unwrap().score, rep.score);
        // relabel factor values bijectively
        let relabeled: Vec<Vec<f64>> = v.iter().map(|r| vec![[0.0, 9.0, 4.0, 7.0, 2.0, 5.0][r[0] as usize]]).collect();
        prop_assert!((mig(&z, &relabeled, 20).unwrap().score - rep.score).abs() < 1e-12);
    }

    #[test]
    fn binning_labels_are_in_range(xs in proptest::collection::vec(-1e6..1e6f64, 1..300), bins in 2usize..40) {
        prop_assert!(discretize(&xs, bins).iter().all(|&l| l < bins));
    }

    #[test]
    fn decoder_output_is_symmetric_and_bounded(z in proptest::collection::vec(-4.0..4.0f64, 3)) {
        let model = small_model(true);
        let s = model.decode(&LatentVector { z }).unwrap();
        for i in 0..8 {
            prop_assert_eq!(s.adj_at(i, i), 0.0);
            for j in 0..8 {
                prop_assert_eq!(s.adj_at(i, j), s.adj_at(j, i));
                if i != j {
                    prop_assert!(s.adj_at(i, j) > 0.0 && s.adj_at(i, j) < 1.0);
                }
            }
        }
        prop_assert!(s.mask.iter().chain(&s.attrs).all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn traversal_count_equals_steps(steps in 1usize..12, axis in 0usize..3) {
        let mut spec = TraversalSpec::new(axis, 3);
        spec.steps = steps;
        prop_assert_eq!(traverse(&small_model(false), &spec).unwrap().len(), steps);
    }

    #[test]
    fn zero_randomization_leaves_latents_unchanged(seed in any::<u64>(), level in 0.05..1.0f64) {
        let model = small_model(true);
        let records = (0..6u64)
            .map(|i| {
                let params = GenParams::Er { n: 1 + (i as usize) % 8, p: 0.5 };
                let g = gen_graph(&params, seed ^ i).unwrap();
                Record { graph: assign_uniform_attribute(&g, seed.wrapping_add(i)), params }
            })
            .collect();
        let d = Dataset::new(records);
        let res = randomization_sweep(&model, &d, &[0.0, level], 2, seed, 20).unwrap();
        for (w, dz) in res.delta_omega.iter().zip(&res.delta_z_abs) {
            if *w == 0.0 {
                prop_assert!(dz.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn encode_sweep_ignores_record_order(seed in any::<u64>(), perm in permutation(12)) {
        let model = small_model(false);
        let records: Vec<Record> = (0..12u64)
            .map(|i| {
                let params = GenParams::Er { n: 1 + (i as usize * 5) % 8, p: (i as f64) / 12.0 };
                Record { graph: gen_graph(&params, seed ^ i).unwrap(), params }
            })
            .collect();
        let shuffled: Vec<Record> = perm.iter().map(|&i| records[i].clone()).collect();
        let a = encode_sweep(&model, &Dataset::new(records), 20).unwrap();
        let b = encode_sweep(&model, &Dataset::new(shuffled), 20).unwrap();
        prop_assert_eq!(a.mig.score, b.mig.score);
    }

    #[test]
    fn generators_respect_structure(seed in any::<u64>(), n in 2usize..40, k2 in 1usize..5) {
        let ba = gen_graph(&GenParams::Ba { n, m: 1 }, seed).unwrap();
        prop_assert_eq!(ba.edge_count(), n - 1);
        // n - 1 edges and connected: a tree
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in ba.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let k = 2 * k2;
        prop_assume!(k < n);
        let sw = gen_graph(&GenParams::Sw { n, k, p_rewire: 0.0 }, seed).unwrap();
        prop_assert!(sw.degrees().iter().all(|&d| d == k));
    }

    #[test]
    fn jsonl_round_trip(g in graph_strategy(12), p in 0.0..1.0f64, attrs in any::<bool>()) {
        prop_assume!(g.n() >= 1);
        let g = if attrs { assign_uniform_attribute(&g, 3) } else { g };
        let rec = Record { params: GenParams::Er { n: g.n(), p }, graph: g };
        prop_assert_eq!(Record::from_json_line(&rec.to_json_line()).unwrap(), rec);
    }
}

#[test]
fn checkpoint_bytes_round_trip() {
    let model = small_model(true);
    let cfg = TrainConfig {
        n_max: 8,
        model: model.config.clone(),
        ..TrainConfig::default()
    };
    let bytes = checkpoint_bytes(&model.weights, &cfg).unwrap();
    let (weights, back) = parse_checkpoint(&bytes).unwrap();
    assert_eq!(weights.iter().collect::<Vec<_>>(), model.weights.iter().collect::<Vec<_>>());
    assert_eq!(back, cfg);
    assert_eq!(checkpoint_bytes(&weights, &back).unwrap(), bytes);
}
