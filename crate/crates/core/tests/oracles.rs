//! Numeric checks against independent oracles: closed forms, brute force,
//! Monte Carlo and finite differences computed here rather than by the
//! library.

use latentgraph::canonical::{bosam_order, has_singleton_classes, to_padded};
use latentgraph::experiments::encode_sweep;
use latentgraph::graphgen::{
    gen_dataset, gen_graph, randomize_attributes, GenParams, Graph, Interval, ParamRanges,
};
use latentgraph::metrics::{discretize, entropy, graph_stats, mutual_information, pearson};
use latentgraph::model::{kl_divergence, reparameterize, GraphVae, LatentDistribution, ModelConfig};
use latentgraph::numcore::{adam_step, AdamConfig, ParamStore, Tensor};
use latentgraph::rng::{derive_seed, rng_from};
use latentgraph::sampler::{rw_sample_nodes, walk_from, WalkConfig};
use latentgraph::training::{compute_loss, loss_and_grad, prepare_samples, TrainConfig};
use latentgraph::Family;
use rand::seq::SliceRandom;
use rand::Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn er_edge_count_mean_matches_analytic() {
    let (n, p, trials) = (10usize, 0.3, 10_000);
    let pairs = (n * (n - 1) / 2) as f64;
    let total: usize = (0..trials)
        .map(|s| gen_graph(&GenParams::Er { n, p }, s as u64).unwrap().edge_count())
        .sum();
    let mean = total as f64 / trials as f64;
    let sigma = (pairs * p * (1.0 - p) / trials as f64).sqrt();
    assert!((mean - 13.5).abs() < 3.0 * sigma, "mean {mean}, 3 sigma {}", 3.0 * sigma);
}

#[test]
fn half_randomization_changes_exactly_five_of_ten() {
    let g = gen_graph(&GenParams::Er { n: 10, p: 0.5 }, 3)
        .unwrap()
        .with_attrs(vec![0.25; 10])
        .unwrap();
    for seed in 0..1000 {
        let r = randomize_attributes(&g, 0.5, seed).unwrap();
        let changed = r
            .attrs()
            .unwrap()
            .iter()
            .zip(g.attrs().unwrap())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 5, "seed {seed}");
    }
}

#[test]
fn dataset_node_counts_are_uniform() {
    let d = gen_dataset(Family::Er, &ParamRanges::er_default(), 10_000, false, 11).unwrap();
    assert_eq!(d.len(), 10_000);
    assert!(d.records.iter().all(|r| r.graph.n() <= 24 && r.graph.n() >= 1));
    let mean = d.records.iter().map(|r| r.graph.n() as f64).sum::<f64>() / 10_000.0;
    // discrete uniform on 1..=24: variance (24^2 - 1) / 12
    let sigma = ((24.0f64 * 24.0 - 1.0) / 12.0 / 10_000.0).sqrt();
    assert!((mean - 12.5).abs() < 3.0 * sigma, "mean {mean}");
}

#[test]
fn unbiased_walk_on_k4_visits_uniformly() {
    let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let g = Graph::from_edges(4, edges).unwrap();
    let cfg = WalkConfig::default();
    let mut counts = [0usize; 4];
    let mut rng = rng_from(5);
    for _ in 0..10_000 {
        let start = rng.random_range(0..4);
        for v in walk_from(&g, start, &cfg, &mut rng) {
            counts[v] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let expect = total as f64 / 4.0;
    let sigma = (total as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - expect).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn random_walk_samples_are_degree_biased() {
    let g = gen_graph(&GenParams::Er { n: 1000, p: 0.01 }, 77).unwrap();
    let pop_avg = 2.0 * g.edge_count() as f64 / g.n() as f64;
    let cfg = WalkConfig::default();
    let mut biased = 0;
    for trial in 0..100u64 {
        let mut sum = 0.0;
        let mut count = 0.0;
        for s in 0..100u64 {
            for v in rw_sample_nodes(&g, &cfg, derive_seed(trial, s)).unwrap() {
                sum += g.degree(v) as f64;
                count += 1.0;
            }
        }
        if sum / count >= pop_avg {
            biased += 1;
        }
    }
    assert!(biased >= 90, "{biased} of 100 trials");
}

#[test]
fn kl_agrees_with_monte_carlo() {
    let d = LatentDistribution {
        mu: vec![0.0],
        log_var: vec![1.0],
    };
    let closed = kl_divergence(&d);
    assert!((closed - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-12);
    // E_q[log q(z) - log p(z)] with q = N(0, e), p = N(0, 1)
    let var = 1f64.exp();
    let draws = 1_000_000;
    let mut acc = 0.0;
    for i in 0..draws {
        let z = reparameterize(&d, i as u64).z[0];
        let log_q = -0.5 * (z * z / var + var.ln());
        let log_p = -0.5 * z * z;
        acc += log_q - log_p;
    }
    let mc = acc / draws as f64;
    assert!((mc - closed).abs() < 0.01 * closed, "mc {mc} closed {closed}");
}

#[test]
fn reparameterized_draws_have_prior_moments() {
    let d = LatentDistribution {
        mu: vec![0.0],
        log_var: vec![0.0],
    };
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|i| reparameterize(&d, i as u64).z[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var {var}");
}

#[test]
fn two_by_two_mutual_information() {
    let a = [0, 0, 0, 1, 1, 1];
    let b = [0, 0, 1, 0, 1, 1];
    let table = [[2.0, 1.0], [1.0, 2.0]];
    let mut oracle = 0.0;
    for row in table {
        for c in row {
            let pij: f64 = c / 6.0;
            oracle += pij * (pij / (0.5 * 0.5)).ln();
        }
    }
    let mi = mutual_information(&a, &b).unwrap();
    assert!((mi - oracle).abs() < 1e-12);
    assert!((mi - 0.0566).abs() < 5e-5);
}

#[test]
fn entropy_of_half_quarter_quarter() {
    let oracle = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
    let h = entropy(&[0, 0, 1, 2]);
    assert!((h - oracle).abs() < 1e-12);
    assert!((h - 1.0397).abs() < 5e-5);
}

#[test]
fn pearson_closed_form() {
    // deviations x: (-1, 0, 1), y: (-4/3, -1/3, 5/3)
    let oracle = 3.0 / (2.0f64 * 42.0 / 9.0).sqrt();
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    assert!((r - oracle).abs() < 1e-12);
    assert!((r - 0.9820).abs() < 5e-5);
}

#[test]
fn star_assortativity_by_brute_force() {
    let g = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
    // endpoint degree pairs in both directions
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            if g.has_edge(i, j) {
                xs.push(g.degree(i) as f64);
                ys.push(g.degree(j) as f64);
            }
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>().sqrt();
    let sy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>().sqrt();
    let oracle = cov / (sx * sy);
    let got = graph_stats(&g).unwrap().degree_assortativity;
    assert!((got - oracle).abs() < 1e-12);
    assert!((got + 1.0).abs() < 1e-12);
}

#[test]
fn uniform_sample_fills_bins_evenly() {
    let mut rng = rng_from(9);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels = discretize(&xs, 10);
    let mut counts = [0usize; 10];
    for l in labels {
        counts[l] += 1;
    }
    let sigma = (0.1 * 0.9 / n as f64).sqrt();
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 0.1).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn adam_matches_scalar_recurrence() {
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut store = ParamStore::new();
    store.insert("w", Tensor::scalar(0.0));
    let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=200 {
        let g = 2.0 * (w - 3.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        w -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);

        // d/dw (w - 3)^2 through the tape
        let mut tape = latentgraph::Tape::new();
        let p = tape.param(&store, "w").unwrap();
        let c = tape.constant(Tensor::scalar(-3.0));
        let d = tape.add(p, c).unwrap();
        let sq = tape.mul(d, d).unwrap();
        tape.backward(sq).unwrap().accumulate_into(&tape, &mut store);
        adam_step(&mut store, &cfg);
        assert!((store.get("w").unwrap().item() - w).abs() < 1e-12, "step {t}");
    }
    assert!((w - 3.0).abs() < 0.1);
}

#[test]
fn composed_loss_matches_finite_differences() {
    let model_cfg = ModelConfig {
        j_latent: 2,
        n_max: 4,
        gcn_layers: vec![3, 3],
        encoder_dense_layers: vec![5],
        dense_decoder_layers: vec![6, 7],
        param_dim: 2,
        use_attributes: true,
    };
    let cfg = TrainConfig {
        beta: 5.0,
        lambda_param: 1.0,
        n_max: 4,
        model: model_cfg.clone(),
        param_ranges: Some(vec![Interval::new(1.0, 4.0), Interval::new(0.0, 1.0)]),
        ..TrainConfig::default()
    };
    let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
        .unwrap()
        .with_attrs(vec![0.1, 0.7, 0.3, 0.9])
        .unwrap();
    let records = vec![
        (to_padded(&g, 4).unwrap(), GenParams::Er { n: 4, p: 0.6 }),
        (
            to_padded(&Graph::from_edges(3, [(0, 1)]).unwrap().with_attrs(vec![0.5; 3]).unwrap(), 4).unwrap(),
            GenParams::Er { n: 3, p: 0.2 },
        ),
    ];
    let seed = 21;
    let mut model = GraphVae::new(model_cfg, 4).unwrap();
    let samples = prepare_samples(&records, &cfg);
    let refs: Vec<_> = samples.iter().collect();
    loss_and_grad(&mut model, &refs, &cfg, seed).unwrap();
    let names: Vec<String> = model.weights.names().map(str::to_string).collect();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for name in &names {
        let analytic = model.weights.grad(name).unwrap().clone();
        for i in 0..analytic.len() {
            let mut probe = model.clone();
            probe.weights.get_mut(name).unwrap().data_mut()[i] += eps;
            let up = compute_loss(&probe, &records, &cfg, seed).unwrap().total;
            probe.weights.get_mut(name).unwrap().data_mut()[i] -= 2.0 * eps;
            let down = compute_loss(&probe, &records, &cfg, seed).unwrap().total;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn star_centre_is_first_under_every_labeling() {
    let star = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
    for perm in permutations(5) {
        let g = star.permute(&perm);
        assert_eq!(g.degree(bosam_order(&g)[0]), 4);
    }
    let path = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    for perm in permutations(3) {
        let g = path.permute(&perm);
        assert_eq!(bosam_order(&g)[0], perm[1]);
    }
}

#[test]
fn relabeled_singleton_class_graphs_encode_identically() {
    let mut rng = rng_from(31);
    let mut checked = 0;
    for seed in 0..200u64 {
        let g = gen_graph(&GenParams::Er { n: 8, p: 0.4 }, seed).unwrap();
        if !has_singleton_classes(&g) {
            continue;
        }
        let base = to_padded(&g, 8).unwrap();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut rng);
            assert_eq!(to_padded(&g.permute(&perm), 8).unwrap(), base, "seed {seed}");
        }
        checked += 1;
    }
    assert!(checked > 20, "only {checked} graphs had singleton classes");
}

#[test]
fn bce_of_half_is_ln2_per_counted_pair() {
    // all-zero weights make every decoder output sigmoid(0) = 0.5
    let model_cfg = ModelConfig {
        j_latent: 2,
        n_max: 2,
        gcn_layers: vec![2],
        encoder_dense_layers: vec![],
        dense_decoder_layers: vec![3],
        param_dim: 0,
        use_attributes: false,
    };
    let mut model = GraphVae::new(model_cfg.clone(), 0).unwrap();
    let names: Vec<String> = model.weights.names().map(str::to_string).collect();
    for n in names {
        model.weights.get_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let cfg = TrainConfig {
        beta: 0.0,
        lambda_param: 0.0,
        n_max: 2,
        model: model_cfg,
        ..TrainConfig::default()
    };
    let g = Graph::from_edges(2, [(0, 1)]).unwrap();
    let rec = vec![(to_padded(&g, 2).unwrap(), GenParams::Er { n: 2, p: 1.0 })];
    let loss = compute_loss(&model, &rec, &cfg, 0).unwrap();
    // one counted pair plus two mask entries, each ln 2
    assert!((loss.recon - 3.0 * 2f64.ln()).abs() < 1e-12, "{}", loss.recon);
}

#[test]
fn untrained_models_show_little_factor_alignment() {
    let data = gen_dataset(Family::Er, &ParamRanges::er_default(), 1000, false, 77).unwrap();
    let below = (0..10u64)
        .filter(|&s| {
            let model = GraphVae::new(ModelConfig::default(), derive_seed(5, s)).unwrap();
            encode_sweep(&model, &data, 20).unwrap().mig.score < 0.3
        })
        .count();
    assert!(below >= 9, "only {below} of 10 random initializations scored below 0.3");
}
