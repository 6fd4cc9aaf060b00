mod common;

use std::collections::{BTreeMap, BTreeSet};

use bpex_core::explain::{label_coverage, SaliencyMap};
use bpex_core::gnn::{self, EdgeWeightedView, GnnModel, TrainConfig};
use bpex_core::priors::{PriorFitConfig, PriorInitConfig};
use bpex_core::{
    extract_subgraph, faithfulness, fit_prior_estimator, generate_sbm, init_priors, load_graph, make_split,
    random_walk_subgraph, run_bp, write_graph, BpConfig, FaithfulnessMode, Graph, GraphFiles, LoadOptions, ProbVector,
    SaliencyMethod, SbmParams, Split,
};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..30, 2usize..5, any::<u64>()).prop_map(|(n, c, seed)| random_graph(&mut rng(seed), n, c, 0.15))
}

fn arb_distribution(c: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.0f64..1.0, c).prop_filter_map("zero mass", ProbVector::from_weights)
}

fn random_saliency(graph: &Graph, target: usize, seed: u64) -> SaliencyMap {
    let mut r = rng(seed);
    let scores = (0..graph.edge_count())
        .map(|e| (e, if r.random_bool(0.15) { 0.0 } else { r.random_range(0.0..5.0) }))
        .collect();
    SaliencyMap { target, scores, method: SaliencyMethod::Sm }
}

fn is_connected(graph: &Graph, nodes: &[usize]) -> bool {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut seen = BTreeSet::from([nodes[0]]);
    let mut stack = vec![nodes[0]];
    while let Some(u) = stack.pop() {
        for &v in graph.neighbors(u) {
            if set.contains(&v) && seen.insert(v) {
                stack.push(v);
            }
        }
    }
    seen.len() == set.len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_files_round_trip(n in 1usize..40, c in 2usize..5, dim in 0usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n, c, 0.2);
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(r.random_range(0..c))).collect();
        let g = g.with_labels(labels).unwrap();
        let features: BTreeMap<usize, Vec<f64>> = if dim == 0 {
            BTreeMap::new()
        } else {
            let keep: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
            keep.into_iter().map(|i| (i, (0..dim).map(|_| r.random_range(-1e3..1e3)).collect())).collect()
        };
        let g = g.with_features(features, true).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let files = GraphFiles {
            edges: dir.path().join("edges.txt"),
            labels: dir.path().join("labels.txt"),
            features: (dim > 0).then(|| dir.path().join("features.txt")),
        };
        write_graph(&g, &files).unwrap();
        let loaded = load_graph(&files.edges, &files.labels, files.features.as_deref(), c, LoadOptions::default()).unwrap();
        prop_assert_eq!(loaded.graph.edges(), g.edges());
        prop_assert_eq!(loaded.graph.labels(), g.labels());
        prop_assert_eq!(loaded.graph.feature_map(), g.feature_map());
        prop_assert_eq!(loaded.stats.warnings(), 0);
    }

    #[test]
    fn bp_posteriors_are_distributions(g in arb_graph(), seed in any::<u64>(), eps in 0.3f64..1.0) {
        let priors = random_field(&mut rng(seed), g.node_count(), g.class_count());
        let cfg = BpConfig { epsilon: eps, ..Default::default() };
        let res = run_bp(&g, &priors, &cfg).unwrap();
        prop_assert!(res.posteriors.vectors().iter().all(|p| p.is_on_simplex()));
        prop_assert!(res.amplitude_trace.iter().all(|a| a.is_finite() && *a >= 0.0));
        prop_assert!(res.iterations_run <= cfg.max_iters);
    }

    #[test]
    fn extracted_subgraphs_are_connected_and_nested(g in arb_graph(), seed in any::<u64>()) {
        let target = seed as usize % g.node_count();
        let sal = random_saliency(&g, target, seed);
        let mut prev: Vec<usize> = Vec::new();
        for n_nodes in 1..=8 {
            let s = extract_subgraph(&g, &sal, n_nodes).unwrap();
            prop_assert_eq!(s.nodes[0], target);
            prop_assert!(s.size() <= n_nodes);
            prop_assert!(is_connected(&g, &s.nodes));
            prop_assert_eq!(s.selected_edges.len(), s.size() - 1);
            prop_assert!(s.selected_edges.iter().all(|e| sal.score(g.edge_id(e.edge.0, e.edge.1).unwrap()) > 0.0));
            prop_assert_eq!(&s.nodes[..prev.len()], &prev[..]);
            prev = s.nodes;
        }
    }

    #[test]
    fn extraction_ignores_score_scale(g in arb_graph(), seed in any::<u64>(), scale in prop::sample::select(vec![1e-3, 0.37, 3.7, 1e4])) {
        let target = seed as usize % g.node_count();
        let sal = random_saliency(&g, target, seed);
        let mut scaled = sal.clone();
        scaled.scores.values_mut().for_each(|v| *v *= scale);
        prop_assert_eq!(extract_subgraph(&g, &sal, 6).unwrap().nodes, extract_subgraph(&g, &scaled, 6).unwrap().nodes);
    }

    #[test]
    fn faithfulness_basics(p in arb_distribution(4), q in arb_distribution(4)) {
        for mode in [FaithfulnessMode::OneSided, FaithfulnessMode::Symmetric] {
            prop_assert_eq!(faithfulness(&p, &p, mode, 1e-6), 0.0);
            prop_assert!(faithfulness(&p, &q, mode, 1e-6) >= 0.0);
        }
        let a = faithfulness(&p, &q, FaithfulnessMode::Symmetric, 1e-6);
        let b = faithfulness(&q, &p, FaithfulnessMode::Symmetric, 1e-6);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn random_walks_are_connected(g in arb_graph(), seed in any::<u64>(), n_nodes in 1usize..7) {
        let target = seed as usize % g.node_count();
        let s = random_walk_subgraph(&g, target, n_nodes, seed).unwrap();
        prop_assert_eq!(s.nodes[0], target);
        prop_assert!(s.size() <= n_nodes);
        prop_assert!(is_connected(&g, &s.nodes));
        prop_assert_eq!(&s, &random_walk_subgraph(&g, target, n_nodes, seed).unwrap());
    }
}

#[test]
fn splits_are_disjoint_and_sized() {
    let params = SbmParams { n: 1000, class_count: 5, p_in: 0.02, p_out: 0.001, feature_dim: 0, feature_separation: 3.0 };
    let g = generate_sbm(&params, 1).unwrap();
    for ratio in [0.01, 0.02, 0.03] {
        let want = (ratio * 1000.0_f64).round() as usize;
        for seed in 0..100 {
            let s = make_split(&g, ratio, 200, seed).unwrap();
            assert_eq!(s.labeled.len(), want);
            assert_eq!(s.target.len(), 200);
            assert!(s.target.iter().all(|t| !s.labeled.contains(t)));
            assert!(s.target.windows(2).all(|w| w[0] < w[1]));
            let classes: BTreeSet<usize> = s.labeled.iter().map(|&i| g.label(i).unwrap()).collect();
            assert_eq!(classes.len(), 5, "ratio {ratio} seed {seed}");
        }
    }
}

#[test]
fn random_walk_first_step_is_uniform_on_a_star() {
    let leaves = 8;
    let edges: Vec<(usize, usize)> = (1..=leaves).map(|l| (0, l)).collect();
    let g = Graph::from_edges(leaves + 1, 2, edges).unwrap().0;
    let trials = 10_000;
    let mut counts = vec![0usize; leaves + 1];
    for seed in 0..trials {
        let s = random_walk_subgraph(&g, 0, 2, seed as u64).unwrap();
        counts[s.nodes[1]] += 1;
    }
    let p = 1.0 / leaves as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    for (leaf, &count) in counts.iter().enumerate().skip(1) {
        let f = count as f64 / trials as f64;
        assert!((f - p).abs() <= 3.0 * sigma, "leaf {leaf}: frequency {f}");
    }
}

#[test]
fn coverage_grows_with_subgraph_size() {
    let params = SbmParams { n: 400, class_count: 3, p_in: 0.03, p_out: 0.002, feature_dim: 0, feature_separation: 3.0 };
    let g = generate_sbm(&params, 2).unwrap();
    let split = make_split(&g, 0.05, 100, 2).unwrap();
    let mut prev = 0.0;
    for n_nodes in 1..=8 {
        let subs: Vec<_> = split
            .target
            .iter()
            .map(|&t| extract_subgraph(&g, &random_saliency(&g, t, t as u64), n_nodes).unwrap())
            .collect();
        let cov = label_coverage(&subs, &split).unwrap();
        assert!(cov >= prev);
        prev = cov;
    }
    assert!(prev > 0.0);
}

fn separable_two_class(scale: f64) -> (Graph, Split) {
    let mut r = rng(99);
    let n = 40;
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % 2)).collect();
    let features: BTreeMap<usize, Vec<f64>> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (i, vec![scale * (sign * r.random_range(1.0..3.0)), scale * r.random_range(-1.0..1.0)])
        })
        .collect();
    let g = Graph::from_edges(n, 2, Vec::new()).unwrap().0.with_labels(labels).unwrap().with_features(features, true).unwrap();
    let split = Split { labeled: (0..n).collect(), target: Vec::new(), ratio: 1.0, stratified: true };
    (g, split)
}

#[test]
fn feature_scaling_keeps_training_argmax() {
    let cfg = PriorFitConfig { max_iters: 2_000_000, tol: 1e-8, ..Default::default() };
    let (g1, split) = separable_two_class(1.0);
    let (est1, fit1) = fit_prior_estimator(&g1, &split, &cfg).unwrap();
    assert!(fit1.converged);
    for scale in [0.5, 2.0, 7.0] {
        let (g, _) = separable_two_class(scale);
        let (est, fit) = fit_prior_estimator(&g, &split, &cfg).unwrap();
        assert!(fit.converged, "scale {scale}: {fit:?}");
        for i in 0..g.node_count() {
            let a = est1.predict(g1.features(i).unwrap());
            let b = est.predict(g.features(i).unwrap());
            assert_eq!(a.argmax(), b.argmax(), "scale {scale} node {i}");
            assert_ne!(a, b);
        }
    }
}

fn sbm_training_setup() -> (Graph, bpex_core::PriorField, bpex_core::PriorField) {
    let params = SbmParams { n: 500, class_count: 3, p_in: 0.04, p_out: 0.002, feature_dim: 8, feature_separation: 3.0 };
    let g = generate_sbm(&params, 3).unwrap();
    let split = make_split(&g, 0.03, 200, 3).unwrap();
    let masked = g.restrict_features(split.labeled.iter().copied());
    let (est, _) = fit_prior_estimator(&masked, &split, &PriorFitConfig::default()).unwrap();
    let priors = init_priors(&masked, &split, Some(&est), &PriorInitConfig::default(), 3).unwrap();
    let post = run_bp(&g, &priors, &BpConfig::default()).unwrap().posteriors;
    (g, priors, post)
}

#[test]
fn training_on_sbm_beats_uniform_and_is_deterministic() {
    let (g, priors, post) = sbm_training_setup();
    let cfg = TrainConfig { max_epochs: 200, patience: 200, ..Default::default() };
    let view = EdgeWeightedView::new(&g);
    let init = GnnModel::new(3, cfg.hidden_dim, cfg.layers, 5);
    let a = gnn::train(init.clone(), &view, &priors, &post, &cfg).unwrap();
    let b = gnn::train(init, &view, &priors, &post, &cfg).unwrap();
    let best = a.loss_trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best < 3f64.ln(), "best loss {best}");
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_trace, b.loss_trace);
    // The returned parameters are the best ones seen.
    let all: Vec<usize> = (0..g.node_count()).collect();
    let final_loss = gnn::loss(&gnn::forward(&a.model, &view, &priors), &post, &all).unwrap();
    assert!((final_loss - best).abs() < 1e-12);
}
