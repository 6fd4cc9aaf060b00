mod common;

use bpex_core::explain::integrated_gradients;
use bpex_core::gnn::{Activation, EdgeWeightedView, GnnModel, TargetNeighborhood};
use bpex_core::{build_saliency, edge_gradients, SaliencyMethod};
use rand::Rng;

use common::*;

#[test]
fn gradients_match_central_differences() {
    let summary = gradient_checks(21, 30, &[Activation::Relu, Activation::Identity]);
    assert!(summary.checked > 1000);
    assert!(summary.mismatches.is_empty(), "{:#?}", summary.mismatches);
}

#[test]
fn target_neighborhood_gradients_match_full_graph() {
    let mut r = rng(4);
    for seed in 0..10 {
        let graph = random_graph(&mut r, 40, 3, 0.08);
        let priors = random_field(&mut r, 40, 3);
        let model = GnnModel::new(3, 5, 2, seed);
        let target = r.random_range(0..40);
        let posterior = random_distribution(&mut r, 3);
        let mut targets = priors.clone();
        targets.set(target, posterior.clone());
        let view = EdgeWeightedView::new(&graph);
        let full = bpex_core::gnn::loss_and_gradients(&model, &view, &priors, &targets, &[target]).unwrap();
        let local = edge_gradients(&model, &view, &priors, target, &posterior);
        for e in 0..graph.edge_count() {
            let l = local.get(&e).copied().unwrap_or(0.0);
            assert!(close(full.edges[e], l, 1e-10, 1e-15), "edge {e}: {} vs {l}", full.edges[e]);
        }
    }
}

#[test]
fn edges_outside_receptive_field_have_zero_gradient() {
    // Path 0-1-2-3-4-5. Two layers at node 0 read edge (0,1) and, through node 1, edge (1,2).
    let edges: Vec<(usize, usize)> = (0..5).map(|i| (i, i + 1)).collect();
    let graph = bpex_core::Graph::from_edges(6, 2, edges).unwrap().0;
    let mut r = rng(1);
    let priors = random_field(&mut r, 6, 2);
    let model = GnnModel::new(2, 4, 2, 9);
    let grads = edge_gradients(&model, &EdgeWeightedView::new(&graph), &priors, 0, &random_distribution(&mut r, 2));
    for e in 2..5 {
        assert_eq!(grads.get(&e).copied().unwrap_or(0.0), 0.0, "edge {e}");
    }
    assert!(grads.get(&0).copied().unwrap_or(0.0) != 0.0);
}

#[test]
fn integrated_gradients_are_complete() {
    // Σ_e IG_e ≈ L(a) − L(0) up to the Riemann-sum error, which shrinks as 1/m.
    let mut r = rng(13);
    for seed in 0..5 {
        let graph = random_graph(&mut r, 25, 3, 0.15);
        let priors = random_field(&mut r, 25, 3);
        let model = GnnModel::new(3, 4, 2, seed);
        let target = r.random_range(0..25);
        let posterior = random_distribution(&mut r, 3);
        let view = EdgeWeightedView::new(&graph);
        let hood = TargetNeighborhood::new(&graph, &priors, target, 2);
        let ones = hood.local_weights(&view);
        let zeros = vec![0.0; ones.len()];
        let delta = hood.loss(&model, &ones, &posterior) - hood.loss(&model, &zeros, &posterior);
        let mut prev_err = f64::INFINITY;
        for steps in [100, 1000, 20000] {
            let ig = integrated_gradients(&model, &view, &priors, target, &posterior, steps).unwrap();
            let sum: f64 = ig.values().sum();
            let err = (sum - delta).abs();
            assert!(err <= prev_err + 1e-12, "seed {seed} steps {steps}: error grew");
            prev_err = err;
        }
        assert!(prev_err <= 1e-3 * delta.abs().max(1e-3), "seed {seed}: completeness error {prev_err} for delta {delta}");
    }
}

#[test]
fn one_step_ig_equals_plain_saliency() {
    let mut r = rng(17);
    let graph = random_graph(&mut r, 30, 3, 0.1);
    let priors = random_field(&mut r, 30, 3);
    let model = GnnModel::new(3, 6, 2, 2);
    let view = EdgeWeightedView::new(&graph);
    let post = random_distribution(&mut r, 3);
    for target in [0, 7, 19] {
        let sm = build_saliency(&model, &view, &priors, target, &post, SaliencyMethod::Sm, 0).unwrap();
        let ig = build_saliency(&model, &view, &priors, target, &post, SaliencyMethod::Ig, 1).unwrap();
        for e in 0..graph.edge_count() {
            assert!(close(sm.score(e), ig.score(e), 1e-12, 1e-300));
        }
        assert!(sm.scores.values().all(|s| *s >= 0.0 && s.is_finite()));
    }
}
