//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use bpex_core::gnn::{self, Activation, EdgeWeightedView, GnnModel};
use bpex_core::{Graph, NodeId, PriorField, ProbVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random labelled tree on `n` nodes (each node attaches to an earlier one).
pub fn random_tree(rng: &mut impl Rng, n: usize, class_count: usize) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let edges: Vec<(usize, usize)> = (1..n).map(|k| (order[k], order[rng.random_range(0..k)])).collect();
    Graph::from_edges(n, class_count, edges).unwrap().0
}

/// Erdős–Rényi graph.
pub fn random_graph(rng: &mut impl Rng, n: usize, class_count: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, class_count, edges).unwrap().0
}

pub fn random_distribution(rng: &mut impl Rng, class_count: usize) -> ProbVector {
    // Bounded away from zero so logs stay tame.
    let w: Vec<f64> = (0..class_count).map(|_| rng.random_range(0.05..1.0)).collect();
    ProbVector::from_weights(w).unwrap()
}

pub fn random_field(rng: &mut impl Rng, n: usize, class_count: usize) -> PriorField {
    let v = (0..n).map(|_| random_distribution(rng, class_count)).collect();
    PriorField::new(class_count, v).unwrap()
}

/// Exact marginals of `Π φ_i(c_i) Π_{(i,j)} ψ(c_i, c_j)` by enumerating every assignment.
pub fn brute_force_marginals(graph: &Graph, priors: &PriorField, epsilon: f64) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let c = graph.class_count();
    let psi = |a: usize, b: usize| if a == b { epsilon } else { (1.0 - epsilon) / (c - 1) as f64 };
    let mut marg = vec![vec![0.0; c]; n];
    let mut assign = vec![0usize; n];
    let total_states = c.pow(n as u32);
    for mut code in 0..total_states {
        for a in assign.iter_mut() {
            *a = code % c;
            code /= c;
        }
        let mut w = 1.0;
        for (i, &a) in assign.iter().enumerate() {
            w *= priors.get(i).value(a);
        }
        for &(u, v) in graph.edges() {
            w *= psi(assign[u], assign[v]);
        }
        for (i, &a) in assign.iter().enumerate() {
            marg[i][a] += w;
        }
    }
    for m in &mut marg {
        let z: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= z);
    }
    marg
}

/// A model at a generic point: fresh init plus noise on every parameter,
/// biases included, so no ReLU input sits exactly on its kink.
pub fn random_model(rng: &mut impl Rng, class_count: usize, hidden: usize, layers: usize) -> GnnModel {
    let mut model = GnnModel::new(class_count, hidden, layers, rng.random());
    for p in model.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    model
}

pub fn loss_with_weights(
    model: &GnnModel,
    graph: &Graph,
    weights: Vec<f64>,
    priors: &PriorField,
    targets: &PriorField,
    nodes: &[NodeId],
) -> f64 {
    let view = EdgeWeightedView::with_weights(graph, weights).unwrap();
    gnn::loss(&gnn::forward(model, &view, priors), targets, nodes).unwrap()
}

/// `|a - b| <= max(rel * max(|a|, |b|), floor)`
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(floor)
}

/// Signs of every ReLU input (SAGE layers, then the MLP hidden layer), from a
/// plain-loop forward pass written independently of the library's.
pub fn relu_input_signs(model: &GnnModel, graph: &Graph, weights: &[f64], priors: &PriorField) -> Vec<bool> {
    if model.activation != Activation::Relu {
        return Vec::new();
    }
    let n = graph.node_count();
    let mut signs = Vec::new();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| priors.get(i).as_slice().to_vec()).collect();
    for w in &model.params.layers {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = h[i].clone();
            let mut s = 1.0;
            for (j, e) in graph.incident(i) {
                s += weights[e];
                m.iter_mut().zip(&h[j]).for_each(|(a, b)| *a += weights[e] * b);
            }
            m.iter_mut().for_each(|a| *a /= s);
            let z: Vec<f64> = w.rows().into_iter().map(|row| row.iter().zip(&m).map(|(a, b)| a * b).sum()).collect();
            signs.extend(z.iter().map(|v| *v > 0.0));
            next.push(z.into_iter().map(|v| v.max(0.0)).collect());
        }
        h = next;
    }
    for hi in &h {
        for (row, b) in model.params.mlp_hidden.rows().into_iter().zip(&model.params.mlp_hidden_bias) {
            let z: f64 = row.iter().zip(hi).map(|(a, x)| a * x).sum::<f64>() + b;
            signs.push(z > 0.0);
        }
    }
    signs
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub mismatches: Vec<String>,
    /// Stencil points where some ReLU input has a different sign than at the
    /// base point; central differences there straddle a kink.
    pub kink_crossings: usize,
}

/// Compares analytic parameter and edge-weight gradients against central differences.
pub fn finite_difference_check(
    model: &GnnModel,
    graph: &Graph,
    priors: &PriorField,
    targets: &PriorField,
    nodes: &[NodeId],
    h: f64,
    rel: f64,
    floor: f64,
) -> FdReport {
    let ones = vec![1.0; graph.edge_count()];
    let grads = gnn::loss_and_gradients(model, &EdgeWeightedView::new(graph), priors, targets, nodes).unwrap();
    let mut report = FdReport::default();
    let base_signs = relu_input_signs(model, graph, &ones, priors);

    let analytic: Vec<f64> = grads.params.iter().copied().collect();
    for (k, &g) in analytic.iter().enumerate() {
        let mut eval = |delta: f64| {
            let mut m = model.clone();
            *m.params.iter_mut().nth(k).unwrap() += delta;
            report.kink_crossings += usize::from(relu_input_signs(&m, graph, &ones, priors) != base_signs);
            loss_with_weights(&m, graph, ones.clone(), priors, targets, nodes)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        report.checked += 1;
        if !close(g, fd, rel, floor) {
            report.mismatches.push(format!("param {k}: analytic {g:e} fd {fd:e}"));
        }
    }
    for (e, &g) in grads.edges.iter().enumerate() {
        let mut eval = |delta: f64| {
            let mut w = ones.clone();
            w[e] += delta;
            report.kink_crossings += usize::from(relu_input_signs(model, graph, &w, priors) != base_signs);
            loss_with_weights(model, graph, w, priors, targets, nodes)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        report.checked += 1;
        if !close(g, fd, rel, floor) {
            report.mismatches.push(format!("edge {e}: analytic {g:e} fd {fd:e}"));
        }
    }
    report
}

#[derive(Debug, Default)]
pub struct GradientCheckSummary {
    pub instances: usize,
    /// Draws discarded because a finite-difference stencil crossed a ReLU kink.
    pub rejected: usize,
    pub checked: usize,
    pub mismatches: Vec<String>,
}

/// Finite-difference checks on `instances` random graphs (n ≤ 20, two layers),
/// cycling through `activations`. Draws whose stencils cross a ReLU kink are
/// not differentiable points and are replaced by fresh draws.
pub fn gradient_checks(seed: u64, instances: usize, activations: &[Activation]) -> GradientCheckSummary {
    let mut r = rng(seed);
    let mut out = GradientCheckSummary::default();
    while out.instances < instances {
        let n = r.random_range(2..=20);
        let c = r.random_range(2..=4);
        let graph = random_graph(&mut r, n, c, 0.25);
        let priors = random_field(&mut r, n, c);
        let targets = random_field(&mut r, n, c);
        let hidden = r.random_range(2..=6);
        let activation = activations[(out.instances + out.rejected) % activations.len()];
        let model = random_model(&mut r, c, hidden, 2).with_activation(activation);
        let mut nodes: Vec<NodeId> = (0..n).filter(|_| r.random_bool(0.7)).collect();
        if nodes.is_empty() {
            nodes.push(0);
        }
        let report = finite_difference_check(&model, &graph, &priors, &targets, &nodes, 1e-4, 1e-4, 1e-8);
        if report.kink_crossings > 0 {
            out.rejected += 1;
            continue;
        }
        let id = out.instances;
        out.instances += 1;
        out.checked += report.checked;
        out.mismatches.extend(report.mismatches.into_iter().map(|m| format!("instance {id}: {m}")));
    }
    out
}
