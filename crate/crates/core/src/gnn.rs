//! Auxiliary mean-aggregation graph network over prior distributions, with
//! reverse-mode gradients to both parameters and per-edge weights.
//!
//! Layer `k` computes `h_i = σ(W_k · m_i)` where
//! `m_i = (h_i + Σ_j a_ij h_j) / (1 + Σ_j a_ij)` pools the node's own embedding
//! (weight 1) with its neighbors (weight `a_ij`, 1 for an observed edge). A
//! one-hidden-layer MLP and a softmax map `h^K` to a class distribution.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, InducedSubgraph, NodeId};
use crate::prob::{fmt_f64, Prediction, PriorField, ProbVector};
use crate::rng::seeded_rng;

/// Lower clamp on predicted probabilities inside the log of the cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `W_k`, shape `dim_k x dim_{k-1}`.
    pub layers: Vec<Array2<f64>>,
    pub mlp_hidden: Array2<f64>,
    pub mlp_hidden_bias: Array1<f64>,
    pub mlp_out: Array2<f64>,
    pub mlp_out_bias: Array1<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Params {
        Params {
            layers: other.layers.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            mlp_hidden: Array2::zeros(other.mlp_hidden.raw_dim()),
            mlp_hidden_bias: Array1::zeros(other.mlp_hidden_bias.raw_dim()),
            mlp_out: Array2::zeros(other.mlp_out.raw_dim()),
            mlp_out_bias: Array1::zeros(other.mlp_out_bias.raw_dim()),
        }
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every scalar, in a fixed order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.mlp_hidden.iter())
            .chain(self.mlp_hidden_bias.iter())
            .chain(self.mlp_out.iter())
            .chain(self.mlp_out_bias.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|w| w.iter_mut())
            .chain(self.mlp_hidden.iter_mut())
            .chain(self.mlp_hidden_bias.iter_mut())
            .chain(self.mlp_out.iter_mut())
            .chain(self.mlp_out_bias.iter_mut())
    }

    fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> =
            self.layers.iter().enumerate().map(|(k, w)| (format!("layer{}", k + 1), w)).collect();
        out.push(("mlp_hidden".into(), &self.mlp_hidden));
        out.push(("mlp_out".into(), &self.mlp_out));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub params: Params,
    pub activation: Activation,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-s..=s))
}

impl GnnModel {
    /// Glorot-uniform weights, zero biases. `layers` aggregation layers map
    /// `|C| → hidden → ... → hidden`; the head maps `hidden → hidden → |C|`.
    pub fn new(class_count: usize, hidden_dim: usize, layers: usize, seed: u64) -> Self {
        assert!(layers >= 1 && hidden_dim >= 1 && class_count >= 2);
        let mut rng = seeded_rng(seed);
        let layer_ws = (0..layers)
            .map(|k| glorot(hidden_dim, if k == 0 { class_count } else { hidden_dim }, &mut rng))
            .collect();
        let mlp_hidden = glorot(hidden_dim, hidden_dim, &mut rng);
        let mlp_out = glorot(class_count, hidden_dim, &mut rng);
        GnnModel {
            params: Params {
                layers: layer_ws,
                mlp_hidden,
                mlp_hidden_bias: Array1::zeros(hidden_dim),
                mlp_out,
                mlp_out_bias: Array1::zeros(class_count),
            },
            activation: Activation::Relu,
        }
    }

    pub fn zeros(class_count: usize, hidden_dim: usize, layers: usize) -> Self {
        let mut m = GnnModel::new(class_count, hidden_dim, layers, 0);
        m.params.iter_mut().for_each(|p| *p = 0.0);
        m
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layer_count(&self) -> usize {
        self.params.layers.len()
    }

    pub fn class_count(&self) -> usize {
        self.params.mlp_out.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.mlp_hidden.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Text checkpoint: header, then one block per tensor with its shape. Values
    /// are written in shortest round-trip form so reloading is bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("gnn-checkpoint v1\n");
        let act = match self.activation {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        let _ = writeln!(out, "activation {act}");
        let _ = writeln!(out, "layers {}", self.layer_count());
        let write_block = |out: &mut String, name: &str, rows: usize, cols: usize, vals: &mut dyn Iterator<Item = &f64>| {
            let _ = writeln!(out, "{name} {rows} {cols}");
            let line: Vec<String> = vals.map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        };
        for (name, w) in self.params.named() {
            write_block(&mut out, &name, w.nrows(), w.ncols(), &mut w.iter());
        }
        write_block(&mut out, "mlp_hidden_bias", 1, self.params.mlp_hidden_bias.len(), &mut self.params.mlp_hidden_bias.iter());
        write_block(&mut out, "mlp_out_bias", 1, self.params.mlp_out_bias.len(), &mut self.params.mlp_out_bias.iter());
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::validation(format!("model checkpoint: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("gnn-checkpoint v1") {
            return Err(bad("unknown header"));
        }
        let activation = match lines.next().and_then(|l| l.strip_prefix("activation ")) {
            Some("relu") => Activation::Relu,
            Some("identity") => Activation::Identity,
            _ => return Err(bad("missing activation")),
        };
        let layers: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("layers "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing layer count"))?;
        let mut blocks = BTreeMap::new();
        while let Some(head) = lines.next() {
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad("malformed block header"));
            }
            let rows: usize = parts[1].parse().map_err(|_| bad("bad row count"))?;
            let cols: usize = parts[2].parse().map_err(|_| bad("bad column count"))?;
            let vals = lines
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<Vec<_>>>()?;
            let arr = Array2::from_shape_vec((rows, cols), vals).map_err(|_| bad("shape mismatch"))?;
            blocks.insert(parts[0].to_string(), arr);
        }
        let mut take = |name: &str| blocks.remove(name).ok_or_else(|| bad(&format!("missing tensor {name}")));
        let layer_ws = (1..=layers).map(|k| take(&format!("layer{k}"))).collect::<Result<Vec<_>>>()?;
        let flat = |a: Array2<f64>| Array1::from_iter(a);
        let params = Params {
            layers: layer_ws,
            mlp_hidden: take("mlp_hidden")?,
            mlp_hidden_bias: flat(take("mlp_hidden_bias")?),
            mlp_out: take("mlp_out")?,
            mlp_out_bias: flat(take("mlp_out_bias")?),
        };
        Ok(GnnModel { params, activation })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GnnModel::from_checkpoint(&text)
    }
}

/// A graph with a continuous weight per undirected edge, indexed by edge id.
#[derive(Debug, Clone)]
pub struct EdgeWeightedView<'a> {
    pub base: &'a Graph,
    pub edge_weights: Vec<f64>,
}

impl<'a> EdgeWeightedView<'a> {
    /// Every observed edge with weight 1.
    pub fn new(base: &'a Graph) -> Self {
        EdgeWeightedView { base, edge_weights: vec![1.0; base.edge_count()] }
    }

    pub fn with_weights(base: &'a Graph, edge_weights: Vec<f64>) -> Result<Self> {
        if edge_weights.len() != base.edge_count() {
            return Err(Error::validation(format!(
                "{} edge weights for {} edges",
                edge_weights.len(),
                base.edge_count()
            )));
        }
        if edge_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("edge weights must be finite and nonnegative"));
        }
        Ok(EdgeWeightedView { base, edge_weights })
    }
}

/// Intermediate values of one forward pass.
struct Tape {
    /// `h^0 ..= h^K`
    hidden: Vec<Array2<f64>>,
    /// Pooled inputs of each aggregation layer.
    pooled: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    mlp_pre: Array2<f64>,
    mlp_act: Array2<f64>,
    probs: Vec<Option<ProbVector>>,
}

fn priors_matrix(priors: &PriorField, nodes: impl Iterator<Item = NodeId>) -> Array2<f64> {
    let c = priors.class_count();
    let rows: Vec<f64> = nodes.flat_map(|i| priors.get(i).as_slice().to_vec()).collect();
    let n = rows.len() / c;
    Array2::from_shape_vec((n, c), rows).expect("prior rows have |C| entries")
}

fn pool(graph: &Graph, weights: &[f64], h: &Array2<f64>) -> Array2<f64> {
    let mut out = h.clone();
    for i in 0..graph.node_count() {
        let mut row = out.row_mut(i);
        let mut total = 1.0;
        for (j, e) in graph.incident(i) {
            let a = weights[e];
            total += a;
            row.scaled_add(a, &h.row(j));
        }
        row /= total;
    }
    out
}

fn forward_tape(model: &GnnModel, graph: &Graph, weights: &[f64], h0: Array2<f64>) -> Tape {
    let act = model.activation;
    let p = &model.params;
    let mut hidden = vec![h0];
    let mut pooled = Vec::with_capacity(p.layers.len());
    let mut pre = Vec::with_capacity(p.layers.len());
    for w in &p.layers {
        let m = pool(graph, weights, hidden.last().unwrap());
        let z = m.dot(&w.t());
        hidden.push(z.mapv(|x| act.apply(x)));
        pooled.push(m);
        pre.push(z);
    }
    let mlp_pre = hidden.last().unwrap().dot(&p.mlp_hidden.t()) + &p.mlp_hidden_bias;
    let mlp_act = mlp_pre.mapv(|x| act.apply(x));
    let logits = mlp_act.dot(&p.mlp_out.t()) + &p.mlp_out_bias;
    // Non-finite logits only arise from non-finite parameters or inputs.
    let probs = logits
        .rows()
        .into_iter()
        .map(|r| r.iter().all(|z| z.is_finite()).then(|| ProbVector::softmax(&r.to_vec())))
        .collect();
    Tape { hidden, pooled, pre, mlp_pre, mlp_act, probs }
}

/// Cross-entropy `-Σ_c b(c) ln max(ĉ(c), LOG_CLAMP)` and its gradient with respect to the logits.
/// NaN when the prediction could not be formed.
fn tape_cross_entropy(pred: Option<&ProbVector>, target: &ProbVector) -> (f64, Vec<f64>) {
    match pred {
        Some(p) => cross_entropy_with_grad(p, target),
        None => (f64::NAN, vec![0.0; target.len()]),
    }
}

fn cross_entropy_with_grad(pred: &ProbVector, target: &ProbVector) -> (f64, Vec<f64>) {
    let c = pred.len();
    let mut loss = 0.0;
    let mut unclamped_mass = 0.0;
    let mut grad = vec![0.0; c];
    for k in 0..c {
        let q = pred.value(k);
        let b = target.value(k);
        loss -= b * q.max(LOG_CLAMP).ln();
        if q > LOG_CLAMP {
            unclamped_mass += b;
            grad[k] -= b;
        }
    }
    for (k, g) in grad.iter_mut().enumerate() {
        *g += pred.value(k) * unclamped_mass;
    }
    (loss, grad)
}

/// Back-propagates `d loss / d logits` through the tape.
fn backward(model: &GnnModel, graph: &Graph, weights: &[f64], tape: &Tape, dlogits: &Array2<f64>) -> (Params, Vec<f64>) {
    let act = model.activation;
    let p = &model.params;
    let mut grads = Params::zeros_like(p);
    let mut dweights = vec![0.0; weights.len()];

    grads.mlp_out = dlogits.t().dot(&tape.mlp_act);
    grads.mlp_out_bias = dlogits.sum_axis(Axis(0));
    let mut d = dlogits.dot(&p.mlp_out);
    Zip::from(&mut d).and(&tape.mlp_pre).for_each(|g, &z| *g *= act.derivative(z));
    grads.mlp_hidden = d.t().dot(tape.hidden.last().unwrap());
    grads.mlp_hidden_bias = d.sum_axis(Axis(0));
    let mut dh = d.dot(&p.mlp_hidden);

    for k in (0..p.layers.len()).rev() {
        Zip::from(&mut dh).and(&tape.pre[k]).for_each(|g, &z| *g *= act.derivative(z));
        grads.layers[k] = dh.t().dot(&tape.pooled[k]);
        let dpooled = dh.dot(&p.layers[k]);
        let h_prev = &tape.hidden[k];
        let m = &tape.pooled[k];
        let mut dprev = Array2::<f64>::zeros(h_prev.raw_dim());
        for i in 0..graph.node_count() {
            let g = dpooled.row(i);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let total = 1.0 + graph.incident(i).map(|(_, e)| weights[e]).sum::<f64>();
            dprev.row_mut(i).scaled_add(1.0 / total, &g);
            for (j, e) in graph.incident(i) {
                let a = weights[e];
                dprev.row_mut(j).scaled_add(a / total, &g);
                // ∂m_i/∂a_ij = (h_j - m_i) / total
                let dot: f64 = g.iter().zip(h_prev.row(j)).zip(m.row(i)).map(|((gv, hj), mi)| gv * (hj - mi)).sum();
                dweights[e] += dot / total;
            }
        }
        dh = dprev;
    }
    (grads, dweights)
}

/// Class distribution for every node of the view.
pub fn forward(model: &GnnModel, view: &EdgeWeightedView, priors: &PriorField) -> Vec<Prediction> {
    let tape = forward_tape(model, view.base, &view.edge_weights, priors_matrix(priors, 0..priors.len()));
    tape.probs
        .into_iter()
        .enumerate()
        .map(|(i, d)| Prediction::new(i, d.expect("finite parameters and priors give finite logits")))
        .collect()
}

/// Mean soft-target cross-entropy over `nodes`.
pub fn loss(predictions: &[Prediction], posteriors: &PriorField, nodes: &[NodeId]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::validation("loss over an empty node set"));
    }
    let total: f64 = nodes
        .iter()
        .map(|&i| cross_entropy_with_grad(&predictions[i].distribution, posteriors.get(i)).0)
        .sum();
    Ok(total / nodes.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub params: Params,
    /// Indexed by edge id of the view's graph.
    pub edges: Vec<f64>,
}

/// Mean cross-entropy over `nodes` against `targets` (indexed by node), with
/// gradients to every parameter and every edge weight.
pub fn loss_and_gradients(
    model: &GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    targets: &PriorField,
    nodes: &[NodeId],
) -> Result<Gradients> {
    if nodes.is_empty() {
        return Err(Error::validation("loss over an empty node set"));
    }
    let graph = view.base;
    let tape = forward_tape(model, graph, &view.edge_weights, priors_matrix(priors, 0..priors.len()));
    let (loss, dlogits) = node_set_loss(&tape, targets, nodes, graph.node_count(), |i| i);
    let (params, edges) = backward(model, graph, &view.edge_weights, &tape, &dlogits);
    Ok(Gradients { loss, params, edges })
}

fn node_set_loss(
    tape: &Tape,
    targets: &PriorField,
    nodes: &[NodeId],
    n: usize,
    target_of: impl Fn(NodeId) -> NodeId,
) -> (f64, Array2<f64>) {
    let c = targets.class_count();
    let scale = 1.0 / nodes.len() as f64;
    let mut dlogits = Array2::<f64>::zeros((n, c));
    let mut total = 0.0;
    for &i in nodes {
        let (l, g) = tape_cross_entropy(tape.probs[i].as_ref(), targets.get(target_of(i)));
        total += l;
        for (k, v) in g.into_iter().enumerate() {
            dlogits[[i, k]] += v * scale;
        }
    }
    (total * scale, dlogits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a lower loss.
    pub patience: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, max_epochs: 1000, patience: 1000, hidden_dim: 32, layers: 2, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.patience > self.max_epochs && self.max_epochs > 0 {
            return Err(Error::validation("patience must not exceed max_epochs"));
        }
        if self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::validation("hidden_dim and layers must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest loss seen.
    pub model: GnnModel,
    /// Loss at the start of each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{}", e + 1, fmt_f64(*l));
        }
        out
    }
}

/// Full-batch gradient descent on the mean cross-entropy over every node.
pub fn train(
    model: GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    posteriors: &PriorField,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let nodes: Vec<NodeId> = (0..view.base.node_count()).collect();
    train_on(model, view, priors, posteriors, &nodes, config)
}

/// Like [`train`], restricted to `nodes`.
pub fn train_on(
    mut model: GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    targets: &PriorField,
    nodes: &[NodeId],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut trace = Vec::new();
    if config.max_epochs == 0 {
        return Ok(TrainOutcome { model, loss_trace: trace });
    }
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let g = loss_and_gradients(&model, view, priors, targets, nodes)?;
        if !g.loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at epoch {}; learning rate {} is likely too high",
                epoch + 1,
                config.learning_rate
            )));
        }
        trace.push(g.loss);
        if g.loss < best.0 {
            best = (g.loss, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
        for (w, d) in model.params.iter_mut().zip(g.params.iter()) {
            *w -= config.learning_rate * d;
        }
        if model.params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Training(format!(
                "parameters diverged at epoch {}; learning rate {} is likely too high",
                epoch + 1,
                config.learning_rate
            )));
        }
    }
    Ok(TrainOutcome { model: best.1, loss_trace: trace })
}

/// The `K`-hop ball around a target, which holds every value its output depends on.
#[derive(Debug, Clone)]
pub struct TargetNeighborhood {
    pub target: NodeId,
    pub sub: InducedSubgraph,
    h0: Array2<f64>,
}

impl TargetNeighborhood {
    pub fn new(graph: &Graph, priors: &PriorField, target: NodeId, hops: usize) -> Self {
        let nodes = graph.ball(target, hops);
        let sub = graph.induced_subgraph(&nodes);
        let h0 = priors_matrix(priors, nodes.iter().copied());
        TargetNeighborhood { target, sub, h0 }
    }

    /// Base-graph weights restricted to the ball's edges.
    pub fn local_weights(&self, view: &EdgeWeightedView) -> Vec<f64> {
        self.sub.edge_map.iter().map(|&e| view.edge_weights[e]).collect()
    }

    /// Target loss and its gradient to each local edge weight.
    pub fn loss_and_edge_gradients(&self, model: &GnnModel, local_weights: &[f64], posterior: &ProbVector) -> (f64, Vec<f64>) {
        let tape = forward_tape(model, &self.sub.graph, local_weights, self.h0.clone());
        let (l, g) = tape_cross_entropy(tape.probs[0].as_ref(), posterior);
        let mut dlogits = Array2::zeros((self.sub.nodes.len(), posterior.len()));
        dlogits.row_mut(0).assign(&Array1::from(g));
        let (_, dw) = backward(model, &self.sub.graph, local_weights, &tape, &dlogits);
        (l, dw)
    }

    pub fn loss(&self, model: &GnnModel, local_weights: &[f64], posterior: &ProbVector) -> f64 {
        let tape = forward_tape(model, &self.sub.graph, local_weights, self.h0.clone());
        tape_cross_entropy(tape.probs[0].as_ref(), posterior).0
    }

    pub fn to_global(&self, local: Vec<f64>) -> BTreeMap<EdgeId, f64> {
        self.sub.edge_map.iter().copied().zip(local).collect()
    }
}

/// Signed gradient of the target's cross-entropy against `target_posterior`
/// with respect to every edge weight. Edges absent from the map lie outside the
/// target's receptive field and have gradient exactly 0.
pub fn edge_gradients(
    model: &GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    target: NodeId,
    target_posterior: &ProbVector,
) -> BTreeMap<EdgeId, f64> {
    let hood = TargetNeighborhood::new(view.base, priors, target, model.layer_count());
    let (_, grads) = hood.loss_and_edge_gradients(model, &hood.local_weights(view), target_posterior);
    hood.to_global(grads)
}
