//! Loopy sum-product belief propagation on the pairwise Markov random field
//! `p(c) ∝ Π_i φ_i(c_i) Π_{(i,j)} ψ(c_i, c_j)`.
//!
//! Messages live on neighbor slots: slot `s` in node `i`'s adjacency row for
//! neighbor `j` stores `m_{j→i}`. Updates are synchronous (flooding): every
//! message of iteration `t + 1` is computed from iteration `t` values only.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ExplanatorySubgraph;
use crate::graph::Graph;
use crate::prob::{fmt_f64, Prediction, PriorField, ProbVector};

/// Entries are clamped at this value before normalization.
pub const MESSAGE_FLOOR: f64 = 1e-300;

/// `ψ(a, b) = ε` if `a == b`, else `(1 - ε) / (|C| - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix {
    epsilon: f64,
    class_count: usize,
    entries: Vec<f64>,
}

impl CompatibilityMatrix {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.class_count + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.entries[a * self.class_count..(a + 1) * self.class_count]
    }
}

pub fn build_compatibility(epsilon: f64, class_count: usize) -> Result<CompatibilityMatrix> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::validation(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if class_count < 2 {
        return Err(Error::validation(format!("class_count must be at least 2, got {class_count}")));
    }
    let off = (1.0 - epsilon) / (class_count - 1) as f64;
    let entries = (0..class_count * class_count)
        .map(|k| if k / class_count == k % class_count { epsilon } else { off })
        .collect();
    Ok(CompatibilityMatrix { epsilon, class_count, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Flooding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    /// Stop once the mean per-message L1 change drops below this.
    pub eta: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub schedule: Schedule,
    /// Weight of the previous message in the update; 0 disables damping.
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig { eta: 1e-3, max_iters: 20, epsilon: 0.9, schedule: Schedule::Flooding, damping: 0.0 }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::validation(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters < 1 {
            return Err(Error::validation("max_iters must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::validation(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::validation(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// One message per directed edge, stored flat as `slot * |C| + class`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageStore {
    class_count: usize,
    values: Vec<f64>,
    pub iteration: usize,
}

impl MessageStore {
    pub fn uniform(graph: &Graph) -> Self {
        let c = graph.class_count();
        MessageStore { class_count: c, values: vec![1.0 / c as f64; graph.slot_count() * c], iteration: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.class_count
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Message stored in `slot` (from the slot's neighbor into the row's node).
    pub fn slot(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.class_count..(slot + 1) * self.class_count]
    }

    /// `m_{from→to}`, if the two nodes are adjacent.
    pub fn message(&self, graph: &Graph, from: usize, to: usize) -> Option<&[f64]> {
        let row = graph.slot_range(to);
        let k = graph.neighbors(to).binary_search(&from).ok()?;
        Some(self.slot(row.start + k))
    }
}

/// Slot in `j`'s row holding `m_{i→j}`, given the slot in `i`'s row for `j`.
fn reverse_slot(graph: &Graph, i: usize, j: usize) -> usize {
    let k = graph.neighbors(j).binary_search(&i).expect("adjacency is symmetric");
    graph.slot_range(j).start + k
}

fn ln_floor(x: f64) -> f64 {
    x.max(MESSAGE_FLOOR).ln()
}

/// `ln φ_i + Σ_{j ∈ N_i} ln m_{j→i}` for every node, flat `node * |C| + class`.
fn log_beliefs(graph: &Graph, priors: &PriorField, store: &MessageStore) -> Vec<f64> {
    let c = graph.class_count();
    let mut out = Vec::with_capacity(graph.node_count() * c);
    for i in 0..graph.node_count() {
        let phi = priors.get(i);
        let start = out.len();
        out.extend(phi.as_slice().iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }));
        for s in graph.slot_range(i) {
            for (acc, m) in out[start..].iter_mut().zip(store.slot(s)) {
                *acc += ln_floor(*m);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub store: MessageStore,
    /// Mean L1 change over all directed messages.
    pub amplitude: f64,
    /// Messages reset to uniform after their product vanished.
    pub numerical_events: usize,
}

/// One synchronous sweep over every directed message:
/// `m_{j→i}(a) ∝ Σ_b ψ(a, b) φ_j(b) Π_{k ∈ N_j \ i} m_{k→j}(b)`.
/// The neighbor product is accumulated in log space.
pub fn update_messages(
    graph: &Graph,
    priors: &PriorField,
    compat: &CompatibilityMatrix,
    store: &MessageStore,
    damping: f64,
) -> UpdateOutcome {
    let c = graph.class_count();
    let logs = log_beliefs(graph, priors, store);
    let mut next = store.clone();
    next.iteration += 1;
    let mut events = 0;
    let mut cavity = vec![0.0; c];
    let mut fresh = vec![0.0; c];
    let mut l1 = 0.0;

    for i in 0..graph.node_count() {
        for s in graph.slot_range(i) {
            let j = graph.slot_neighbor(s);
            // Remove m_{i→j} from j's log belief.
            let back = store.slot(reverse_slot(graph, i, j));
            let lj = &logs[j * c..(j + 1) * c];
            for b in 0..c {
                cavity[b] = lj[b] - ln_floor(back[b]);
            }
            let max = cavity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut ok = max.is_finite();
            if ok {
                cavity.iter_mut().for_each(|v| *v = (*v - max).exp());
                for (a, f) in fresh.iter_mut().enumerate() {
                    *f = compat.row(a).iter().zip(&cavity).map(|(p, v)| p * v).sum::<f64>().max(MESSAGE_FLOOR);
                }
                let sum: f64 = fresh.iter().sum();
                ok = sum.is_finite() && sum > 0.0;
                if ok {
                    fresh.iter_mut().for_each(|f| *f /= sum);
                }
            }
            if !ok {
                events += 1;
                fresh.iter_mut().for_each(|f| *f = 1.0 / c as f64);
            }
            let old = store.slot(s);
            if damping > 0.0 {
                for (f, o) in fresh.iter_mut().zip(old) {
                    *f = (1.0 - damping) * *f + damping * o;
                }
            }
            l1 += fresh.iter().zip(old).map(|(f, o)| (f - o).abs()).sum::<f64>();
            next.values[s * c..(s + 1) * c].copy_from_slice(&fresh);
        }
    }
    debug_assert!((0..next.len()).all(|s| {
        let m = next.slot(s);
        m.iter().all(|v| *v >= 0.0) && (m.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }));
    if events > 0 {
        log::warn!("{events} message(s) underflowed and were reset to uniform");
    }
    let slots = graph.slot_count();
    let amplitude = if slots == 0 { 0.0 } else { l1 / slots as f64 };
    UpdateOutcome { store: next, amplitude, numerical_events: events }
}

/// `b_i ∝ φ_i Π_{j ∈ N_i} m_{j→i}`.
pub fn posteriors(graph: &Graph, priors: &PriorField, store: &MessageStore) -> PriorField {
    let c = graph.class_count();
    let logs = log_beliefs(graph, priors, store);
    let vectors = (0..graph.node_count())
        .map(|i| ProbVector::from_log_weights(&logs[i * c..(i + 1) * c]).unwrap_or_else(|| priors.get(i).clone()))
        .collect();
    PriorField::new(c, vectors).expect("posteriors share the class count")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    pub posteriors: PriorField,
    pub iterations_run: usize,
    pub converged: bool,
    pub amplitude_trace: Vec<f64>,
    pub numerical_events: usize,
}

impl BpResult {
    /// `iteration,amplitude` rows, iterations counted from 1.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,amplitude\n");
        for (t, a) in self.amplitude_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{}", t + 1, fmt_f64(*a));
        }
        out
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.trace_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Runs flooding updates from uniform messages until the amplitude drops below
/// `eta` or `max_iters` sweeps have run, then computes posteriors.
pub fn run_bp(graph: &Graph, priors: &PriorField, config: &BpConfig) -> Result<BpResult> {
    config.validate()?;
    if priors.len() != graph.node_count() || priors.class_count() != graph.class_count() {
        return Err(Error::validation(format!(
            "priors cover {} nodes x {} classes, graph has {} x {}",
            priors.len(),
            priors.class_count(),
            graph.node_count(),
            graph.class_count()
        )));
    }
    let compat = build_compatibility(config.epsilon, graph.class_count())?;
    let mut store = MessageStore::uniform(graph);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut events = 0;
    for _ in 0..config.max_iters {
        let out = update_messages(graph, priors, &compat, &store, config.damping);
        store = out.store;
        events += out.numerical_events;
        trace.push(out.amplitude);
        if out.amplitude < config.eta {
            converged = true;
            break;
        }
    }
    Ok(BpResult {
        posteriors: posteriors(graph, priors, &store),
        iterations_run: store.iteration,
        converged,
        amplitude_trace: trace,
        numerical_events: events,
    })
}

/// Runs BP on the subgraph's induced edges and returns the target's posterior
/// and its argmax.
pub fn predict_on_subgraph(subgraph: &ExplanatorySubgraph, priors: &PriorField, config: &BpConfig) -> Result<Prediction> {
    let local = subgraph.local_graph(priors.class_count())?;
    let local_priors = PriorField::new(
        priors.class_count(),
        subgraph.nodes.iter().map(|&v| priors.get(v).clone()).collect(),
    )?;
    let result = run_bp(&local, &local_priors, config)?;
    Ok(Prediction::new(subgraph.target, result.posteriors.get(0).clone()))
}
