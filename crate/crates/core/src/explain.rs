//! Edge saliency, greedy explanatory-subgraph growth, and explanation metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{EdgeWeightedView, GnnModel, TargetNeighborhood};
use crate::graph::{EdgeId, Graph, NodeId};
use crate::prob::{fmt_f64, PriorField, ProbVector};
use crate::rng::seeded_rng;
use crate::split::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMethod {
    /// Absolute gradient at the observed edge weights.
    #[default]
    Sm,
    /// Integrated gradients along the straight path from all-zero edge weights.
    Ig,
}

impl std::str::FromStr for SaliencyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sm" => Ok(SaliencyMethod::Sm),
            "ig" => Ok(SaliencyMethod::Ig),
            other => Err(Error::Config(format!("unknown saliency method {other:?} (expected sm or ig)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub target: NodeId,
    /// Nonnegative score per edge; edges not present score 0.
    pub scores: BTreeMap<EdgeId, f64>,
    pub method: SaliencyMethod,
}

impl SaliencyMap {
    pub fn score(&self, e: EdgeId) -> f64 {
        self.scores.get(&e).copied().unwrap_or(0.0)
    }
}

/// Signed integrated-gradients attribution per edge: `a_e · (1/m) Σ_{s=1..m} ∂L/∂a_e` at
/// weights `(s/m)·a` (right Riemann sum).
pub fn integrated_gradients(
    model: &GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    target: NodeId,
    posterior: &ProbVector,
    steps: usize,
) -> Result<BTreeMap<EdgeId, f64>> {
    if steps == 0 {
        return Err(Error::Config("ig_steps must be at least 1".into()));
    }
    let hood = TargetNeighborhood::new(view.base, priors, target, model.layer_count());
    let full = hood.local_weights(view);
    let mut acc = vec![0.0; full.len()];
    let mut scaled = vec![0.0; full.len()];
    for s in 1..=steps {
        let alpha = s as f64 / steps as f64;
        scaled.iter_mut().zip(&full).for_each(|(w, a)| *w = alpha * a);
        let (_, g) = hood.loss_and_edge_gradients(model, &scaled, posterior);
        acc.iter_mut().zip(g).for_each(|(x, gi)| *x += gi);
    }
    let attributions = acc.into_iter().zip(&full).map(|(sum, a)| a * sum / steps as f64).collect();
    Ok(hood.to_global(attributions))
}

pub fn build_saliency(
    model: &GnnModel,
    view: &EdgeWeightedView,
    priors: &PriorField,
    target: NodeId,
    posterior: &ProbVector,
    method: SaliencyMethod,
    ig_steps: usize,
) -> Result<SaliencyMap> {
    let signed = match method {
        SaliencyMethod::Sm => crate::gnn::edge_gradients(model, view, priors, target, posterior),
        SaliencyMethod::Ig => integrated_gradients(model, view, priors, target, posterior, ig_steps)?,
    };
    let scores = signed.into_iter().map(|(e, g)| (e, g.abs())).collect();
    Ok(SaliencyMap { target, scores, method })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEdge {
    pub edge: (NodeId, NodeId),
    /// 1 for the first edge taken.
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanatorySubgraph {
    pub target: NodeId,
    /// Selection order; the target comes first.
    pub nodes: Vec<NodeId>,
    pub selected_edges: Vec<SelectedEdge>,
    /// Every base edge with both endpoints in `nodes`, as `(u, v)` with `u < v`.
    pub induced_edges: Vec<(NodeId, NodeId)>,
}

impl ExplanatorySubgraph {
    fn from_selection(graph: &Graph, target: NodeId, nodes: Vec<NodeId>, selected_edges: Vec<SelectedEdge>) -> Self {
        let members: BTreeSet<NodeId> = nodes.iter().copied().collect();
        let induced_edges = graph
            .edges()
            .iter()
            .copied()
            .filter(|(u, v)| members.contains(u) && members.contains(v))
            .collect();
        ExplanatorySubgraph { target, nodes, selected_edges, induced_edges }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// The subgraph as a standalone graph; local id `k` is `nodes[k]`, so the target is 0.
    pub fn local_graph(&self, class_count: usize) -> Result<Graph> {
        let local: BTreeMap<NodeId, usize> = self.nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let edges = self
            .induced_edges
            .iter()
            .map(|(u, v)| match (local.get(u), local.get(v)) {
                (Some(&a), Some(&b)) => Ok((a, b)),
                _ => Err(Error::validation(format!("induced edge ({u}, {v}) leaves the subgraph"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Graph::from_edges(self.nodes.len(), class_count, edges)?.0)
    }

    /// `target`, `nodes`, then one `edge u v rank score` line per selected edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target {}", self.target);
        let nodes: Vec<String> = self.nodes.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "nodes {}", nodes.join(" "));
        for s in &self.selected_edges {
            let _ = writeln!(out, "edge {} {} {} {}", s.edge.0, s.edge.1, s.rank, fmt_f64(s.score));
        }
        out
    }
}

/// Grows a connected node set from the target, each step taking the
/// highest-scoring edge from the set to an outside node. Stops at `n_nodes`
/// nodes or when no frontier edge has a positive score. Ties go to the smaller
/// outside node id.
pub fn extract_subgraph(graph: &Graph, saliency: &SaliencyMap, n_nodes: usize) -> Result<ExplanatorySubgraph> {
    if n_nodes == 0 {
        return Err(Error::validation("explanatory subgraph needs at least one node"));
    }
    let target = saliency.target;
    let mut nodes = vec![target];
    let mut members = BTreeSet::from([target]);
    let mut selected = Vec::new();
    while nodes.len() < n_nodes {
        let mut best: Option<(f64, NodeId, NodeId)> = None;
        for &u in &nodes {
            for (w, e) in graph.incident(u) {
                if members.contains(&w) {
                    continue;
                }
                let s = saliency.score(e);
                if s <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bs, bw, _)) => s > bs || (s == bs && w < bw),
                };
                if better {
                    best = Some((s, w, u));
                }
            }
        }
        let Some((score, w, u)) = best else { break };
        nodes.push(w);
        members.insert(w);
        selected.push(SelectedEdge { edge: (u.min(w), u.max(w)), rank: selected.len() + 1, score });
    }
    Ok(ExplanatorySubgraph::from_selection(graph, target, nodes, selected))
}

/// Uniform random walk from the target, collecting distinct nodes until
/// `n_nodes` are found or `50 · n_nodes` steps have been taken.
pub fn random_walk_subgraph(graph: &Graph, target: NodeId, n_nodes: usize, seed: u64) -> Result<ExplanatorySubgraph> {
    if n_nodes == 0 {
        return Err(Error::validation("explanatory subgraph needs at least one node"));
    }
    let mut rng = seeded_rng(seed);
    let mut nodes = vec![target];
    let mut members = BTreeSet::from([target]);
    let mut selected = Vec::new();
    let mut here = target;
    let budget = 50 * n_nodes;
    let mut steps = 0;
    while nodes.len() < n_nodes && steps < budget && graph.degree(here) > 0 {
        let ns = graph.neighbors(here);
        let next = ns[rng.random_range(0..ns.len())];
        steps += 1;
        if members.insert(next) {
            nodes.push(next);
            selected.push(SelectedEdge { edge: (here.min(next), here.max(next)), rank: selected.len() + 1, score: 0.0 });
        }
        here = next;
    }
    Ok(ExplanatorySubgraph::from_selection(graph, target, nodes, selected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaithfulnessMode {
    /// `D(p || q)`
    OneSided,
    /// `D(p || q) + D(q || p)`
    #[default]
    Symmetric,
}

pub const DEFAULT_SMOOTHING: f64 = 1e-6;

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// KL divergence between the whole-graph and subgraph predictions after mixing
/// each with the uniform distribution by `smoothing`. Lower is more faithful.
pub fn faithfulness(full: &ProbVector, sub: &ProbVector, mode: FaithfulnessMode, smoothing: f64) -> f64 {
    let p = full.mix_uniform(smoothing);
    let q = sub.mix_uniform(smoothing);
    match mode {
        FaithfulnessMode::OneSided => kl(p.as_slice(), q.as_slice()),
        FaithfulnessMode::Symmetric => kl(p.as_slice(), q.as_slice()) + kl(q.as_slice(), p.as_slice()),
    }
}

/// Fraction of subgraphs containing at least one labeled node.
pub fn label_coverage(subgraphs: &[ExplanatorySubgraph], split: &Split) -> Result<f64> {
    if subgraphs.is_empty() {
        return Err(Error::validation("label coverage of an empty subgraph list"));
    }
    let hits = subgraphs.iter().filter(|s| s.nodes.iter().any(|v| split.is_labeled(*v))).count();
    Ok(hits as f64 / subgraphs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, 2, (1..=leaves).map(|l| (0, l))).unwrap().0
    }

    fn saliency(g: &Graph, target: NodeId, scores: &[((NodeId, NodeId), f64)]) -> SaliencyMap {
        SaliencyMap {
            target,
            scores: scores.iter().map(|&((u, v), s)| (g.edge_id(u, v).unwrap(), s)).collect(),
            method: SaliencyMethod::Sm,
        }
    }

    #[test]
    fn greedy_star_takes_top_two_leaves() {
        let g = star(4);
        let sal = saliency(&g, 0, &[((0, 1), 3.0), ((0, 2), 2.0), ((0, 3), 1.0), ((0, 4), 0.5)]);
        let sub = extract_subgraph(&g, &sal, 3).unwrap();
        assert_eq!(sub.nodes, vec![0, 1, 2]);
        assert_eq!(sub.selected_edges.iter().map(|s| s.rank).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(sub.induced_edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn zero_frontier_stops_at_target() {
        let g = star(3);
        let sub = extract_subgraph(&g, &saliency(&g, 0, &[]), 5).unwrap();
        assert_eq!(sub.nodes, vec![0]);
        let isolated = Graph::from_edges(2, 2, []).unwrap().0;
        let sub = extract_subgraph(&isolated, &saliency(&isolated, 1, &[]), 5).unwrap();
        assert_eq!(sub.nodes, vec![1]);
    }

    #[test]
    fn ties_go_to_smaller_node() {
        let g = star(3);
        let sal = saliency(&g, 0, &[((0, 3), 1.0), ((0, 2), 1.0)]);
        assert_eq!(extract_subgraph(&g, &sal, 2).unwrap().nodes, vec![0, 2]);
    }

    #[test]
    fn growth_reaches_through_selected_nodes() {
        // path 0-1-2 plus leaf 0-3
        let g = Graph::from_edges(4, 2, [(0, 1), (1, 2), (0, 3)]).unwrap().0;
        let sal = saliency(&g, 0, &[((0, 1), 1.0), ((1, 2), 5.0), ((0, 3), 2.0)]);
        let sub = extract_subgraph(&g, &sal, 3).unwrap();
        assert_eq!(sub.nodes, vec![0, 3, 1]);
        let sub = extract_subgraph(&g, &sal, 4).unwrap();
        assert_eq!(sub.nodes, vec![0, 3, 1, 2]);
        assert_eq!(sub.selected_edges[2].edge, (1, 2));
        assert!(extract_subgraph(&g, &sal, 0).is_err());
    }

    #[test]
    fn faithfulness_values() {
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let q = ProbVector::uniform(2);
        assert_eq!(faithfulness(&p, &p, FaithfulnessMode::Symmetric, 0.0), 0.0);
        assert_eq!(faithfulness(&q, &q, FaithfulnessMode::OneSided, 1e-6), 0.0);
        let d = faithfulness(&p, &q, FaithfulnessMode::OneSided, 0.0);
        assert!((d - std::f64::consts::LN_2).abs() < 1e-15);
        let a = faithfulness(&p, &q, FaithfulnessMode::Symmetric, 1e-6);
        let b = faithfulness(&q, &p, FaithfulnessMode::Symmetric, 1e-6);
        assert_eq!(a, b);
        assert!(a.is_finite() && a > d);
    }

    #[test]
    fn coverage_counts_labeled_hits() {
        let g = star(3);
        let mk = |nodes: Vec<NodeId>| ExplanatorySubgraph::from_selection(&g, nodes[0], nodes, vec![]);
        let split = Split { labeled: BTreeSet::from([2]), target: vec![0, 1, 3], ratio: 0.25, stratified: false };
        assert_eq!(label_coverage(&[mk(vec![0, 2]), mk(vec![1, 0, 2])], &split).unwrap(), 1.0);
        assert_eq!(label_coverage(&[mk(vec![0, 1]), mk(vec![3])], &split).unwrap(), 0.0);
        assert_eq!(label_coverage(&[mk(vec![0, 2]), mk(vec![3])], &split).unwrap(), 0.5);
        assert!(label_coverage(&[], &split).is_err());
    }

    #[test]
    fn random_walk_edge_cases() {
        let g = star(5);
        assert_eq!(random_walk_subgraph(&g, 0, 1, 3).unwrap().nodes, vec![0]);
        let iso = Graph::from_edges(3, 2, [(0, 1)]).unwrap().0;
        assert_eq!(random_walk_subgraph(&iso, 2, 5, 3).unwrap().nodes, vec![2]);
        let sub = random_walk_subgraph(&g, 1, 4, 9).unwrap();
        assert_eq!(sub.nodes.len(), 4);
        assert_eq!(sub.nodes[1], 0);
        assert_eq!(sub, random_walk_subgraph(&g, 1, 4, 9).unwrap());
    }

    #[test]
    fn dump_format() {
        let g = star(2);
        let sal = saliency(&g, 0, &[((0, 1), 0.25), ((0, 2), 0.5)]);
        let sub = extract_subgraph(&g, &sal, 3).unwrap();
        assert_eq!(sub.dump(), "target 0\nnodes 0 2 1\nedge 0 2 1 0.5\nedge 0 1 2 0.25\n");
    }

    #[test]
    fn unknown_method_is_config_error() {
        assert!(matches!("gnnexp".parse::<SaliencyMethod>(), Err(Error::Config(_))));
        assert_eq!("ig".parse::<SaliencyMethod>().unwrap(), SaliencyMethod::Ig);
    }
}
