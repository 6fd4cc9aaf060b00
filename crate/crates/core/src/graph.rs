//! Undirected graph storage, text ingestion and export.
//!
//! Nodes are dense ids `0..n`. Edges are stored once as `(u, v)` with `u < v`,
//! sorted, and addressed by their position (the edge id). Adjacency is kept in
//! compressed rows with sorted neighbor lists, each neighbor slot carrying the
//! id of the undirected edge it came from.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::prob::fmt_f64;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

impl EdgeStats {
    pub fn warnings(&self) -> usize {
        self.self_loops_dropped + self.duplicates_dropped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    class_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    neighbor_edges: Vec<EdgeId>,
    labels: Vec<Option<usize>>,
    features: BTreeMap<NodeId, Vec<f64>>,
}

impl Graph {
    /// Builds a graph, dropping self-loops and duplicate (in either direction) edges.
    pub fn from_edges(
        node_count: usize,
        class_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<(Self, EdgeStats)> {
        if class_count < 2 {
            return Err(Error::validation(format!("class_count must be at least 2, got {class_count}")));
        }
        let mut stats = EdgeStats::default();
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::validation(format!("edge ({a}, {b}) references a node >= {node_count}")));
            }
            if a == b {
                stats.self_loops_dropped += 1;
                continue;
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        stats.duplicates_dropped = before - list.len();
        if stats.warnings() > 0 {
            log::warn!(
                "dropped {} self-loop(s) and {} duplicate edge(s)",
                stats.self_loops_dropped,
                stats.duplicates_dropped
            );
        }

        let mut degree = vec![0usize; node_count];
        for &(u, v) in &list {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut neighbors = vec![0; offsets[node_count]];
        let mut neighbor_edges = vec![0; offsets[node_count]];
        let mut rows: Vec<Vec<(NodeId, EdgeId)>> = vec![Vec::new(); node_count];
        for (e, &(u, v)) in list.iter().enumerate() {
            rows[u].push((v, e));
            rows[v].push((u, e));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            for (k, &(j, e)) in row.iter().enumerate() {
                neighbors[offsets[i] + k] = j;
                neighbor_edges[offsets[i] + k] = e;
            }
        }

        Ok((
            Graph {
                node_count,
                class_count,
                edges: list,
                offsets,
                neighbors,
                neighbor_edges,
                labels: vec![None; node_count],
                features: BTreeMap::new(),
            },
            stats,
        ))
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.node_count {
            return Err(Error::validation(format!(
                "label vector has length {}, graph has {} nodes",
                labels.len(),
                self.node_count
            )));
        }
        if let Some((i, c)) = labels.iter().enumerate().find_map(|(i, l)| l.filter(|c| *c >= self.class_count).map(|c| (i, c))) {
            return Err(Error::validation(format!("node {i} has label {c} outside [0, {})", self.class_count)));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Attaches feature vectors. All vectors must share one dimension. In the
    /// feature-agnostic setting only labeled nodes may carry features.
    pub fn with_features(mut self, features: BTreeMap<NodeId, Vec<f64>>, feature_agnostic: bool) -> Result<Self> {
        let mut dim = None;
        for (&i, x) in &features {
            if i >= self.node_count {
                return Err(Error::validation(format!("feature for node {i} >= {}", self.node_count)));
            }
            match dim {
                None => dim = Some(x.len()),
                Some(d) if d != x.len() => {
                    return Err(Error::validation(format!("node {i} has {} features, expected {d}", x.len())))
                }
                _ => {}
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("node {i} has a non-finite feature")));
            }
            if feature_agnostic && self.labels[i].is_none() {
                return Err(Error::validation(format!("feature provided for unlabeled node {i}")));
            }
        }
        self.features = features;
        Ok(self)
    }

    /// Copy whose feature map only keeps the given nodes.
    pub fn restrict_features(&self, keep: impl IntoIterator<Item = NodeId>) -> Graph {
        let features = keep
            .into_iter()
            .filter_map(|i| self.features.get(&i).map(|x| (i, x.clone())))
            .collect();
        Graph { features, ..self.clone() }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e]
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(neighbor, edge id)` pairs of node `i`, in neighbor order.
    pub fn incident(&self, i: NodeId) -> impl ExactSizeIterator<Item = (NodeId, EdgeId)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[r.clone()].iter().copied().zip(self.neighbor_edges[r].iter().copied())
    }

    /// Position range of node `i`'s neighbor slots in the compressed arrays.
    pub fn slot_range(&self, i: NodeId) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn slot_neighbor(&self, slot: usize) -> NodeId {
        self.neighbors[slot]
    }

    pub fn slot_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn average_degree(&self) -> f64 {
        if self.node_count == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.node_count as f64
        }
    }

    pub fn density(&self) -> f64 {
        let n = self.node_count as f64;
        if self.node_count < 2 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / (n * (n - 1.0))
        }
    }

    pub fn edge_id(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).ok()
    }

    pub fn label(&self, i: NodeId) -> Option<usize> {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn features(&self, i: NodeId) -> Option<&[f64]> {
        self.features.get(&i).map(Vec::as_slice)
    }

    pub fn feature_map(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.features
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.values().next().map(Vec::len)
    }

    /// Graph on `nodes` (local ids follow the slice order) with every base edge
    /// between them. Labels and features are not carried over.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> InducedSubgraph {
        let local: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut pairs = Vec::new();
        for (k, &v) in nodes.iter().enumerate() {
            for (w, e) in self.incident(v) {
                if let Some(&l) = local.get(&w) {
                    if k < l {
                        pairs.push(((k, l), e));
                    }
                }
            }
        }
        pairs.sort_unstable();
        let (graph, _) = Graph::from_edges(nodes.len(), self.class_count, pairs.iter().map(|p| p.0))
            .expect("induced edges are valid");
        InducedSubgraph { graph, nodes: nodes.to_vec(), edge_map: pairs.into_iter().map(|p| p.1).collect() }
    }

    /// Nodes within `hops` of `source`, in BFS order (source first).
    pub fn ball(&self, source: NodeId, hops: usize) -> Vec<NodeId> {
        let mut dist: HashMap<NodeId, usize> = HashMap::from([(source, 0)]);
        let mut order = vec![source];
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let d = dist[&v];
            if d == hops {
                continue;
            }
            for &w in self.neighbors(v) {
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(w) {
                    slot.insert(d + 1);
                    order.push(w);
                }
            }
        }
        order
    }
}

/// A graph induced on a node subset, with maps back to the base graph.
#[derive(Debug, Clone)]
pub struct InducedSubgraph {
    pub graph: Graph,
    /// Local node id to base node id.
    pub nodes: Vec<NodeId>,
    /// Local edge id to base edge id.
    pub edge_map: Vec<EdgeId>,
}

/// Original node identifiers, indexed by dense id.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct IdMap {
    pub original: Vec<String>,
}

impl IdMap {
    pub fn identity(n: usize) -> Self {
        IdMap { original: (0..n).map(|i| i.to_string()).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub ids: IdMap,
    pub stats: EdgeStats,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Reject features on nodes without a label.
    pub feature_agnostic: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { feature_agnostic: true }
    }
}

struct Line {
    number: usize,
    tokens: Vec<String>,
}

fn read_lines(path: &Path) -> Result<Vec<Line>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        out.push(Line { number: k + 1, tokens: body.split_whitespace().map(str::to_owned).collect() });
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Reads an edge list, a label file and an optional feature file. Node ids are
/// arbitrary tokens; they are densified in numeric order when every id is an
/// unsigned integer, otherwise in lexicographic order.
pub fn load_graph(
    edge_path: &Path,
    label_path: &Path,
    feature_path: Option<&Path>,
    class_count: usize,
    options: LoadOptions,
) -> Result<LoadedGraph> {
    let edge_lines = read_lines(edge_path)?;
    let label_lines = read_lines(label_path)?;
    let feature_lines = feature_path.map(read_lines).transpose()?;

    for l in &edge_lines {
        if l.tokens.len() != 2 {
            return Err(parse_err(edge_path, l.number, format!("expected `src dst`, found {} tokens", l.tokens.len())));
        }
    }
    for l in &label_lines {
        if l.tokens.len() != 2 {
            return Err(parse_err(label_path, l.number, format!("expected `node class`, found {} tokens", l.tokens.len())));
        }
    }

    let mut raw_ids: Vec<&str> = edge_lines
        .iter()
        .flat_map(|l| l.tokens.iter())
        .chain(label_lines.iter().map(|l| &l.tokens[0]))
        .chain(feature_lines.iter().flatten().map(|l| &l.tokens[0]))
        .map(String::as_str)
        .collect();
    raw_ids.sort_unstable();
    raw_ids.dedup();
    if raw_ids.iter().all(|t| t.parse::<u64>().is_ok()) {
        raw_ids.sort_by_key(|t| (t.parse::<u64>().unwrap(), t.len()));
    }
    let dense: HashMap<&str, usize> = raw_ids.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let n = raw_ids.len();

    let edges: Vec<(usize, usize)> =
        edge_lines.iter().map(|l| (dense[l.tokens[0].as_str()], dense[l.tokens[1].as_str()])).collect();
    let (graph, stats) = Graph::from_edges(n, class_count, edges)?;

    let mut labels = vec![None; n];
    for l in &label_lines {
        let c: usize = l.tokens[1]
            .parse()
            .map_err(|e| parse_err(label_path, l.number, format!("bad class index {:?}: {e}", l.tokens[1])))?;
        if c >= class_count {
            return Err(Error::validation(format!(
                "{}:{}: label {c} outside [0, {class_count})",
                label_path.display(),
                l.number
            )));
        }
        let i = dense[l.tokens[0].as_str()];
        if labels[i].is_some_and(|prev| prev != c) {
            return Err(Error::validation(format!("{}:{}: conflicting label for node {}", label_path.display(), l.number, l.tokens[0])));
        }
        labels[i] = Some(c);
    }
    let mut graph = graph.with_labels(labels)?;

    if let (Some(path), Some(lines)) = (feature_path, &feature_lines) {
        let mut features = BTreeMap::new();
        let mut dim = None;
        for l in lines {
            let vals = l.tokens[1..]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(path, l.number, format!("bad feature {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match dim {
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(parse_err(path, l.number, format!("expected {d} features, found {}", vals.len())))
                }
                _ => {}
            }
            features.insert(dense[l.tokens[0].as_str()], vals);
        }
        graph = graph.with_features(features, options.feature_agnostic)?;
    }

    Ok(LoadedGraph { graph, ids: IdMap { original: raw_ids.into_iter().map(str::to_owned).collect() }, stats })
}

/// Paths of the three text files making up a dataset.
#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub labels: PathBuf,
    pub features: Option<PathBuf>,
}

/// Writes edges (`src dst`, src < dst, sorted), labels and features (sorted by node id).
pub fn write_graph(graph: &Graph, files: &GraphFiles) -> Result<()> {
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));

    let mut w = create(&files.edges)?;
    for &(u, v) in graph.edges() {
        writeln!(w, "{u} {v}").map_err(|e| Error::io(&files.edges, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.edges, e))?;

    let mut w = create(&files.labels)?;
    for (i, l) in graph.labels().iter().enumerate() {
        if let Some(c) = l {
            writeln!(w, "{i} {c}").map_err(|e| Error::io(&files.labels, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&files.labels, e))?;

    if let Some(path) = &files.features {
        let mut w = create(path)?;
        for (i, x) in graph.feature_map() {
            let mut line = i.to_string();
            for v in x {
                line.push(' ');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
