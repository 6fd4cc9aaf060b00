//! Few-shot labeled/target splits.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: BTreeSet<NodeId>,
    /// Sorted ascending.
    pub target: Vec<NodeId>,
    pub ratio: f64,
    /// False when there were too few labeled slots to cover every class.
    pub stratified: bool,
}

impl Split {
    pub fn is_labeled(&self, node: NodeId) -> bool {
        self.labeled.contains(&node)
    }
}

/// Samples `round(ratio * n)` labeled nodes (one per class first, when possible)
/// and up to `target_cap` evaluation targets among the remaining nodes that have
/// a ground-truth label. Deterministic for a given seed.
pub fn make_split(graph: &Graph, ratio: f64, target_cap: usize, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!("labeling ratio must lie in (0, 1), got {ratio}")));
    }
    let n = graph.node_count();
    let class_count = graph.class_count();
    let mut rng = seeded_rng(seed);

    let mut pool: Vec<NodeId> = (0..n).filter(|&i| graph.label(i).is_some()).collect();
    pool.shuffle(&mut rng);

    let want = ((ratio * n as f64).round() as usize).min(pool.len());
    let stratified = want >= class_count;
    if !stratified {
        log::warn!("only {want} labeled slots for {class_count} classes; sampling without stratification");
    }

    let mut labeled = BTreeSet::new();
    if stratified {
        let mut seen = vec![false; class_count];
        for &i in &pool {
            let c = graph.label(i).unwrap();
            if !seen[c] {
                seen[c] = true;
                labeled.insert(i);
            }
        }
    }
    for &i in &pool {
        if labeled.len() >= want {
            break;
        }
        labeled.insert(i);
    }

    let mut rest: Vec<NodeId> = pool.into_iter().filter(|i| !labeled.contains(i)).collect();
    rest.shuffle(&mut rng);
    rest.truncate(target_cap);
    rest.sort_unstable();

    Ok(Split { labeled, target: rest, ratio, stratified })
}
