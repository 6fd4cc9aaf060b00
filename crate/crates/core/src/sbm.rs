//! Planted-partition graphs with class-conditional Gaussian features.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub class_count: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub feature_dim: usize,
    /// Distance between class means, in units of the noise standard deviation.
    #[serde(default = "default_separation")]
    pub feature_separation: f64,
}

fn default_separation() -> f64 {
    3.0
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        let ok_p = |p: f64| (0.0..=1.0).contains(&p);
        if !(ok_p(self.p_in) && ok_p(self.p_out) && self.p_out <= self.p_in) {
            return Err(Error::validation(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.class_count < 2 {
            return Err(Error::validation("sbm needs at least 2 classes"));
        }
        if self.n < self.class_count {
            return Err(Error::validation(format!("n={} is smaller than class_count={}", self.n, self.class_count)));
        }
        if !(self.feature_separation.is_finite() && self.feature_separation >= 0.0) {
            return Err(Error::validation("feature_separation must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Expected mean degree under balanced blocks.
    pub fn expected_degree(&self) -> f64 {
        let n = self.n as f64;
        let c = self.class_count as f64;
        n * (self.p_in / c + self.p_out * (c - 1.0) / c)
    }

    pub fn block_of(&self, node: usize) -> usize {
        node * self.class_count / self.n
    }
}

/// Generates a balanced planted-partition graph. Node `i` belongs to block
/// `i * |C| / n`; every node is labeled with its block and carries a feature
/// vector drawn around its class mean. Deterministic for a given seed.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let mut rng = seeded_rng(seed);
    let n = params.n;
    let blocks: Vec<usize> = (0..n).map(|i| params.block_of(i)).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if blocks[i] == blocks[j] { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let (graph, _) = Graph::from_edges(n, params.class_count, edges)?;
    let graph = graph.with_labels(blocks.iter().map(|&b| Some(b)).collect())?;

    if params.feature_dim == 0 {
        return Ok(graph);
    }
    if params.feature_dim < params.class_count {
        log::warn!(
            "feature_dim {} < class_count {}: some classes share a feature mean",
            params.feature_dim,
            params.class_count
        );
    }
    // Means on scaled axis directions: |mu_a - mu_b| = separation for a != b.
    let scale = params.feature_separation / std::f64::consts::SQRT_2;
    let features: BTreeMap<usize, Vec<f64>> = (0..n)
        .map(|i| {
            let x = (0..params.feature_dim)
                .map(|k| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let mean = if k == blocks[i] % params.feature_dim { scale } else { 0.0 };
                    mean + noise
                })
                .collect();
            (i, x)
        })
        .collect();
    graph.with_features(features, true)
}
