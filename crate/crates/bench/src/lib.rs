//! Fixtures shared by the benchmarks.

use bpex_core::{generate_sbm, Graph, SbmParams};

/// Homophilous 7-class planted partition with 16-dimensional features.
pub fn sbm_fixture(n: usize, seed: u64) -> Graph {
    let params = SbmParams { n, class_count: 7, p_in: 0.02, p_out: 0.0005, feature_dim: 16, feature_separation: 3.0 };
    generate_sbm(&params, seed).expect("valid fixture parameters")
}
