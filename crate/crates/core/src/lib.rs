//! Few-shot node classification by belief-propagation label augmentation and
//! gradient-guided explanatory subgraphs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`priors`]: a linear classifier over the few labeled nodes' features
//!    yields prior class distributions; unlabeled nodes start uniform.
//! 2. [`bp`]: loopy belief propagation over the whole graph turns priors into
//!    posteriors for every node.
//! 3. [`gnn`]: an auxiliary mean-aggregation network learns priors → posteriors;
//!    its gradients with respect to edge weights rank edges per target
//!    ([`explain`]), and a small connected subgraph is grown around the target.
//! 4. [`bp::predict_on_subgraph`]: belief propagation restricted to that
//!    subgraph gives the final prediction.
//!
//! [`pipeline`] wires the stages together with ablations, sweeps and reports.

pub mod bp;
pub mod error;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod prob;
pub mod priors;
pub mod rng;
pub mod sbm;
pub mod split;

pub use bp::{build_compatibility, predict_on_subgraph, run_bp, BpConfig, BpResult, CompatibilityMatrix, MessageStore};
pub use error::{Error, Result};
pub use explain::{
    build_saliency, extract_subgraph, faithfulness, label_coverage, random_walk_subgraph, ExplanatorySubgraph,
    FaithfulnessMode, SaliencyMap, SaliencyMethod,
};
pub use gnn::{edge_gradients, forward, loss, train, Activation, EdgeWeightedView, GnnModel, TrainConfig};
pub use graph::{load_graph, write_graph, Graph, GraphFiles, IdMap, LoadOptions, NodeId};
pub use prob::{Prediction, PriorField, ProbVector};
pub use priors::{fit_prior_estimator, init_priors, PriorEstimator, PriorFitConfig, PriorInitConfig};
pub use sbm::{generate_sbm, SbmParams};
pub use split::{make_split, Split};
