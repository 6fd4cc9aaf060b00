use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bp::BpConfig;
use crate::error::{Error, Result};
use crate::explain::{FaithfulnessMode, SaliencyMethod, DEFAULT_SMOOTHING};
use crate::gnn::TrainConfig;
use crate::priors::{PriorFitConfig, PriorInitConfig};
use crate::sbm::SbmParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDataset {
    pub edges: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    pub class_count: usize,
    #[serde(default = "yes")]
    pub feature_agnostic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmDataset {
    #[serde(flatten)]
    pub params: SbmParams,
    /// Fixed graph seed; when absent every run seed draws its own graph.
    #[serde(default)]
    pub graph_seed: Option<u64>,
}

/// Exactly one data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Files(FileDataset),
    Sbm(SbmDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub method: SaliencyMethod,
    pub n_nodes: usize,
    pub ig_steps: usize,
    pub faithfulness_mode: FaithfulnessMode,
    pub smoothing: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            method: SaliencyMethod::Ig,
            n_nodes: 5,
            ig_steps: 32,
            faithfulness_mode: FaithfulnessMode::Symmetric,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub fit: PriorFitConfig,
    pub init: PriorInitConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Priors, BP, auxiliary network, explanatory subgraph, BP on the subgraph.
    #[default]
    Full,
    /// Argmax of whole-graph BP posteriors.
    Ablation1,
    /// Auxiliary network trained on posteriors, predicting directly.
    Ablation2,
    /// Network trained on one-hot labels of the labeled nodes, predicting directly.
    Ablation3,
    /// Full pipeline with random-walk subgraphs in place of saliency-guided ones.
    RandomWalkBaseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Ablation1 => "ablation1",
            Mode::Ablation2 => "ablation2",
            Mode::Ablation3 => "ablation3",
            Mode::RandomWalkBaseline => "random_walk_baseline",
        }
    }

    pub fn is_ablation(self) -> bool {
        matches!(self, Mode::Ablation1 | Mode::Ablation2 | Mode::Ablation3)
    }

    pub fn uses_subgraphs(self) -> bool {
        matches!(self, Mode::Full | Mode::RandomWalkBaseline)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Mode::Full,
            "ablation1" => Mode::Ablation1,
            "ablation2" => Mode::Ablation2,
            "ablation3" => Mode::Ablation3,
            "random_walk_baseline" => Mode::RandomWalkBaseline,
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_target_cap")]
    pub target_cap: usize,
    #[serde(default)]
    pub bp: BpConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub explainer: ExplainerConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: Mode,
    /// Seeds run concurrently; 0 picks the number of cores.
    #[serde(default)]
    pub parallelism: usize,
}

fn default_ratio() -> f64 {
    0.01
}

fn default_target_cap() -> usize {
    200
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

pub(crate) fn short_hash(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

impl ExperimentConfig {
    pub fn sbm(params: SbmParams) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::Sbm(SbmDataset { params, graph_seed: None }),
            ratio: default_ratio(),
            target_cap: default_target_cap(),
            bp: BpConfig::default(),
            train: TrainConfig::default(),
            explainer: ExplainerConfig::default(),
            prior: PriorConfig::default(),
            seeds: default_seeds(),
            mode: Mode::Full,
            parallelism: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    /// Reads a JSON config; relative dataset paths resolve against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = ExperimentConfig::from_json(&text)?;
        if let (DatasetConfig::Files(files), Some(dir)) = (&mut config.dataset, path.parent()) {
            for p in [Some(&mut files.edges), Some(&mut files.labels), files.features.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.explainer.n_nodes == 0 {
            return Err(Error::Config("explainer.n_nodes must be at least 1".into()));
        }
        if self.explainer.method == SaliencyMethod::Ig && self.explainer.ig_steps == 0 {
            return Err(Error::Config("explainer.ig_steps must be at least 1".into()));
        }
        if !(self.explainer.smoothing >= 0.0 && self.explainer.smoothing <= 1.0) {
            return Err(Error::Config("explainer.smoothing must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.prior.init.blend) {
            return Err(Error::Config("prior.init.blend must lie in [0, 1]".into()));
        }
        self.bp.validate()?;
        self.train.validate()?;
        match &self.dataset {
            DatasetConfig::Sbm(s) => s.params.validate()?,
            DatasetConfig::Files(f) => {
                if f.class_count < 2 {
                    return Err(Error::Config("dataset.files.class_count must be at least 2".into()));
                }
            }
        }
        Ok(())
    }

    /// Identifies a run: everything except the seed list and the parallelism knob.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.parallelism = 0;
        short_hash(&c)
    }
}
