use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::prob::fmt_f64;

use super::config::ExperimentConfig;

/// Bumped whenever a report field is added, removed or changes meaning.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: NodeId,
    pub prediction: usize,
    pub truth: usize,
    pub faithfulness: Option<f64>,
    pub coverage_flag: Option<bool>,
    pub subgraph_size: Option<usize>,
}

pub fn metrics_csv(records: &[TargetRecord]) -> String {
    let mut out = String::from("target,prediction,truth,faithfulness,coverage_flag,subgraph_size\n");
    for r in records {
        let f = r.faithfulness.map(fmt_f64).unwrap_or_default();
        let c = r.coverage_flag.map(|b| u8::from(b).to_string()).unwrap_or_default();
        let s = r.subgraph_size.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{f},{c},{s}", r.target, r.prediction, r.truth);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub average_degree: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub accuracy: f64,
    pub mean_faithfulness: Option<f64>,
    pub label_coverage: Option<f64>,
    pub mean_subgraph_size: Option<f64>,
    pub labeled: usize,
    pub targets: usize,
    pub bp_iterations: usize,
    pub bp_converged: bool,
    pub bp_numerical_events: usize,
    pub prior_fit_iterations: Option<usize>,
    pub train_epochs: Option<usize>,
    pub final_train_loss: Option<f64>,
    pub graph: GraphSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SeedOutcome {
    Ok { metrics: SeedMetrics, artifacts: BTreeMap<String, String> },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: SeedOutcome,
}

impl SeedReport {
    pub fn metrics(&self) -> Option<&SeedMetrics> {
        match &self.outcome {
            SeedOutcome::Ok { metrics, .. } => Some(metrics),
            SeedOutcome::Failed { .. } => None,
        }
    }
}

/// Mean and sample standard deviation (`None` below two values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: Option<Stat>,
    pub faithfulness: Option<Stat>,
    pub label_coverage: Option<Stat>,
    pub bp_iterations: Option<Stat>,
    pub bp_converged_fraction: Option<f64>,
    pub train_epochs: Option<Stat>,
}

impl Aggregate {
    pub fn over(seeds: &[SeedReport]) -> Aggregate {
        let ms: Vec<&SeedMetrics> = seeds.iter().filter_map(SeedReport::metrics).collect();
        let collect = |f: &dyn Fn(&SeedMetrics) -> Option<f64>| Stat::of(&ms.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
        Aggregate {
            accuracy: collect(&|m| Some(m.accuracy)),
            faithfulness: collect(&|m| m.mean_faithfulness),
            label_coverage: collect(&|m| m.label_coverage),
            bp_iterations: collect(&|m| Some(m.bp_iterations as f64)),
            bp_converged_fraction: (!ms.is_empty())
                .then(|| ms.iter().filter(|m| m.bp_converged).count() as f64 / ms.len() as f64),
            train_epochs: collect(&|m| m.train_epochs.map(|e| e as f64)),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub data: f64,
    pub priors: f64,
    pub bp: f64,
    pub train: f64,
    pub explain: f64,
    pub predict: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub mode: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
    /// Some seed failed; the aggregate covers the rest.
    pub partial: bool,
    pub run_dir: Option<String>,
    /// Excluded from determinism comparisons.
    pub timings: BTreeMap<String, StageTimings>,
}

const REQUIRED_KEYS: [&str; 9] =
    ["schema_version", "config_hash", "mode", "config", "seeds", "aggregate", "partial", "run_dir", "timings"];

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// The report without wall-clock fields, for byte comparisons between runs.
    pub fn body_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("reports serialize");
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string_pretty(&v).unwrap()
    }

    pub fn accuracy_mean(&self) -> Option<f64> {
        self.aggregate.accuracy.as_ref().map(|s| s.mean)
    }

    /// Checks a parsed report document against the current schema.
    pub fn validate_json(value: &Value) -> Result<()> {
        let obj = value.as_object().ok_or_else(|| Error::validation("report is not a JSON object"))?;
        for key in REQUIRED_KEYS {
            if !obj.contains_key(key) {
                return Err(Error::validation(format!("report lacks field {key:?}")));
            }
        }
        let extra: Vec<&String> = obj.keys().filter(|k| !REQUIRED_KEYS.contains(&k.as_str())).collect();
        if !extra.is_empty() {
            return Err(Error::validation(format!("report has unknown fields {extra:?}")));
        }
        match obj["schema_version"].as_u64() {
            Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => {}
            other => return Err(Error::validation(format!("unsupported report schema version {other:?}"))),
        }
        serde_json::from_value::<RunReport>(value.clone()).map_err(|e| Error::validation(format!("report: {e}")))?;
        Ok(())
    }
}
