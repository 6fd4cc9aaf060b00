use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::report::RunReport;
use super::run::{csv_f64, Runner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Ratio,
    NNodes,
    Epsilon,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(SweepAxis::Ratio),
            "n_nodes" => Ok(SweepAxis::NNodes),
            "epsilon" => Ok(SweepAxis::Epsilon),
            other => Err(Error::Config(format!("unknown sweep axis {other:?} (expected ratio, n_nodes or epsilon)"))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Ratio => "ratio",
            SweepAxis::NNodes => "n_nodes",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    /// The config at this axis value, or why the value is invalid.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> std::result::Result<ExperimentConfig, String> {
        let mut c = base.clone();
        match self {
            SweepAxis::Ratio => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(format!("ratio {value} outside (0, 1)"));
                }
                c.ratio = value;
            }
            SweepAxis::NNodes => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(format!("n_nodes {value} is not a positive integer"));
                }
                c.explainer.n_nodes = value as usize;
            }
            SweepAxis::Epsilon => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(format!("epsilon {value} outside (0, 1]"));
                }
                c.bp.epsilon = value;
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    /// One `(value, report)` per accepted value, in input order.
    pub reports: Vec<(f64, RunReport)>,
    pub warnings: Vec<String>,
}

impl SweepOutcome {
    /// `axis_value,seed,accuracy,faithfulness,coverage`
    pub fn csv(&self) -> String {
        let mut out = String::from("axis_value,seed,accuracy,faithfulness,coverage\n");
        for (value, report) in &self.reports {
            for s in &report.seeds {
                if let Some(m) = s.metrics() {
                    let _ = writeln!(
                        out,
                        "{value},{},{},{},{}",
                        s.seed,
                        csv_f64(Some(m.accuracy)),
                        csv_f64(m.mean_faithfulness),
                        csv_f64(m.label_coverage)
                    );
                }
            }
        }
        out
    }
}

impl Runner {
    /// One run per axis value with shared seeds. Invalid values are skipped with a warning.
    pub fn sweep(&self, config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepOutcome> {
        if values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        let mut outcome = SweepOutcome { axis, reports: Vec::new(), warnings: Vec::new() };
        for &v in values {
            match axis.apply(config, v) {
                Ok(c) => outcome.reports.push((v, self.run(&c)?)),
                Err(msg) => {
                    log::warn!("skipping sweep value: {msg}");
                    outcome.warnings.push(msg);
                }
            }
        }
        if let Some(out) = self.out_dir() {
            let path = out.join("sweeps").join(format!("{}-{}.csv", config.hash(), axis.name()));
            std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
            std::fs::write(&path, outcome.csv()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(outcome)
    }
}
