//! Prior class distributions: a linear probabilistic classifier over labeled
//! node features, and the per-node prior field fed to belief propagation.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::prob::{PriorField, ProbVector};
use crate::rng::seeded_rng;
use crate::split::Split;

/// Training objective of the prior estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorLoss {
    /// Multinomial logistic regression.
    #[default]
    Logistic,
    /// One-vs-rest squared hinge; probabilities are the softmax of the margins.
    SquaredHinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorFitConfig {
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub loss: PriorLoss,
}

impl Default for PriorFitConfig {
    fn default() -> Self {
        PriorFitConfig { l2: 1e-2, max_iters: 5000, tol: 1e-8, loss: PriorLoss::Logistic }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimator {
    /// `|C| x d`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub l2: f64,
    pub loss: PriorLoss,
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Classes with no labeled example.
    pub missing_classes: Vec<usize>,
}

impl PriorEstimator {
    pub fn class_count(&self) -> usize {
        self.bias.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn scores(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&x) + &self.bias
    }

    pub fn predict(&self, x: &[f64]) -> ProbVector {
        let s = self.scores(ArrayView1::from(x));
        ProbVector::softmax(s.as_slice().unwrap())
    }
}

fn objective_gradient(
    est: &PriorEstimator,
    xs: &Array2<f64>,
    ys: &[usize],
) -> (f64, Array2<f64>, Array1<f64>) {
    let m = xs.nrows() as f64;
    let c = est.class_count();
    let mut gw = Array2::<f64>::zeros(est.weights.raw_dim());
    let mut gb = Array1::<f64>::zeros(c);
    let mut obj = 0.0;
    for (row, &y) in xs.rows().into_iter().zip(ys) {
        let s = est.scores(row);
        let resid: Array1<f64> = match est.loss {
            PriorLoss::Logistic => {
                let p = ProbVector::softmax(s.as_slice().unwrap());
                obj -= p.value(y).max(1e-300).ln();
                Array1::from_iter((0..c).map(|k| p.value(k) - if k == y { 1.0 } else { 0.0 }))
            }
            PriorLoss::SquaredHinge => Array1::from_iter((0..c).map(|k| {
                let t = if k == y { 1.0 } else { -1.0 };
                let slack = 1.0 - t * s[k];
                if slack > 0.0 {
                    obj += slack * slack;
                    -2.0 * t * slack
                } else {
                    0.0
                }
            })),
        };
        for k in 0..c {
            gw.row_mut(k).scaled_add(resid[k] / m, &row);
        }
        gb.scaled_add(1.0 / m, &resid);
    }
    // The bias is penalized too: with separable data an unpenalized bias has
    // almost no curvature and fixed-step descent stalls along it.
    obj = obj / m + 0.5 * est.l2 * est.weights.iter().chain(est.bias.iter()).map(|w| w * w).sum::<f64>();
    gw.scaled_add(est.l2, &est.weights);
    gb.scaled_add(est.l2, &est.bias);
    (obj, gw, gb)
}

/// Fits the estimator on `split.labeled` by full-batch gradient descent with a
/// fixed step of `1 / L`, `L` an upper bound on the objective's curvature.
/// Zero initialization makes the fit deterministic.
pub fn fit_prior_estimator(graph: &Graph, split: &Split, config: &PriorFitConfig) -> Result<(PriorEstimator, FitSummary)> {
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(Error::validation(format!("l2 must be >= 0, got {}", config.l2)));
    }
    let dim = graph
        .feature_dim()
        .ok_or_else(|| Error::validation("prior estimator needs node features"))?;
    let class_count = graph.class_count();

    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for &i in &split.labeled {
        let x = graph
            .features(i)
            .ok_or_else(|| Error::validation(format!("labeled node {i} has no feature vector")))?;
        let y = graph
            .label(i)
            .ok_or_else(|| Error::validation(format!("labeled node {i} has no label")))?;
        rows.extend_from_slice(x);
        ys.push(y);
    }
    let xs = Array2::from_shape_vec((ys.len(), dim), rows).expect("rows have uniform dimension");

    let mut present = vec![false; class_count];
    ys.iter().for_each(|&y| present[y] = true);
    let missing_classes: Vec<usize> = (0..class_count).filter(|&c| !present[c]).collect();
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Training(format!(
            "prior estimator needs at least 2 distinct labeled classes, found {}",
            class_count - missing_classes.len()
        )));
    }
    if !missing_classes.is_empty() {
        log::warn!("classes {missing_classes:?} have no labeled node; their prior mass comes from normalization only");
    }

    let max_sq = xs.rows().into_iter().map(|r| r.dot(&r) + 1.0).fold(0.0, f64::max);
    let curvature = match config.loss {
        PriorLoss::Logistic => 0.5 * max_sq,
        PriorLoss::SquaredHinge => 2.0 * max_sq,
    } + config.l2;
    let step = 1.0 / curvature;

    let mut est = PriorEstimator {
        weights: Array2::zeros((class_count, dim)),
        bias: Array1::zeros(class_count),
        l2: config.l2,
        loss: config.loss,
        trained: false,
    };
    let mut summary = FitSummary { iterations: 0, converged: false, gradient_norm: f64::INFINITY, missing_classes };
    for it in 0..config.max_iters {
        let (_, gw, gb) = objective_gradient(&est, &xs, &ys);
        let norm = (gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>()).sqrt();
        summary.gradient_norm = norm;
        summary.iterations = it;
        if norm < config.tol {
            summary.converged = true;
            break;
        }
        est.weights.scaled_add(-step, &gw);
        est.bias.scaled_add(-step, &gb);
        summary.iterations = it + 1;
    }
    est.trained = true;
    Ok((est, summary))
}

/// How unlabeled nodes are initialized.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UnlabeledPrior {
    #[default]
    Uniform,
    /// `1/|C| + N(0, std^2)` per entry, clamped at `1e-6` and renormalized.
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorInitConfig {
    /// Weight of the one-hot true label mixed into labeled priors.
    pub blend: f64,
    /// Smoothing of one-hot priors when no features are available.
    pub one_hot_smoothing: f64,
    pub unlabeled: UnlabeledPrior,
}

impl Default for PriorInitConfig {
    fn default() -> Self {
        PriorInitConfig { blend: 0.0, one_hot_smoothing: 0.01, unlabeled: UnlabeledPrior::Uniform }
    }
}

/// Priors for every node. Labeled nodes get the estimator's distribution
/// (blended toward their label by `blend`), or a smoothed one-hot vector when
/// there is no estimator; unlabeled nodes get the configured default.
pub fn init_priors(
    graph: &Graph,
    split: &Split,
    estimator: Option<&PriorEstimator>,
    config: &PriorInitConfig,
    seed: u64,
) -> Result<PriorField> {
    if !(0.0..=1.0).contains(&config.blend) {
        return Err(Error::validation(format!("blend must lie in [0, 1], got {}", config.blend)));
    }
    let c = graph.class_count();
    let mut field = PriorField::uniform(graph.node_count(), c);

    if let UnlabeledPrior::Gaussian { std } = config.unlabeled {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(1.0 / c as f64, std).map_err(|e| Error::validation(format!("gaussian prior: {e}")))?;
        let mut rng = seeded_rng(seed);
        for i in 0..graph.node_count() {
            if !split.is_labeled(i) {
                let w = (0..c).map(|_| normal.sample(&mut rng).max(1e-6)).collect();
                field.set(i, ProbVector::from_weights(w).expect("clamped weights are positive"));
            }
        }
    }

    for &i in &split.labeled {
        let y = graph
            .label(i)
            .ok_or_else(|| Error::validation(format!("labeled node {i} has no label")))?;
        let onehot = ProbVector::one_hot(c, y);
        let base = match estimator {
            Some(est) => {
                if !est.trained {
                    return Err(Error::validation("prior estimator has not been trained"));
                }
                let x = graph
                    .features(i)
                    .ok_or_else(|| Error::validation(format!("labeled node {i} has no feature vector")))?;
                est.predict(x)
            }
            None => onehot.mix_uniform(config.one_hot_smoothing),
        };
        let blended = if config.blend == 0.0 {
            base
        } else {
            let w = base
                .as_slice()
                .iter()
                .zip(onehot.as_slice())
                .map(|(p, h)| config.blend * h + (1.0 - config.blend) * p)
                .collect();
            ProbVector::from_weights(w).expect("convex combination of distributions")
        };
        field.set(i, blended);
    }
    Ok(field)
}
