//! Per-seed orchestration, stage caching and artifact output.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{predict_on_subgraph, run_bp, BpResult};
use crate::error::{Error, Result};
use crate::explain::{build_saliency, extract_subgraph, faithfulness, random_walk_subgraph, ExplanatorySubgraph};
use crate::gnn::{self, EdgeWeightedView, GnnModel, TrainOutcome};
use crate::graph::{load_graph, Graph, IdMap, LoadOptions, NodeId};
use crate::prob::{fmt_f64, Prediction, PriorField, ProbVector};
use crate::priors::{fit_prior_estimator, init_priors, FitSummary};
use crate::rng::derive_seed;
use crate::sbm::generate_sbm;
use crate::split::{make_split, Split};

use super::config::{short_hash, DatasetConfig, ExperimentConfig, Mode};
use super::report::{
    metrics_csv, Aggregate, GraphSummary, RunReport, SeedMetrics, SeedOutcome, SeedReport, StageTimings, TargetRecord,
    REPORT_SCHEMA_VERSION,
};

/// Fraction of predictions whose label matches the ground truth.
pub fn evaluate_accuracy(predictions: &[Prediction], truth: &[Option<usize>]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction list"));
    }
    let mut correct = 0;
    for p in predictions {
        let t = truth
            .get(p.node)
            .copied()
            .flatten()
            .ok_or_else(|| Error::validation(format!("no ground truth for node {}", p.node)))?;
        correct += usize::from(p.label == t);
    }
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub ids: IdMap,
}

/// Split, priors and whole-graph BP for one seed.
#[derive(Debug)]
pub struct Prepared {
    pub split: Split,
    pub priors: PriorField,
    pub bp: BpResult,
    pub fit: Option<FitSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BpMeta {
    iterations_run: usize,
    converged: bool,
    amplitude_trace: Vec<f64>,
    numerical_events: usize,
    fit: Option<FitSummary>,
    split: Split,
}

#[derive(Debug)]
pub struct Trained {
    pub model: GnnModel,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrainTarget {
    Posteriors,
    OneHotLabels,
}

/// In-memory stage cache backed by `<out>/cache/<key>/` when an output directory is set.
#[derive(Default)]
struct StageCache {
    data: Mutex<HashMap<String, Arc<Dataset>>>,
    prepared: Mutex<HashMap<String, Arc<Prepared>>>,
    models: Mutex<HashMap<String, Arc<Trained>>>,
    hits: AtomicUsize,
}

fn cached<T>(map: &Mutex<HashMap<String, Arc<T>>>, hits: &AtomicUsize, key: &str, make: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    if let Some(v) = map.lock().unwrap().get(key) {
        hits.fetch_add(1, Ordering::Relaxed);
        return Ok(v.clone());
    }
    let v = Arc::new(make()?);
    Ok(map.lock().unwrap().entry(key.to_string()).or_insert(v).clone())
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn subgraph_dump(subgraphs: &[ExplanatorySubgraph]) -> String {
    subgraphs.iter().map(|s| s.dump() + "\n").collect()
}

/// Runs experiments. Holds the stage cache, so sharing one runner across
/// configurations with a common prefix reuses priors, posteriors and models.
pub struct Runner {
    out: Option<PathBuf>,
    cache: StageCache,
}

impl Runner {
    pub fn new(out: Option<PathBuf>) -> Self {
        Runner { out, cache: StageCache::default() }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    /// Number of stage results served from the cache so far.
    pub fn cache_hits(&self) -> usize {
        self.cache.hits.load(Ordering::Relaxed)
    }

    fn disk_dir(&self, key: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|o| o.join("cache").join(key))
    }

    fn graph_seed(config: &ExperimentConfig, seed: u64) -> Option<u64> {
        match &config.dataset {
            DatasetConfig::Sbm(s) => Some(s.graph_seed.unwrap_or_else(|| derive_seed(seed, "graph"))),
            DatasetConfig::Files(_) => None,
        }
    }

    fn data_key(config: &ExperimentConfig, seed: u64) -> String {
        short_hash(&("data", &config.dataset, Self::graph_seed(config, seed)))
    }

    fn prep_key(config: &ExperimentConfig, seed: u64) -> String {
        short_hash(&(
            "prep",
            Self::data_key(config, seed),
            config.ratio,
            config.target_cap,
            &config.prior,
            &config.bp,
            seed,
        ))
    }

    fn model_key(config: &ExperimentConfig, seed: u64, target: TrainTarget) -> String {
        let kind = match target {
            TrainTarget::Posteriors => "posteriors",
            TrainTarget::OneHotLabels => "one_hot",
        };
        short_hash(&("model", Self::prep_key(config, seed), &config.train, kind))
    }

    pub fn load_dataset(&self, config: &ExperimentConfig, seed: u64) -> Result<Arc<Dataset>> {
        let key = Self::data_key(config, seed);
        cached(&self.cache.data, &self.cache.hits, &key, || match &config.dataset {
            DatasetConfig::Sbm(s) => {
                let graph = generate_sbm(&s.params, Self::graph_seed(config, seed).unwrap())?;
                let ids = IdMap::identity(graph.node_count());
                Ok(Dataset { graph, ids })
            }
            DatasetConfig::Files(f) => {
                let loaded = load_graph(
                    &f.edges,
                    &f.labels,
                    f.features.as_deref(),
                    f.class_count,
                    LoadOptions { feature_agnostic: f.feature_agnostic },
                )?;
                Ok(Dataset { graph: loaded.graph, ids: loaded.ids })
            }
        })
    }

    fn prepare(&self, config: &ExperimentConfig, seed: u64, data: &Dataset, times: &mut StageTimings) -> Result<Arc<Prepared>> {
        let key = Self::prep_key(config, seed);
        let disk = self.disk_dir(&key);
        cached(&self.cache.prepared, &self.cache.hits, &key, || {
            if let Some(dir) = &disk {
                if let Some(p) = Self::load_prepared(dir)? {
                    self.cache.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(p);
                }
            }
            let t0 = Instant::now();
            let graph = &data.graph;
            let split = make_split(graph, config.ratio, config.target_cap, derive_seed(seed, "split"))?;
            // Only labeled nodes keep their features.
            let masked = graph.restrict_features(split.labeled.iter().copied());
            let (estimator, fit) = if masked.feature_dim().is_some() {
                let (est, summary) = fit_prior_estimator(&masked, &split, &config.prior.fit)?;
                (Some(est), Some(summary))
            } else {
                (None, None)
            };
            let priors = init_priors(&masked, &split, estimator.as_ref(), &config.prior.init, derive_seed(seed, "prior-init"))?;
            times.priors = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let bp = run_bp(graph, &priors, &config.bp)?;
            times.bp = t1.elapsed().as_secs_f64();

            let prepared = Prepared { split, priors, bp, fit };
            if let Some(dir) = &disk {
                Self::store_prepared(dir, &prepared)?;
            }
            Ok(prepared)
        })
    }

    fn store_prepared(dir: &Path, p: &Prepared) -> Result<()> {
        let meta = BpMeta {
            iterations_run: p.bp.iterations_run,
            converged: p.bp.converged,
            amplitude_trace: p.bp.amplitude_trace.clone(),
            numerical_events: p.bp.numerical_events,
            fit: p.fit.clone(),
            split: p.split.clone(),
        };
        write_file(&dir.join("priors.txt"), p.priors.to_text())?;
        write_file(&dir.join("posteriors.txt"), p.bp.posteriors.to_text())?;
        // Written last: its presence marks a complete entry.
        write_file(&dir.join("meta.json"), serde_json::to_string(&meta)?)
    }

    fn load_prepared(dir: &Path) -> Result<Option<Prepared>> {
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Ok(None);
        }
        let meta: BpMeta = serde_json::from_str(&read_file(&meta_path)?)?;
        let priors = PriorField::read(&dir.join("priors.txt"))?;
        let posteriors = PriorField::read(&dir.join("posteriors.txt"))?;
        Ok(Some(Prepared {
            split: meta.split,
            priors,
            bp: BpResult {
                posteriors,
                iterations_run: meta.iterations_run,
                converged: meta.converged,
                amplitude_trace: meta.amplitude_trace,
                numerical_events: meta.numerical_events,
            },
            fit: meta.fit,
        }))
    }

    fn trained(
        &self,
        config: &ExperimentConfig,
        seed: u64,
        data: &Dataset,
        prep: &Prepared,
        target: TrainTarget,
        times: &mut StageTimings,
    ) -> Result<Arc<Trained>> {
        let key = Self::model_key(config, seed, target);
        let disk = self.disk_dir(&key);
        cached(&self.cache.models, &self.cache.hits, &key, || {
            if let Some(dir) = &disk {
                let ckpt = dir.join("model.ckpt");
                let trace = dir.join("loss.json");
                if ckpt.exists() && trace.exists() {
                    self.cache.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(Trained { model: GnnModel::load(&ckpt)?, loss_trace: serde_json::from_str(&read_file(&trace)?)? });
                }
            }
            let t0 = Instant::now();
            let graph = &data.graph;
            let tc = &config.train;
            let init = GnnModel::new(graph.class_count(), tc.hidden_dim, tc.layers, derive_seed(seed, &format!("gnn-init-{}", tc.seed)));
            let view = EdgeWeightedView::new(graph);
            let TrainOutcome { model, loss_trace } = match target {
                TrainTarget::Posteriors => gnn::train(init, &view, &prep.priors, &prep.bp.posteriors, tc)?,
                TrainTarget::OneHotLabels => {
                    let mut targets = PriorField::uniform(graph.node_count(), graph.class_count());
                    let nodes: Vec<NodeId> = prep.split.labeled.iter().copied().collect();
                    for &i in &nodes {
                        targets.set(i, ProbVector::one_hot(graph.class_count(), graph.label(i).expect("labeled nodes have labels")));
                    }
                    gnn::train_on(init, &view, &prep.priors, &targets, &nodes, tc)?
                }
            };
            times.train = t0.elapsed().as_secs_f64();
            if let Some(dir) = &disk {
                write_file(&dir.join("model.ckpt"), model.to_checkpoint())?;
                write_file(&dir.join("loss.json"), serde_json::to_string(&loss_trace)?)?;
            }
            Ok(Trained { model, loss_trace })
        })
    }

    fn seed_dir(&self, config: &ExperimentConfig, seed: u64) -> Option<PathBuf> {
        self.out.as_ref().map(|o| o.join("runs").join(config.hash()).join(seed.to_string()))
    }

    /// Everything up to the explanatory subgraphs of one seed, without predictions.
    pub fn explain_seed(&self, config: &ExperimentConfig, seed: u64) -> Result<Vec<ExplanatorySubgraph>> {
        config.validate()?;
        let mut times = StageTimings::default();
        let data = self.load_dataset(config, seed)?;
        let prep = self.prepare(config, seed, &data, &mut times)?;
        let trained = self.trained(config, seed, &data, &prep, TrainTarget::Posteriors, &mut times)?;
        let view = EdgeWeightedView::new(&data.graph);
        prep.split
            .target
            .par_iter()
            .map(|&t| {
                let sal = build_saliency(
                    &trained.model,
                    &view,
                    &prep.priors,
                    t,
                    prep.bp.posteriors.get(t),
                    config.explainer.method,
                    config.explainer.ig_steps,
                )?;
                extract_subgraph(&data.graph, &sal, config.explainer.n_nodes)
            })
            .collect()
    }

    fn run_seed(&self, config: &ExperimentConfig, seed: u64) -> Result<(SeedMetrics, BTreeMap<String, String>, StageTimings)> {
        let mut times = StageTimings::default();
        let t0 = Instant::now();
        let data = self.load_dataset(config, seed)?;
        times.data = t0.elapsed().as_secs_f64();
        let graph = &data.graph;
        let prep = self.prepare(config, seed, &data, &mut times)?;
        let split = &prep.split;
        if split.target.is_empty() {
            return Err(Error::validation("split has no target nodes"));
        }

        let mut trained = None;
        let mut subgraphs: Option<Vec<ExplanatorySubgraph>> = None;
        let predictions: Vec<Prediction> = match config.mode {
            Mode::Ablation1 => split.target.iter().map(|&t| Prediction::new(t, prep.bp.posteriors.get(t).clone())).collect(),
            Mode::Ablation2 | Mode::Ablation3 => {
                let kind = if config.mode == Mode::Ablation2 { TrainTarget::Posteriors } else { TrainTarget::OneHotLabels };
                let tr = self.trained(config, seed, &data, &prep, kind, &mut times)?;
                let t1 = Instant::now();
                let all = gnn::forward(&tr.model, &EdgeWeightedView::new(graph), &prep.priors);
                times.predict = t1.elapsed().as_secs_f64();
                trained = Some(tr);
                split.target.iter().map(|&t| all[t].clone()).collect()
            }
            Mode::Full | Mode::RandomWalkBaseline => {
                let t1 = Instant::now();
                let subs: Vec<ExplanatorySubgraph> = if config.mode == Mode::Full {
                    let tr = self.trained(config, seed, &data, &prep, TrainTarget::Posteriors, &mut times)?;
                    let view = EdgeWeightedView::new(graph);
                    let subs = split
                        .target
                        .par_iter()
                        .map(|&t| {
                            let sal = build_saliency(
                                &tr.model,
                                &view,
                                &prep.priors,
                                t,
                                prep.bp.posteriors.get(t),
                                config.explainer.method,
                                config.explainer.ig_steps,
                            )?;
                            extract_subgraph(graph, &sal, config.explainer.n_nodes)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    trained = Some(tr);
                    subs
                } else {
                    split
                        .target
                        .par_iter()
                        .map(|&t| random_walk_subgraph(graph, t, config.explainer.n_nodes, derive_seed(seed, &format!("walk-{t}"))))
                        .collect::<Result<Vec<_>>>()?
                };
                times.explain = t1.elapsed().as_secs_f64();
                let t2 = Instant::now();
                let preds = subs
                    .par_iter()
                    .map(|s| predict_on_subgraph(s, &prep.priors, &config.bp))
                    .collect::<Result<Vec<_>>>()?;
                times.predict = t2.elapsed().as_secs_f64();
                subgraphs = Some(subs);
                preds
            }
        };

        let accuracy = evaluate_accuracy(&predictions, graph.labels())?;
        let records: Vec<TargetRecord> = predictions
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let sub = subgraphs.as_ref().map(|s| &s[k]);
                TargetRecord {
                    target: p.node,
                    prediction: p.label,
                    truth: graph.label(p.node).expect("targets have ground truth"),
                    faithfulness: sub.map(|_| {
                        faithfulness(
                            prep.bp.posteriors.get(p.node),
                            &p.distribution,
                            config.explainer.faithfulness_mode,
                            config.explainer.smoothing,
                        )
                    }),
                    coverage_flag: sub.map(|s| s.nodes.iter().any(|v| split.is_labeled(*v))),
                    subgraph_size: sub.map(ExplanatorySubgraph::size),
                }
            })
            .collect();
        let mean_of = |f: &dyn Fn(&TargetRecord) -> Option<f64>| {
            let v: Vec<f64> = records.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };

        let metrics = SeedMetrics {
            accuracy,
            mean_faithfulness: mean_of(&|r| r.faithfulness),
            label_coverage: mean_of(&|r| r.coverage_flag.map(|b| f64::from(u8::from(b)))),
            mean_subgraph_size: mean_of(&|r| r.subgraph_size.map(|s| s as f64)),
            labeled: split.labeled.len(),
            targets: split.target.len(),
            bp_iterations: prep.bp.iterations_run,
            bp_converged: prep.bp.converged,
            bp_numerical_events: prep.bp.numerical_events,
            prior_fit_iterations: prep.fit.as_ref().map(|f| f.iterations),
            train_epochs: trained.as_ref().map(|t| t.loss_trace.len()),
            final_train_loss: trained.as_ref().and_then(|t| t.loss_trace.last().copied()),
            graph: GraphSummary {
                nodes: graph.node_count(),
                edges: graph.edge_count(),
                classes: graph.class_count(),
                average_degree: graph.average_degree(),
                density: graph.density(),
            },
        };

        let mut artifacts = BTreeMap::new();
        if let (Some(dir), Some(out)) = (self.seed_dir(config, seed), self.out.as_ref()) {
            let mut put = |name: &str, body: String| -> Result<()> {
                let path = dir.join(name);
                write_file(&path, body)?;
                let rel = path.strip_prefix(out).unwrap_or(&path);
                artifacts.insert(name.to_string(), rel.to_string_lossy().into_owned());
                Ok(())
            };
            put("split.json", serde_json::to_string_pretty(split)?)?;
            put("priors.txt", prep.priors.to_text())?;
            put("posteriors.txt", prep.bp.posteriors.to_text())?;
            put("bp_trace.csv", prep.bp.trace_csv())?;
            put("metrics.csv", metrics_csv(&records))?;
            if let Some(tr) = &trained {
                put("model.ckpt", tr.model.to_checkpoint())?;
                put("loss.csv", TrainOutcome { model: tr.model.clone(), loss_trace: tr.loss_trace.clone() }.loss_csv())?;
            }
            if let Some(subs) = &subgraphs {
                put("subgraphs.txt", subgraph_dump(subs))?;
            }
        }
        Ok((metrics, artifacts, times))
    }

    /// Runs every seed of `config` in its configured mode.
    pub fn run(&self, config: &ExperimentConfig) -> Result<RunReport> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<(SeedReport, StageTimings)> = pool.install(|| {
            config
                .seeds
                .par_iter()
                .map(|&seed| match self.run_seed(config, seed) {
                    Ok((metrics, artifacts, times)) => (SeedReport { seed, outcome: SeedOutcome::Ok { metrics, artifacts } }, times),
                    Err(e) => {
                        log::error!("seed {seed} failed: {e}");
                        (SeedReport { seed, outcome: SeedOutcome::Failed { error: e.to_string() } }, StageTimings::default())
                    }
                })
                .collect()
        });
        if results.iter().all(|(r, _)| r.metrics().is_none()) {
            let first = results.iter().find_map(|(r, _)| match &r.outcome {
                SeedOutcome::Failed { error } => Some(error.clone()),
                SeedOutcome::Ok { .. } => None,
            });
            return Err(Error::Training(format!("every seed failed; first error: {}", first.unwrap_or_default())));
        }

        let seeds: Vec<SeedReport> = results.iter().map(|(r, _)| r.clone()).collect();
        let timings = results.iter().map(|(r, t)| (r.seed.to_string(), t.clone())).collect();
        let hash = config.hash();
        let run_dir = self.out.as_ref().map(|_| format!("runs/{hash}"));
        let report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: hash.clone(),
            mode: config.mode.name().to_string(),
            config: config.clone(),
            aggregate: Aggregate::over(&seeds),
            partial: seeds.iter().any(|s| s.metrics().is_none()),
            seeds,
            run_dir,
            timings,
        };
        if let Some(out) = &self.out {
            let dir = out.join("runs").join(&hash);
            write_file(&dir.join("report.json"), report.to_json())?;
            if let DatasetConfig::Files(_) = &config.dataset {
                let data = self.load_dataset(config, config.seeds[0])?;
                let body: String = data.ids.original.iter().enumerate().map(|(i, id)| format!("{i} {id}\n")).collect();
                write_file(&dir.join("id_map.txt"), body)?;
            }
        }
        Ok(report)
    }

    /// The full pipeline. The config's mode must be `full`.
    pub fn run_baed(&self, config: &ExperimentConfig) -> Result<RunReport> {
        if config.mode != Mode::Full {
            return Err(Error::Config(format!("run_baed needs mode full, got {}", config.mode.name())));
        }
        self.run(config)
    }

    pub fn run_ablation(&self, config: &ExperimentConfig) -> Result<RunReport> {
        if !config.mode.is_ablation() {
            return Err(Error::Config(format!("run_ablation needs an ablation mode, got {}", config.mode.name())));
        }
        self.run(config)
    }
}

/// Formats an optional float for CSV output.
pub(crate) fn csv_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
