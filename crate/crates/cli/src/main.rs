use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpex_core::pipeline::{ExperimentConfig, Mode, Runner, SweepAxis};
use bpex_core::Error;
use clap::{Args, Parser, Subcommand};

/// Explanation-based few-shot node classification.
#[derive(Parser)]
#[command(name = "bpex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory for run artifacts and the stage cache.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config's mode.
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and print its report.
    Run(Common),
    /// Run ablations: the given --mode, or all three when omitted.
    Ablate(Common),
    /// One run per value along an axis; prints the combined CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print the explanatory subgraph of every target.
    Explain(Common),
    /// Check the config and load its dataset.
    Validate(Common),
}

/// Failures sorted by exit code.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::from_file(&common.config).map_err(|e| Failure::Invalid(e.to_string()))?;
    if !common.seed.is_empty() {
        config.seeds = common.seed.clone();
    }
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    config.validate()?;
    Ok(config)
}

fn runner(out: &Path) -> Runner {
    Runner::new(Some(out.to_path_buf()))
}

/// Runs one subcommand and returns what it prints.
fn execute(command: Command) -> Result<String, Failure> {
    let mut out = String::new();
    match command {
        Command::Run(common) => {
            let config = load_config(&common)?;
            let report = runner(&common.out).run(&config)?;
            out = report.to_json() + "\n";
        }
        Command::Ablate(common) => {
            let config = load_config(&common)?;
            let modes = match common.mode {
                Some(m) if m.is_ablation() => vec![m],
                Some(m) => return Err(Failure::Invalid(format!("ablate needs an ablation mode, got {}", m.name()))),
                None => vec![Mode::Ablation1, Mode::Ablation2, Mode::Ablation3],
            };
            let runner = runner(&common.out);
            let mut reports = Vec::new();
            for mode in modes {
                let report = runner.run_ablation(&ExperimentConfig { mode, ..config.clone() })?;
                reports.push(serde_json::to_value(&report).map_err(Error::from)?);
            }
            out = serde_json::to_string_pretty(&reports).map_err(Error::from)? + "\n";
        }
        Command::Sweep { common, axis, values } => {
            let config = load_config(&common)?;
            let outcome = runner(&common.out).sweep(&config, axis, &values)?;
            out = outcome.csv();
        }
        Command::Explain(common) => {
            let config = load_config(&common)?;
            let runner = runner(&common.out);
            for &seed in &config.seeds {
                let _ = writeln!(out, "# seed {seed}");
                for sub in runner.explain_seed(&config, seed)? {
                    let _ = writeln!(out, "{}", sub.dump());
                }
            }
        }
        Command::Validate(common) => {
            let config = load_config(&common)?;
            let data = Runner::new(None).load_dataset(&config, config.seeds[0])?;
            let g = &data.graph;
            let with_labels = g.labels().iter().filter(|l| l.is_some()).count();
            let summary = serde_json::json!({
                "config_hash": config.hash(),
                "nodes": g.node_count(),
                "edges": g.edge_count(),
                "classes": g.class_count(),
                "with_labels": with_labels,
                "average_degree": g.average_degree(),
                "density": g.density(),
                "feature_dim": g.feature_dim(),
            });
            out = serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n";
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            // A closed pipe (e.g. `| head`) is not a failure.
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
