use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use faildetect_core::toy::{run_toy_experiment, DEFAULT_SAMPLES};
use faildetect_core::ScoreMethod;
use serde_json::json;

use crate::bench::run_benchmark_with_scores;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::report::{emit_report, read_result, write_score_csvs, write_toy_report};
use crate::synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Debug, Parser)]
#[command(name = "faildetect", version, about = "Post-hoc failure detection benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrated vs overconfident toy models with identical rankings.
    SimulateToy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        n: usize,
        #[arg(long, default_value_t = 15)]
        bins: usize,
    },
    /// Write synthetic artifacts and a run config referencing them.
    GenerateSynthetic {
        /// Synthetic generator settings (JSON); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample score CSVs for every (score, seed).
    Score(RunArgs),
    /// results.json only.
    Evaluate(RunArgs),
    /// Scores, results and the full report.
    Run(RunArgs),
    /// Report files from an existing results.json.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated score identifiers, overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub scores: Option<Vec<ScoreMethod>>,
    /// Fail instead of recording skipped (score, seed) pairs.
    #[arg(long)]
    pub strict: bool,
}

fn load_run(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(scores) = &args.scores {
        config.scores = Some(scores.clone());
    }
    let out = match (&args.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => config.resolve(o),
        (None, None) => return Err(Error::InvalidConfig("no output directory: pass --out or set `out`".into())),
    };
    Ok((config, out))
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn load_synthetic(path: &Path) -> Result<SyntheticConfig> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Runs one subcommand and returns a JSON summary for stdout.
pub fn execute(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::SimulateToy { seed, out, n, bins } => {
            let report = run_toy_experiment(n, seed, bins)?;
            let files = write_toy_report(&report, &out)?;
            Ok(json!({
                "ece_model1": report.ece_model1,
                "ece_model2": report.ece_model2,
                "roc_auc_model1": report.roc_auc_model1,
                "roc_auc_model2": report.roc_auc_model2,
                "files": display(&files),
            }))
        }
        Command::GenerateSynthetic { config, seed, out } => {
            let mut synth = match config {
                Some(p) => load_synthetic(&p)?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                synth.seed = s;
            }
            let run = generate_synthetic(&synth, &out)?;
            Ok(json!({
                "run_config": out.join("run_config.json").display().to_string(),
                "seeds": run.seeds.len(),
            }))
        }
        Command::Score(args) => {
            let (config, out) = load_run(&args)?;
            let (_, runs) = run_benchmark_with_scores(&config, args.strict)?;
            let files = write_score_csvs(&runs, &out)?;
            Ok(json!({ "files": display(&files) }))
        }
        Command::Evaluate(args) => {
            let (config, out) = load_run(&args)?;
            let (result, _) = run_benchmark_with_scores(&config, args.strict)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let path = out.join("results.json");
            let json = serde_json::to_vec_pretty(&result).map_err(|e| Error::json(&path, e))?;
            fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            Ok(json!({ "results": path.display().to_string(), "skipped": result.skipped.len() }))
        }
        Command::Run(args) => {
            let (config, out) = load_run(&args)?;
            let (result, runs) = run_benchmark_with_scores(&config, args.strict)?;
            let mut files = emit_report(&result, &out)?;
            files.extend(write_score_csvs(&runs, &out)?);
            Ok(json!({
                "reports": result.reports.len(),
                "skipped": result.skipped,
                "files": display(&files),
            }))
        }
        Command::Report { results, out } => {
            let result = read_result(&results)?;
            let files = emit_report(&result, &out)?;
            Ok(json!({ "files": display(&files) }))
        }
    }
}
