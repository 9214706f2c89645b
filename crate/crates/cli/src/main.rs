//! `splitsde-cli`: run JSON-configured experiments, list the catalog, or
//! sweep an experiment across seeds.
//!
//! Exit codes: 0 — all declared criteria pass; 1 — at least one criterion
//! failed; 2 — configuration, input, or output error. Diagnostics go to
//! stderr; data (summary JSON, catalog text) goes to stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use splitsde_cli::config::{CliError, CliResult};
use splitsde_cli::experiments::Summary;
use splitsde_cli::{catalog, io, load_config, run_experiment, LoadedConfig};

#[derive(Parser)]
#[command(
    name = "splitsde-cli",
    version,
    about = "Experiment harness for product-formula SDE solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run one experiment from a JSON configuration file.
    Run {
        /// Path to the configuration JSON.
        config: PathBuf,
        /// Output directory (overrides the config's out_dir; default "out").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides SPLITSDE_THREADS; default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the experiment catalog.
    List,
    /// Run one experiment once per seed and aggregate the summaries.
    Sweep {
        /// Path to the configuration JSON.
        config: PathBuf,
        /// Comma-separated seeds (at least two).
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Output directory root; per-seed results go to seed-<s>/ below it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides SPLITSDE_THREADS; default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn resolve_threads(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        return Ok(Some(n));
    }
    match std::env::var("SPLITSDE_THREADS") {
        Ok(text) => {
            let n: usize = text.parse().map_err(|_| {
                CliError::Config(format!("SPLITSDE_THREADS must be a positive integer, got '{text}'"))
            })?;
            if n == 0 {
                return Err(CliError::Config(
                    "SPLITSDE_THREADS must be at least 1".into(),
                ));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Runs `body` inside a dedicated thread pool when a worker count is set;
/// results are identical either way, per the fixed-order reduction contract.
fn with_pool<T: Send>(
    threads: Option<usize>,
    body: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

fn resolve_out_dir(flag: Option<PathBuf>, config: &LoadedConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn report_failures(summary: &Summary) {
    for row in summary.failed() {
        eprintln!(
            "criterion failed: {} (measured {:e}, tolerance {:e})",
            row.criterion, row.measured, row.tolerance
        );
    }
}

fn run_one(config_path: &Path, out: Option<PathBuf>, threads: Option<usize>) -> CliResult<bool> {
    let config = load_config(config_path)?;
    let threads = resolve_threads(threads)?;
    let out_dir = resolve_out_dir(out, &config);
    eprintln!(
        "running {} (seed {}) -> {}",
        config.kind,
        config.master_seed,
        out_dir.display()
    );
    let outcome = with_pool(threads, || run_experiment(&config))?;
    io::write_outcome(&out_dir, &outcome)?;
    let json = io::to_json_bytes(&outcome.summary)?;
    print!("{}", String::from_utf8_lossy(&json));
    report_failures(&outcome.summary);
    Ok(outcome.summary.all_pass())
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    criteria: Vec<splitsde_cli::CriterionRow>,
}

#[derive(Serialize)]
struct AggregateRow {
    criterion: String,
    mean_measured: f64,
    stddev_measured: f64,
    all_pass: bool,
}

#[derive(Serialize)]
struct SweepSummary {
    experiment: String,
    seeds: Vec<u64>,
    per_seed: Vec<SeedSummary>,
    aggregate: Vec<AggregateRow>,
}

fn run_sweep(
    config_path: &Path,
    seeds: &[u64],
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> CliResult<bool> {
    if seeds.len() < 2 {
        return Err(CliError::Config(
            "sweep needs at least two seeds".into(),
        ));
    }
    let base = load_config(config_path)?;
    let threads = resolve_threads(threads)?;
    let out_root = resolve_out_dir(out, &base);

    let mut per_seed = Vec::new();
    for &seed in seeds {
        let config = LoadedConfig {
            master_seed: seed,
            ..base.clone()
        };
        eprintln!("sweep: {} at seed {seed}", config.kind);
        let outcome = with_pool(threads, || run_experiment(&config))?;
        io::write_outcome(&out_root.join(format!("seed-{seed}")), &outcome)?;
        per_seed.push(SeedSummary {
            seed,
            criteria: outcome.summary.criteria,
        });
    }

    let first = &per_seed[0].criteria;
    let mut aggregate = Vec::new();
    for (i, row) in first.iter().enumerate() {
        let values: Vec<f64> = per_seed
            .iter()
            .map(|s| {
                s.criteria
                    .get(i)
                    .filter(|c| c.criterion == row.criterion)
                    .map(|c| c.measured)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        aggregate.push(AggregateRow {
            criterion: row.criterion.clone(),
            mean_measured: mean,
            stddev_measured: variance.max(0.0).sqrt(),
            all_pass: per_seed
                .iter()
                .all(|s| s.criteria.get(i).map(|c| c.pass).unwrap_or(false)),
        });
    }

    let all_pass = aggregate.iter().all(|a| a.all_pass);
    let summary = SweepSummary {
        experiment: base.kind.clone(),
        seeds: seeds.to_vec(),
        per_seed,
        aggregate,
    };
    let json = io::to_json_bytes(&summary)?;
    std::fs::create_dir_all(&out_root).map_err(|e| CliError::Io(e.to_string()))?;
    io::write_atomic(&out_root, "sweep_summary.json", &json)?;
    print!("{}", String::from_utf8_lossy(&json));
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Run { config, out, threads } => run_one(&config, out, threads),
        Commands::List => {
            print!("{}", catalog::catalog());
            Ok(true)
        }
        Commands::Sweep {
            config,
            seeds,
            out,
            threads,
        } => run_sweep(&config, &seeds, out, threads),
    };
    match result {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}
