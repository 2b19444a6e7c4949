mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use qnet::dataset::{read_dataset, write_dataset};
use qnet::diagnostics::{summarize, summarize_columns, Summary};
use qnet::engine::{apply_named, run_gibbs_with, RunOptions, SampleChain};
use qnet::rng::Streams;
use qnet::simulate::simulate_realizations;
use qnet::validation::{run_suite, SUITES};
use serde::Serialize;

use config::Experiment;

#[derive(Parser)]
#[command(name = "qnet", version, about = "Simulate queueing networks and infer their rates from partial observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the config's generation block.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Generation seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the config's chains on a dataset.
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Dataset manifest (overrides the config).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed of the first chain; chain k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        /// Run only the first N chains.
        #[arg(long)]
        chains: Option<usize>,
        /// Separate tied observation times by this offset instead of failing.
        #[arg(long)]
        tie_offset: Option<f64>,
        /// Sweep threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Discard existing checkpoints instead of resuming from them.
        #[arg(long)]
        fresh: bool,
        /// Write per-slot support sizes of every sweep to support.csv.
        #[arg(long)]
        support_dump: bool,
    },
    /// Run an oracle suite (or `all`).
    Validate {
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Summarize a samples CSV written by `infer`.
    Summarize {
        #[arg(long)]
        samples: PathBuf,
        /// Directory for summary.json and correlation.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Validation(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out, seed),
        Command::Infer {
            config,
            dataset,
            out,
            seed,
            chains,
            tie_offset,
            workers,
            fresh,
            support_dump,
        } => cmd_infer(InferArgs {
            config,
            dataset,
            out,
            seed,
            chains,
            tie_offset,
            workers,
            fresh,
            support_dump,
        }),
        Command::Validate { suite, seed } => cmd_validate(&suite, seed),
        Command::Summarize { samples, out } => cmd_summarize(&samples, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn output_dir(exp: &Experiment, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| exp.config.output.clone())
}

fn cmd_simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> CmdResult {
    let exp = Experiment::load(config).map_err(usage)?;
    let gen = exp
        .config
        .generation
        .as_ref()
        .ok_or_else(|| usage(anyhow!("{} has no generation block", config.display())))?;
    let spec = &exp.spec;
    let mut params = spec.declared_params().clone();
    apply_named(spec, &mut params, &gen.params).map_err(usage)?;
    let horizons = gen.horizons().map_err(usage)?;
    let q = gen.obs_prob.unwrap_or(spec.obs_prob());
    if horizons.is_empty() {
        log::warn!("no realizations requested; writing an empty dataset");
    }
    let streams = Streams::new(seed.unwrap_or(gen.seed));
    let reals = simulate_realizations(&params, spec, &horizons, q, &streams).map_err(data)?;
    let obs: Vec<_> = reals.iter().map(|r| r.observations.clone()).collect();
    let out = output_dir(&exp, out);
    let dir = out.join("data");
    let manifest = write_dataset(&dir, spec, &obs).map_err(data)?;
    let tasks: usize = obs.iter().map(|o| o.arrival_count()).sum();
    let records: usize = obs.iter().map(|o| o.len()).sum();
    println!(
        "wrote {} realizations to {}: {tasks} tasks, {records} observation records, total horizon {:.4}",
        manifest.realizations.len(),
        dir.display(),
        manifest.total_horizon()
    );
    Ok(())
}

struct InferArgs {
    config: PathBuf,
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    chains: Option<usize>,
    tie_offset: Option<f64>,
    workers: Option<usize>,
    fresh: bool,
    support_dump: bool,
}

#[derive(Serialize)]
struct ChainReport {
    name: String,
    aux_prob: f64,
    omega_factor: f64,
    iterations: usize,
    seconds: f64,
    mean_ess: f64,
    min_ess: f64,
    summary: Summary,
}

#[derive(Serialize)]
struct MergedSummary {
    chains: Vec<ChainReport>,
    pooled: Option<Summary>,
}

fn cmd_infer(a: InferArgs) -> CmdResult {
    let exp = Experiment::load(&a.config).map_err(usage)?;
    let out = output_dir(&exp, a.out);
    let manifest = a.dataset.unwrap_or_else(|| exp.manifest(&out));
    if let Some(eps) = a.tie_offset {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(usage(anyhow!("tie offset must be positive, got {eps}")));
        }
    }
    let spec = &exp.spec;
    let obs = read_dataset(&manifest, spec, a.tie_offset).map_err(data)?;
    let mut blocks = exp.config.chains.clone();
    if blocks.is_empty() {
        return Err(usage(anyhow!("{} defines no chains", a.config.display())));
    }
    if let Some(n) = a.chains {
        if n == 0 || n > blocks.len() {
            return Err(usage(anyhow!("--chains must be in 1..={}", blocks.len())));
        }
        blocks.truncate(n);
    }
    log::info!("{} realizations from {}", obs.len(), manifest.display());

    let mut reports = Vec::new();
    let mut pooled_rows: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (k, block) in blocks.iter().enumerate() {
        let mut cfg = block.config.clone();
        if let Some(s) = a.seed {
            cfg.master_seed = s + k as u64;
        }
        if let Some(w) = a.workers {
            cfg.worker_count = w;
        }
        let dir = out.join(&block.name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(data)?;
        let checkpoint = dir.join("checkpoint.bin");
        if a.fresh && checkpoint.exists() {
            fs::remove_file(&checkpoint).map_err(data)?;
        }
        let opts = RunOptions {
            checkpoint: Some(checkpoint),
            support_dump: a.support_dump.then(|| dir.join("support.csv")),
        };
        log::info!("chain {}: p={}, omega factor={}", block.name, cfg.aux_prob, cfg.omega_factor);
        let run = run_gibbs_with(spec, &obs, &cfg, &opts)
            .with_context(|| format!("chain {}", block.name))
            .map_err(data)?;
        let chain = &run.chain;
        write_chain(chain, &dir).map_err(data)?;
        let summary = summarize(chain).with_context(|| format!("chain {}", block.name)).map_err(data)?;
        write_summary(&summary, &dir).map_err(data)?;
        println!("chain {}\n{}", block.name, summary.table());
        names = chain.names.clone();
        pooled_rows.extend(chain.rows.iter().cloned());
        reports.push(ChainReport {
            name: block.name.clone(),
            aux_prob: cfg.aux_prob,
            omega_factor: cfg.omega_factor,
            iterations: cfg.iterations,
            seconds: chain.total_seconds(),
            mean_ess: summary.mean_ess(),
            min_ess: summary.min_ess(),
            summary,
        });
    }

    println!("{:<16} {:>6} {:>7} {:>10} {:>11} {:>10} {:>10}", "chain", "p", "omega", "iterations", "run time", "ESS mean", "ESS min");
    for r in &reports {
        println!(
            "{:<16} {:>6} {:>7} {:>10} {:>10.1}s {:>10.0} {:>10.0}",
            r.name, r.aux_prob, r.omega_factor, r.iterations, r.seconds, r.mean_ess, r.min_ess
        );
    }
    let pooled = if reports.len() > 1 {
        let cols: Vec<Vec<f64>> = (0..names.len()).map(|j| pooled_rows.iter().map(|r| r[j]).collect()).collect();
        let s = summarize_columns(&names, &cols).map_err(data)?;
        println!("pooled over {} chains\n{}", reports.len(), s.table());
        Some(s)
    } else {
        None
    };
    let merged = MergedSummary { chains: reports, pooled };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&merged).expect("summary serializes"))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data)?;
    Ok(())
}

fn write_chain(chain: &SampleChain, dir: &Path) -> anyhow::Result<()> {
    let samples = dir.join("samples.csv");
    chain
        .write_csv(BufWriter::new(File::create(&samples)?))
        .with_context(|| format!("writing {}", samples.display()))?;
    let trace = dir.join("trace.csv");
    chain
        .write_trace_csv(BufWriter::new(File::create(&trace)?))
        .with_context(|| format!("writing {}", trace.display()))?;
    Ok(())
}

fn write_summary(summary: &Summary, dir: &Path) -> anyhow::Result<()> {
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    fs::write(dir.join("summary.txt"), summary.table())?;
    summary.write_correlation_csv(BufWriter::new(File::create(dir.join("correlation.csv"))?))?;
    Ok(())
}

fn cmd_validate(suite: &str, seed: u64) -> CmdResult {
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let mut failed = Vec::new();
    for name in names {
        let report = run_suite(name, seed).map_err(|e| match e {
            qnet::validation::ValidationError::UnknownSuite(_) => usage(e),
            other => data(other),
        })?;
        println!("{report}");
        if !report.passed() {
            failed.push(name.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(failed.join(", ")))
    }
}

fn cmd_summarize(samples: &Path, out: Option<&Path>) -> CmdResult {
    let mut reader = csv::Reader::from_path(samples)
        .with_context(|| format!("opening {}", samples.display()))
        .map_err(data)?;
    let header = reader.headers().map_err(data)?.clone();
    let skip = usize::from(header.get(0) == Some("iteration"));
    let names: Vec<String> = header.iter().skip(skip).map(str::to_string).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(data)?;
        for (j, field) in rec.iter().skip(skip).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("{}:{}: bad number {field:?}", samples.display(), n + 2))
                .map_err(data)?;
            cols[j].push(v);
        }
    }
    let summary = summarize_columns(&names, &cols).map_err(data)?;
    print!("{}", summary.table());
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(data)?;
        write_summary(&summary, dir).map_err(data)?;
    }
    Ok(())
}
