//! Full Gibbs sampler over paths and parameters for a set of realizations.

mod checkpoint;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_compatible, ModelError, NetworkSpec, ObservationSequence, Params, Path};
use crate::posterior::{draw_params, PosteriorError, SufficientStats};
use crate::rng::{Domain, Streams};
use crate::sampler::{initial_path, sweep, SamplerError, SweepConfig, DEFAULT_SUPPORT_CAP};

pub use checkpoint::{data_digest, Checkpoint, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("no realizations to fit")]
    NoData,
    #[error("realization {realization}: cannot build a starting path: {source}")]
    Init { realization: usize, source: SamplerError },
    #[error("iteration {iteration}, realization {realization}: {source}")]
    Sweep {
        iteration: usize,
        realization: usize,
        source: SamplerError,
    },
    #[error("iteration {iteration}, realization {realization}: path is incompatible with the evidence")]
    Incompatible { iteration: usize, realization: usize },
    #[error("iteration {iteration}: {source}")]
    Posterior { iteration: usize, source: PosteriorError },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_thin() -> usize {
    1
}

fn default_checkpoint_interval() -> usize {
    100
}

fn default_support_cap() -> usize {
    DEFAULT_SUPPORT_CAP
}

/// Tuning and bookkeeping of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub omega_factor: f64,
    pub aux_prob: f64,
    pub master_seed: u64,
    /// Sweep threads; 0 uses all cores. Results do not depend on it.
    #[serde(default)]
    pub worker_count: usize,
    /// Iterations between checkpoints and compatibility spot checks.
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: usize,
    #[serde(default = "default_support_cap")]
    pub support_cap: usize,
    /// Starting values by parameter name (`lambda[c1]`, `mu[2][c1]`,
    /// `P[1][c1][0][c1]`). Without any, the first parameters are drawn from
    /// their conditional given the starting paths.
    #[serde(default)]
    pub initial: BTreeMap<String, f64>,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, omega_factor: f64, aux_prob: f64, master_seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            thin: 1,
            omega_factor,
            aux_prob,
            master_seed,
            worker_count: 0,
            checkpoint_interval: default_checkpoint_interval(),
            support_cap: DEFAULT_SUPPORT_CAP,
            initial: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.burn_in >= self.iterations {
            return bad(format!("burn-in {} must be below iterations {}", self.burn_in, self.iterations));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !(self.omega_factor > 1.0 && self.omega_factor.is_finite()) {
            return bad(format!("omega factor must exceed 1, got {}", self.omega_factor));
        }
        if !(0.0..=1.0).contains(&self.aux_prob) {
            return bad(format!("aux probability must lie in [0, 1], got {}", self.aux_prob));
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint interval must be at least 1".into());
        }
        if self.support_cap == 0 {
            return bad("support cap must be positive".into());
        }
        Ok(())
    }

    /// Number of rows a complete run retains.
    pub fn retained_rows(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1) % self.thin == 0
    }

    /// Fields that must agree between a checkpoint and its continuation.
    fn same_chain(&self, other: &ChainConfig) -> bool {
        let mut a = self.clone();
        a.iterations = other.iterations;
        a.worker_count = other.worker_count;
        a.checkpoint_interval = other.checkpoint_interval;
        a == *other
    }
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub seconds: f64,
    pub grid_points: u64,
    pub virtual_jumps: u64,
    /// Largest forward-pass support over all slots and realizations.
    pub max_support: u64,
    /// Mean forward-pass support over all slots and realizations.
    pub mean_support: f64,
}

/// Retained parameter draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleChain {
    pub names: Vec<String>,
    /// One flattened parameter vector per retained iteration.
    pub rows: Vec<Vec<f64>>,
    /// Iteration index of each row.
    pub kept: Vec<usize>,
    /// Bookkeeping for every iteration run, burn-in included.
    pub trace: Vec<IterationTrace>,
}

impl SampleChain {
    fn new(names: Vec<String>) -> Self {
        Self {
            names,
            rows: Vec::new(),
            kept: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.names.len()).map(|k| self.rows.iter().map(|r| r[k]).collect()).collect()
    }

    pub fn total_seconds(&self) -> f64 {
        self.trace.iter().map(|t| t.seconds).sum()
    }

    /// Writes `iteration,<names...>` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,{}", self.names.join(","))?;
        for (it, row) in self.kept.iter().zip(&self.rows) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{it},{}", vals.join(","))?;
        }
        Ok(())
    }

    /// Writes the per-iteration trace as CSV.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,seconds,grid_points,virtual_jumps,max_support,mean_support")?;
        for (it, t) in self.trace.iter().enumerate() {
            writeln!(
                w,
                "{it},{},{},{},{},{}",
                t.seconds, t.grid_points, t.virtual_jumps, t.max_support, t.mean_support
            )?;
        }
        Ok(())
    }
}

/// Result of a run: the chain and the sampler state after the last iteration.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chain: SampleChain,
    pub params: Params,
    pub paths: Vec<Path>,
    /// Iteration the run started from (0 unless resumed).
    pub resumed_from: usize,
}

/// Optional side channels of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Checkpoint file; resumed from when present, written every
    /// `checkpoint_interval` iterations and at the end.
    pub checkpoint: Option<PathBuf>,
    /// CSV of per-slot support sizes of every sweep.
    pub support_dump: Option<PathBuf>,
}

/// Applies named starting values to `params`.
pub fn apply_named(spec: &NetworkSpec, params: &mut Params, values: &BTreeMap<String, f64>) -> Result<(), EngineError> {
    let names = spec.parameter_names();
    let mut flat = spec.flatten(params);
    for (name, &v) in values {
        let k = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| EngineError::Config(format!("unknown parameter {name:?}")))?;
        flat[k] = v;
    }
    *params = spec.unflatten(&flat, params)?;
    params.validate(spec)?;
    Ok(())
}

/// Parameters that guide the starting paths: declared rates, with free
/// routing rows made uniform.
fn guide_params(spec: &NetworkSpec) -> Params {
    let mut p = spec.declared_params().clone();
    for (r, row) in spec.routing().rows.iter().enumerate() {
        if !row.fixed {
            let n = row.targets.len() as f64;
            p.routing[r] = vec![1.0 / n; row.targets.len()];
        }
    }
    p
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, EngineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EngineError::Config(format!("thread pool: {e}")))
}

fn stats_of(paths: &[Path], spec: &NetworkSpec, iteration: usize) -> Result<SufficientStats, EngineError> {
    let parts: Vec<SufficientStats> = paths
        .par_iter()
        .map(|p| SufficientStats::from_path(p, spec))
        .collect::<Result<_, _>>()
        .map_err(|source| EngineError::Posterior { iteration, source })?;
    let mut total = SufficientStats::zero(spec);
    for s in &parts {
        total += s;
    }
    Ok(total)
}

/// Runs a chain without checkpointing.
pub fn run_gibbs(spec: &NetworkSpec, data: &[ObservationSequence], cfg: &ChainConfig) -> Result<SampleChain, EngineError> {
    Ok(run_gibbs_with(spec, data, cfg, &RunOptions::default())?.chain)
}

/// Runs (or resumes) a chain. Draws depend only on the master seed, the
/// spec and the data, never on the worker count.
pub fn run_gibbs_with(
    spec: &NetworkSpec,
    data: &[ObservationSequence],
    cfg: &ChainConfig,
    opts: &RunOptions,
) -> Result<RunOutput, EngineError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(EngineError::NoData);
    }
    let streams = Streams::new(cfg.master_seed);
    let workers = pool(cfg.worker_count)?;
    let data_hash = data_digest(data);

    let resumed = match &opts.checkpoint {
        Some(file) if file.exists() => Some(Checkpoint::load(file, spec, &data_hash, cfg)?),
        Some(file) => {
            log::info!("no checkpoint at {}; starting fresh", file.display());
            None
        }
        None => None,
    };

    let (mut paths, mut theta, mut chain, start) = match resumed {
        Some(ck) => {
            log::info!("resuming at iteration {}", ck.next_iteration);
            (ck.paths, ck.params, ck.chain, ck.next_iteration)
        }
        None => {
            let (paths, theta) = workers.install(|| initialize(spec, data, cfg, &streams))?;
            (paths, theta, SampleChain::new(spec.parameter_names()), 0)
        }
    };

    let mut dump = match &opts.support_dump {
        Some(file) => {
            let mut w = BufWriter::new(File::create(file)?);
            writeln!(w, "iteration,realization,slot,time,support")?;
            Some(w)
        }
        None => None,
    };

    let sweep_cfg = SweepConfig {
        omega_factor: cfg.omega_factor,
        aux_prob: cfg.aux_prob,
        support_cap: cfg.support_cap,
    };
    for iteration in start..cfg.iterations {
        let clock = Instant::now();
        let outcomes = workers.install(|| {
            paths
                .par_iter()
                .zip(data)
                .enumerate()
                .map(|(k, (path, obs))| {
                    let mut rng = streams.stream(Domain::Sweep, iteration as u64, k as u64);
                    sweep(path, obs, &theta, spec, &sweep_cfg, &mut rng).map_err(|source| EngineError::Sweep {
                        iteration,
                        realization: k,
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let mut trace = IterationTrace {
            seconds: 0.0,
            grid_points: 0,
            virtual_jumps: 0,
            max_support: 0,
            mean_support: 0.0,
        };
        let mut support_total = 0u64;
        for (k, out) in outcomes.iter().enumerate() {
            trace.grid_points += out.grid.len() as u64;
            trace.virtual_jumps += out.virtual_count as u64;
            for &s in &out.support {
                trace.max_support = trace.max_support.max(s as u64);
                support_total += s as u64;
            }
            if let Some(w) = dump.as_mut() {
                for (slot, (t, s)) in out.grid.iter().zip(&out.support).enumerate() {
                    writeln!(w, "{iteration},{k},{slot},{t},{s}")?;
                }
            }
        }
        if trace.grid_points > 0 {
            trace.mean_support = support_total as f64 / trace.grid_points as f64;
        }
        paths = outcomes.into_iter().map(|o| o.path).collect();

        let stats = workers.install(|| stats_of(&paths, spec, iteration))?;
        let mut rng = streams.stream(Domain::Parameters, iteration as u64, 0);
        theta = draw_params(&stats, spec, &theta, &mut rng).map_err(|source| EngineError::Posterior { iteration, source })?;

        if cfg.keeps(iteration) {
            chain.rows.push(spec.flatten(&theta));
            chain.kept.push(iteration);
        }
        trace.seconds = clock.elapsed().as_secs_f64();
        chain.trace.push(trace);

        let done = iteration + 1;
        if done % cfg.checkpoint_interval == 0 || done == cfg.iterations {
            for (k, (p, o)) in paths.iter().zip(data).enumerate() {
                if !is_compatible(p, o) {
                    return Err(EngineError::Incompatible { iteration, realization: k });
                }
            }
            if let Some(file) = &opts.checkpoint {
                Checkpoint::new(spec, &data_hash, cfg, done, &paths, &theta, &chain).save(file)?;
            }
            log::info!("iteration {done}/{}", cfg.iterations);
        }
    }
    if let Some(mut w) = dump {
        w.flush()?;
    }
    Ok(RunOutput {
        chain,
        params: theta,
        paths,
        resumed_from: start,
    })
}

/// Starting paths and parameters.
fn initialize(
    spec: &NetworkSpec,
    data: &[ObservationSequence],
    cfg: &ChainConfig,
    streams: &Streams,
) -> Result<(Vec<Path>, Params), EngineError> {
    let mut guide = guide_params(spec);
    if !cfg.initial.is_empty() {
        apply_named(spec, &mut guide, &cfg.initial)?;
    }
    let paths: Vec<Path> = data
        .par_iter()
        .enumerate()
        .map(|(k, obs)| {
            let mut rng = streams.stream(Domain::Initialization, k as u64, 0);
            initial_path(obs, spec, &guide, cfg.support_cap, &mut rng)
                .map_err(|source| EngineError::Init { realization: k, source })
        })
        .collect::<Result<_, _>>()?;
    let theta = if cfg.initial.is_empty() {
        let stats = stats_of(&paths, spec, 0)?;
        let mut rng = streams.stream(Domain::Initialization, u32::MAX as u64, 0);
        draw_params(&stats, spec, &guide, &mut rng).map_err(|source| EngineError::Posterior { iteration: 0, source })?
    } else {
        guide
    };
    Ok((paths, theta))
}

/// Writes `SampleChain` rows and trace next to each other.
pub fn write_chain_files(chain: &SampleChain, samples: &FsPath, trace: Option<&FsPath>) -> std::io::Result<()> {
    chain.write_csv(BufWriter::new(File::create(samples)?))?;
    if let Some(t) = trace {
        chain.write_trace_csv(BufWriter::new(File::create(t)?))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
