//! One Gibbs sweep over a latent network path.
//!
//! A sweep redraws the uniformization grid given the current path, draws
//! auxiliary clamps from the uniformized path, intersects them with the
//! evidence, and resamples the whole state sequence by forward filtering
//! backward sampling before dropping the virtual jumps.

pub(crate) mod ffbs;
mod grid;
mod init;

use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::model::{is_compatible, rate_bound, ModelError, NetworkSpec, ObservationSequence, Params, Path, TaskId};

pub use ffbs::{ffbs, FfbsOutput, DEFAULT_SUPPORT_CAP};
pub use grid::{draw_auxiliaries, project_constraints, resample_times, Clamp, ConstraintGrid, SlotConstraint};
pub use init::initial_path;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("dominating rate {omega} must exceed the rate bound {bound}")]
    DominatingRate { omega: f64, bound: f64 },
    #[error("dominating-rate factor must exceed 1, got {0}")]
    InvalidOmegaFactor(f64),
    #[error("auxiliary clamp probability must lie in [0, 1], got {0}")]
    InvalidAuxProb(f64),
    #[error("observation at t={time} is not a grid point")]
    ObservationOffGrid { time: f64 },
    #[error("slot {slot} (t={time}): contradictory constraints: {detail}")]
    Contradiction { slot: usize, time: f64, detail: String },
    #[error("slot {slot} (t={time}): no state satisfies the constraints")]
    EmptySupport { slot: usize, time: f64 },
    #[error("slot {slot} (t={time}): support of {size} states exceeds the cap of {cap}")]
    SupportCap { slot: usize, time: f64, size: usize, cap: usize },
    #[error("task {task}: {detail}")]
    NoRoute { task: TaskId, detail: String },
    #[error("sampler invariant violated: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tuning of a path sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// `omega = omega_factor * rate_bound`; must exceed 1.
    pub omega_factor: f64,
    /// Probability of clamping each slot.
    pub aux_prob: f64,
    pub support_cap: usize,
}

impl SweepConfig {
    pub fn new(omega_factor: f64, aux_prob: f64) -> Self {
        Self {
            omega_factor,
            aux_prob,
            support_cap: DEFAULT_SUPPORT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub path: Path,
    /// Uniformization grid the path was drawn on.
    pub grid: Vec<f64>,
    pub virtual_count: usize,
    /// Per-slot support sizes of the forward pass.
    pub support: Vec<usize>,
}

/// Resamples `path` given `obs` and fixed parameters.
pub fn sweep<R: Rng + ?Sized>(
    path: &Path,
    obs: &ObservationSequence,
    params: &Params,
    spec: &NetworkSpec,
    cfg: &SweepConfig,
    rng: &mut R,
) -> Result<SweepOutcome, SamplerError> {
    if !(cfg.omega_factor > 1.0 && cfg.omega_factor.is_finite()) {
        return Err(SamplerError::InvalidOmegaFactor(cfg.omega_factor));
    }
    let omega = cfg.omega_factor * rate_bound(params, spec);
    let grid = resample_times(path, params, spec, omega, rng)?;
    let upath = path.uniformize(&grid)?;
    let clamps = draw_auxiliaries(&upath, spec, cfg.aux_prob, rng)?;
    let cgrid = project_constraints(&grid, path.horizon(), obs, &clamps)?;
    drop(upath);
    let out = ffbs(&cgrid, params, spec, omega, cfg.support_cap, rng)?;
    let virtual_count = out.path.virtual_count();
    let new_path = out.path.strip(spec)?;
    if !is_compatible(&new_path, obs) {
        return Err(SamplerError::Inconsistent("swept path is incompatible with the evidence".into()));
    }
    Ok(SweepOutcome {
        path: new_path,
        grid,
        virtual_count,
        support: out.support,
    })
}

/// Writes per-slot support sizes as `slot,time,support` CSV.
pub fn write_support_csv<W: Write>(mut w: W, times: &[f64], support: &[usize]) -> std::io::Result<()> {
    writeln!(w, "slot,time,support")?;
    for (i, (t, s)) in times.iter().zip(support).enumerate() {
        writeln!(w, "{i},{t},{s}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
