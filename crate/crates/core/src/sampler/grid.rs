//! Uniformization grid, auxiliary clamps and per-slot constraints.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::model::{
    classify, Generator, Move, NetworkSpec, ObservationSequence, Params, Path, Step, StepConstraint, TaskTransition,
    UniformizedPath,
};

/// Draws a fresh uniformization grid for `path`: its own transition times plus,
/// on each constant segment with state `x`, points of a Poisson process of
/// rate `omega - |Q_x|`. `omega` must strictly exceed the rate bound.
pub fn resample_times<R: Rng + ?Sized>(
    path: &Path,
    params: &Params,
    spec: &NetworkSpec,
    omega: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    let gen = Generator::new(spec, params);
    let bound = gen.rate_bound();
    if !(omega > bound && omega.is_finite()) {
        return Err(SamplerError::DominatingRate { omega, bound });
    }
    let mut grid = Vec::with_capacity(path.len() * 2 + (omega * path.horizon()) as usize);
    let mut k = 0;
    path.for_each_segment(|a, b, x| {
        let rate = omega - gen.exit_rate(x);
        let mean = rate * (b - a);
        if mean > 0.0 {
            let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            let start = grid.len();
            for _ in 0..n {
                let t = a + rng.random::<f64>() * (b - a);
                if t > a && t < b {
                    grid.push(t);
                }
            }
            grid[start..].sort_by(f64::total_cmp);
        }
        if k < path.len() {
            grid.push(b);
            k += 1;
        }
    });
    grid.dedup();
    Ok(grid)
}

/// Auxiliary restriction for one grid slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clamp {
    Unrestricted,
    /// The slot must realize exactly this task transition.
    Exact(TaskTransition),
    /// The slot must be a virtual jump.
    Virtual,
}

/// Per slot, with probability `p`, clamps the slot to what `upath` does there;
/// otherwise leaves it open.
pub fn draw_auxiliaries<R: Rng + ?Sized>(
    upath: &UniformizedPath,
    spec: &NetworkSpec,
    p: f64,
    rng: &mut R,
) -> Result<Vec<Clamp>, SamplerError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SamplerError::InvalidAuxProb(p));
    }
    let mut prev = crate::model::NetworkState::empty(spec.station_count());
    let mut out = Vec::with_capacity(upath.len());
    for (i, x) in upath.states().iter().enumerate() {
        let clamp = if p > 0.0 && rng.random::<f64>() < p {
            match classify(&prev, x, spec) {
                Step::Real(g) => Clamp::Exact(g),
                Step::Virtual => Clamp::Virtual,
                Step::Incompatible => {
                    return Err(SamplerError::Inconsistent(format!(
                        "uniformized step {i} at t={} is not a task transition",
                        upath.times()[i]
                    )))
                }
            }
        } else {
            Clamp::Unrestricted
        };
        out.push(clamp);
        prev = x.clone();
    }
    Ok(out)
}

/// Evidence at one slot: what was observed there (or `InnerOrVirtual` when
/// nothing was) together with the auxiliary clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotConstraint {
    pub observed: StepConstraint,
    pub clamp: Clamp,
}

impl SlotConstraint {
    pub fn is_observed(&self) -> bool {
        self.observed.is_observation()
    }

    /// The tighter of the two constraints. Candidate moves are enumerated from
    /// it and then checked against both with [`Self::admits_move`].
    pub fn effective(&self) -> StepConstraint {
        match self.clamp {
            Clamp::Unrestricted => self.observed,
            Clamp::Exact(g) => StepConstraint::ExactTriplet(g),
            Clamp::Virtual => StepConstraint::Virtual,
        }
    }

    pub fn admits_move(&self, m: &Move) -> bool {
        self.observed.admits_move(m)
            && match self.clamp {
                Clamp::Unrestricted => true,
                Clamp::Exact(g) => m.transition() == g,
                Clamp::Virtual => false,
            }
    }

    pub fn admits_virtual(&self) -> bool {
        self.observed.admits_virtual() && !matches!(self.clamp, Clamp::Exact(_))
    }
}

/// Grid times with the constraint in force at each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGrid {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub slots: Vec<SlotConstraint>,
}

impl ConstraintGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Combines evidence and clamps slot by slot. Unobserved slots forbid arrivals
/// and departures, since those are always observed.
pub fn project_constraints(
    grid: &[f64],
    horizon: f64,
    obs: &ObservationSequence,
    clamps: &[Clamp],
) -> Result<ConstraintGrid, SamplerError> {
    if clamps.len() != grid.len() {
        return Err(SamplerError::Inconsistent(format!(
            "{} clamps for {} grid slots",
            clamps.len(),
            grid.len()
        )));
    }
    let records = obs.records();
    let mut j = 0;
    let mut slots = Vec::with_capacity(grid.len());
    for (i, (&t, &clamp)) in grid.iter().zip(clamps).enumerate() {
        if j < records.len() && records[j].time < t {
            return Err(SamplerError::ObservationOffGrid { time: records[j].time });
        }
        let observed = if j < records.len() && records[j].time == t {
            j += 1;
            records[j - 1].constraint
        } else {
            StepConstraint::InnerOrVirtual
        };
        let ok = match clamp {
            Clamp::Unrestricted => true,
            Clamp::Exact(g) => observed.admits_transition(&g),
            Clamp::Virtual => observed.admits_virtual(),
        };
        if !ok {
            return Err(SamplerError::Contradiction {
                slot: i,
                time: t,
                detail: format!("observation {observed:?} against clamp {clamp:?}"),
            });
        }
        slots.push(SlotConstraint { observed, clamp });
    }
    if j < records.len() {
        return Err(SamplerError::ObservationOffGrid { time: records[j].time });
    }
    Ok(ConstraintGrid {
        horizon,
        times: grid.to_vec(),
        slots,
    })
}
