//! Piecewise-constant network trajectories, their density and compatibility
//! with evidence.

use serde::{Deserialize, Serialize};

use super::observation::{ObservationSequence, StepConstraint};
use super::params::Params;
use super::spec::NetworkSpec;
use super::state::NetworkState;
use super::transition::{classify, Generator, Step, TaskTransition};
use super::ModelError;

/// A trajectory `(t, x)` on `[0, horizon]` starting from the empty network.
/// Every step is a real task transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    stations: usize,
    horizon: f64,
    times: Vec<f64>,
    states: Vec<NetworkState>,
    transitions: Vec<TaskTransition>,
}

impl Path {
    pub fn empty(stations: usize, horizon: f64) -> Self {
        Self {
            stations,
            horizon,
            times: Vec::new(),
            states: Vec::new(),
            transitions: Vec::new(),
        }
    }

    /// Validates the step sequence against the network's disciplines.
    pub fn new(spec: &NetworkSpec, horizon: f64, times: Vec<f64>, states: Vec<NetworkState>) -> Result<Self, ModelError> {
        if times.len() != states.len() {
            return Err(ModelError::InvalidPath("times and states differ in length".into()));
        }
        let m = spec.station_count();
        let mut prev = NetworkState::empty(m);
        let mut last_t = 0.0;
        let mut transitions = Vec::with_capacity(states.len());
        for (k, (&t, s)) in times.iter().zip(&states).enumerate() {
            if !(t > last_t) || t > horizon {
                return Err(ModelError::InvalidPath(format!("step {k} at t={t} is out of order or beyond the horizon")));
            }
            match classify(&prev, s, spec) {
                Step::Real(g) => transitions.push(g),
                Step::Virtual => return Err(ModelError::InvalidPath(format!("step {k} at t={t} is virtual"))),
                Step::Incompatible => {
                    return Err(ModelError::InvalidPath(format!(
                        "step {k} at t={t} is not a single task transition: {prev:?} -> {s:?}"
                    )))
                }
            }
            prev = s.clone();
            last_t = t;
        }
        Ok(Self {
            stations: m,
            horizon,
            times,
            states,
            transitions,
        })
    }

    pub(crate) fn from_parts_unchecked(
        stations: usize,
        horizon: f64,
        times: Vec<f64>,
        states: Vec<NetworkState>,
        transitions: Vec<TaskTransition>,
    ) -> Self {
        Self {
            stations,
            horizon,
            times,
            states,
            transitions,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn station_count(&self) -> usize {
        self.stations
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[NetworkState] {
        &self.states
    }

    pub fn transitions(&self) -> &[TaskTransition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_state(&self) -> NetworkState {
        NetworkState::empty(self.stations)
    }

    /// State in force on `[times[k-1], times[k])`; `k = 0` is the initial state.
    pub fn state_before(&self, k: usize) -> NetworkState {
        if k == 0 {
            self.initial_state()
        } else {
            self.states[k - 1].clone()
        }
    }

    /// Number of transitions that are neither arrivals nor departures.
    pub fn inner_count(&self) -> usize {
        self.transitions.iter().filter(|g| g.is_inner()).count()
    }

    /// Visits `(t_start, t_end, state)` for each constant segment, including the
    /// initial segment and the final one up to the horizon.
    pub fn for_each_segment(&self, mut f: impl FnMut(f64, f64, &NetworkState)) {
        let empty = self.initial_state();
        let mut t0 = 0.0;
        let mut cur = &empty;
        for (t, s) in self.times.iter().zip(&self.states) {
            f(t0, *t, cur);
            t0 = *t;
            cur = s;
        }
        f(t0, self.horizon, cur);
    }

    /// Inserts the states of this path at the given grid times. `grid` must
    /// contain every transition time.
    pub fn uniformize(&self, grid: &[f64]) -> Result<UniformizedPath, ModelError> {
        let mut states = Vec::with_capacity(grid.len());
        let mut k = 0;
        let mut cur = self.initial_state();
        for &t in grid {
            if k < self.times.len() && self.times[k] == t {
                cur = self.states[k].clone();
                k += 1;
            } else if k < self.times.len() && self.times[k] < t {
                return Err(ModelError::InvalidPath(format!(
                    "grid skips the transition at t={}",
                    self.times[k]
                )));
            }
            states.push(cur.clone());
        }
        if k != self.times.len() {
            return Err(ModelError::InvalidPath("grid does not cover every transition".into()));
        }
        Ok(UniformizedPath {
            stations: self.stations,
            horizon: self.horizon,
            times: grid.to_vec(),
            states,
        })
    }
}

/// A trajectory on a uniformization grid; steps may be virtual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformizedPath {
    stations: usize,
    horizon: f64,
    times: Vec<f64>,
    states: Vec<NetworkState>,
}

impl UniformizedPath {
    pub fn new(stations: usize, horizon: f64, times: Vec<f64>, states: Vec<NetworkState>) -> Self {
        assert_eq!(times.len(), states.len());
        Self {
            stations,
            horizon,
            times,
            states,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[NetworkState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn virtual_count(&self) -> usize {
        let empty = NetworkState::empty(self.stations);
        let mut prev = &empty;
        let mut n = 0;
        for s in &self.states {
            if s == prev {
                n += 1;
            }
            prev = s;
        }
        n
    }

    /// Drops virtual steps.
    pub fn strip(&self, spec: &NetworkSpec) -> Result<Path, ModelError> {
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut transitions = Vec::new();
        let mut prev = NetworkState::empty(self.stations);
        for (t, s) in self.times.iter().zip(&self.states) {
            match classify(&prev, s, spec) {
                Step::Virtual => continue,
                Step::Real(g) => transitions.push(g),
                Step::Incompatible => {
                    return Err(ModelError::InvalidPath(format!("uniformized step at t={t} is not a task transition")))
                }
            }
            times.push(*t);
            states.push(s.clone());
            prev = s.clone();
        }
        Ok(Path::from_parts_unchecked(self.stations, self.horizon, times, states, transitions))
    }
}

/// Whether `path` makes, at every observation time, a transition satisfying
/// that observation, and makes no arrival or departure at any other time.
pub fn is_compatible(path: &Path, obs: &ObservationSequence) -> bool {
    let records = obs.records();
    let mut j = 0;
    for (k, (&t, g)) in path.times.iter().zip(&path.transitions).enumerate() {
        if j < records.len() && records[j].time < t {
            return false;
        }
        if j < records.len() && records[j].time == t {
            let c = &records[j].constraint;
            if !c.admits_transition(g) {
                return false;
            }
            if let StepConstraint::ArrivalOf { class: Some(class), .. } = *c {
                let joined = path.states[k].station(g.to).last().map(|job| job.class);
                if joined != Some(class) {
                    return false;
                }
            }
            j += 1;
        } else if !g.is_inner() {
            return false;
        }
    }
    j == records.len()
}

/// Unnormalized log density of a path given evidence: Bernoulli penalty for
/// unobserved services times the jump-process likelihood.
pub fn path_log_density(
    path: &Path,
    params: &Params,
    spec: &NetworkSpec,
    obs: &ObservationSequence,
) -> Result<f64, ModelError> {
    if path.horizon != obs.horizon() {
        return Err(ModelError::HorizonMismatch {
            path: path.horizon,
            observations: obs.horizon(),
        });
    }
    if !is_compatible(path, obs) {
        return Ok(f64::NEG_INFINITY);
    }
    let gen = Generator::new(spec, params);
    let unobserved = path.inner_count() as i64 - obs.service_count() as i64;
    let q = spec.obs_prob();
    let mut logp = if unobserved > 0 {
        if q >= 1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        unobserved as f64 * (1.0 - q).ln()
    } else {
        0.0
    };
    let mut prev = path.initial_state();
    let mut t_prev = 0.0;
    for (t, s) in path.times.iter().zip(&path.states) {
        logp += gen.rate(&prev, s).ln() - gen.exit_rate(&prev) * (t - t_prev);
        prev = s.clone();
        t_prev = *t;
    }
    logp -= gen.exit_rate(&prev) * (path.horizon - t_prev);
    Ok(logp)
}
