//! Task transitions and on-the-fly evaluation of the generator.

use serde::{Deserialize, Serialize};

use super::observation::StepConstraint;
use super::params::Params;
use super::spec::{Discipline, NetworkSpec};
use super::state::{Job, NetworkState};
use super::{ClassId, StationId, TaskId};

/// Triplet `(from, to, task)`; station 0 is the exterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskTransition {
    pub from: StationId,
    pub to: StationId,
    pub task: TaskId,
}

impl TaskTransition {
    pub fn new(from: StationId, to: StationId, task: TaskId) -> Self {
        debug_assert!(!(from == 0 && to == 0));
        Self { from, to, task }
    }

    pub fn is_arrival(&self) -> bool {
        self.from == 0
    }

    pub fn is_departure(&self) -> bool {
        self.to == 0
    }

    /// Neither an arrival nor a departure.
    pub fn is_inner(&self) -> bool {
        self.from != 0 && self.to != 0
    }
}

/// Result of comparing two states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Real(TaskTransition),
    Virtual,
    Incompatible,
}

/// A concrete transition out of a state, with its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub from: StationId,
    pub to: StationId,
    pub task: TaskId,
    pub class_from: ClassId,
    pub class_to: ClassId,
    /// Position of the job within its station (0 for arrivals).
    pub position: usize,
    pub rate: f64,
}

impl Move {
    pub fn transition(&self) -> TaskTransition {
        TaskTransition::new(self.from, self.to, self.task)
    }

    pub fn is_inner(&self) -> bool {
        self.from != 0 && self.to != 0
    }

    /// State reached by performing this move from `state`.
    pub fn apply(&self, state: &NetworkState) -> NetworkState {
        let mut next = state.clone();
        if self.from != 0 {
            next.remove(self.from, self.position);
        }
        if self.to != 0 {
            next.push(
                self.to,
                Job {
                    task: self.task,
                    class: self.class_to,
                },
            );
        }
        next
    }
}

/// Finds the index at which `longer` has one extra element relative to `shorter`.
fn removal_index(longer: &[Job], shorter: &[Job]) -> Option<usize> {
    if longer.len() != shorter.len() + 1 {
        return None;
    }
    let k = longer
        .iter()
        .zip(shorter)
        .position(|(a, b)| a != b)
        .unwrap_or(shorter.len());
    (longer[k + 1..] == shorter[k..]).then_some(k)
}

/// Maps a pair of states to the task transition relating them.
///
/// `Real` iff `after` is obtained from `before` by relocating exactly one job
/// in a way the station disciplines permit (FCFS: only the head of line
/// leaves; PS: any job may leave; arrivals join the tail).
pub fn classify(before: &NetworkState, after: &NetworkState, spec: &NetworkSpec) -> Step {
    if before == after {
        return Step::Virtual;
    }
    let m = before.station_count();
    if after.station_count() != m {
        return Step::Incompatible;
    }
    let mut diff = [0usize; 2];
    let mut nd = 0;
    for i in 1..=m {
        if before.station(i) != after.station(i) {
            if nd == 2 {
                return Step::Incompatible;
            }
            diff[nd] = i;
            nd += 1;
        }
    }
    let may_leave = |station: StationId, position: usize| -> bool {
        match spec.discipline(station) {
            Discipline::Fcfs => position == 0,
            Discipline::Ps => true,
        }
    };
    let joined_tail = |station: StationId| -> Option<Job> {
        let (b, a) = (before.station(station), after.station(station));
        (a.len() == b.len() + 1 && a[..b.len()] == *b).then(|| a[b.len()])
    };
    let left_from = |station: StationId| -> Option<(usize, Job)> {
        let (b, a) = (before.station(station), after.station(station));
        let k = removal_index(b, a)?;
        may_leave(station, k).then_some((k, b[k]))
    };
    match nd {
        1 => {
            let i = diff[0];
            if let Some(job) = joined_tail(i) {
                if !before.contains_task(job.task) {
                    return Step::Real(TaskTransition::new(0, i, job.task));
                }
            } else if let Some((_, job)) = left_from(i) {
                return Step::Real(TaskTransition::new(i, 0, job.task));
            }
            Step::Incompatible
        }
        2 => {
            let (a, b) = (diff[0], diff[1]);
            let (src, dst) = if before.len(a) > after.len(a) { (a, b) } else { (b, a) };
            match (left_from(src), joined_tail(dst)) {
                (Some((_, left)), Some(joined)) if left.task == joined.task => {
                    Step::Real(TaskTransition::new(src, dst, left.task))
                }
                _ => Step::Incompatible,
            }
        }
        _ => Step::Incompatible,
    }
}

enum Dest {
    Inner,
    Exit,
    Exactly(StationId),
    Any,
}

impl Dest {
    fn admits(&self, to: StationId) -> bool {
        match self {
            Dest::Inner => to != 0,
            Dest::Exit => to == 0,
            Dest::Exactly(j) => to == *j,
            Dest::Any => true,
        }
    }
}

/// Generator of the network chain for fixed parameters, evaluated lazily.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    spec: &'a NetworkSpec,
    params: &'a Params,
    arrival_total: f64,
    /// Total outgoing rate of a lone `(station, class)` job: `mu * sum(P row)`.
    out_rate: Vec<f64>,
    classes: usize,
}

impl<'a> Generator<'a> {
    pub fn new(spec: &'a NetworkSpec, params: &'a Params) -> Self {
        let routing = spec.routing();
        let nc = spec.class_count();
        let row_total = |from: StationId, c: ClassId| -> f64 {
            routing
                .row_index(from, c)
                .map(|r| params.routing[r].iter().filter(|&&p| p > 0.0).sum())
                .unwrap_or(0.0)
        };
        let arrival_total = (0..nc)
            .filter(|&c| params.arrival[c] > 0.0)
            .map(|c| params.arrival[c] * row_total(0, c))
            .sum();
        let mut out_rate = vec![0.0; spec.station_count() * nc];
        for i in 1..=spec.station_count() {
            for c in 0..nc {
                out_rate[(i - 1) * nc + c] = spec.service_rate(params, i, c) * row_total(i, c);
            }
        }
        Self {
            spec,
            params,
            arrival_total,
            out_rate,
            classes: nc,
        }
    }

    pub fn spec(&self) -> &'a NetworkSpec {
        self.spec
    }

    pub fn params(&self) -> &'a Params {
        self.params
    }

    /// `|Q_x|`, the total rate of leaving `state`.
    pub fn exit_rate(&self, state: &NetworkState) -> f64 {
        let mut total = self.arrival_total;
        for (i, jobs) in state.iter_stations() {
            if jobs.is_empty() {
                continue;
            }
            let base = (i - 1) * self.classes;
            match self.spec.discipline(i) {
                Discipline::Fcfs => total += self.out_rate[base + jobs[0].class],
                Discipline::Ps => {
                    let s: f64 = jobs.iter().map(|j| self.out_rate[base + j.class]).sum();
                    total += s / jobs.len() as f64;
                }
            }
        }
        total
    }

    /// Upper bound on `exit_rate` over the whole state space.
    pub fn rate_bound(&self) -> f64 {
        rate_bound(self.params, self.spec)
    }

    fn arrivals(&self, state: &NetworkState, task: TaskId, class: Option<ClassId>, to: Option<StationId>, out: &mut Vec<Move>) {
        if state.contains_task(task) {
            return;
        }
        let classes = match class {
            Some(c) => c..c + 1,
            None => 0..self.classes,
        };
        for c in classes {
            let lambda = self.params.arrival[c];
            if !(lambda > 0.0) {
                continue;
            }
            let Some(r) = self.spec.routing().row_index(0, c) else { continue };
            let row = &self.spec.routing().rows[r];
            for (t, &p) in row.targets.iter().zip(&self.params.routing[r]) {
                if p > 0.0 && to.is_none_or(|j| j == t.to) {
                    out.push(Move {
                        from: 0,
                        to: t.to,
                        task,
                        class_from: c,
                        class_to: t.class,
                        position: 0,
                        rate: lambda * p,
                    });
                }
            }
        }
    }

    fn services_of(&self, state: &NetworkState, station: StationId, position: usize, dest: Dest, out: &mut Vec<Move>) {
        let jobs = state.station(station);
        let job = jobs[position];
        let share = match self.spec.discipline(station) {
            Discipline::Fcfs if position != 0 => return,
            Discipline::Fcfs => self.spec.service_rate(self.params, station, job.class),
            Discipline::Ps => self.spec.service_rate(self.params, station, job.class) / jobs.len() as f64,
        };
        let Some(r) = self.spec.routing().row_index(station, job.class) else { return };
        let row = &self.spec.routing().rows[r];
        for (t, &p) in row.targets.iter().zip(&self.params.routing[r]) {
            if p > 0.0 && dest.admits(t.to) {
                out.push(Move {
                    from: station,
                    to: t.to,
                    task: job.task,
                    class_from: job.class,
                    class_to: t.class,
                    position,
                    rate: share * p,
                });
            }
        }
    }

    fn all_services(&self, state: &NetworkState, dest: fn() -> Dest, out: &mut Vec<Move>) {
        for i in 1..=state.station_count() {
            let n = state.len(i);
            if n == 0 {
                continue;
            }
            match self.spec.discipline(i) {
                Discipline::Fcfs => self.services_of(state, i, 0, dest(), out),
                Discipline::Ps => {
                    for k in 0..n {
                        self.services_of(state, i, k, dest(), out);
                    }
                }
            }
        }
    }

    /// Appends to `out` every positive-rate move out of `state` admitted by
    /// `filter`. Unconstrained arrivals are given task id `fresh_task`;
    /// constrained ones take the task named by the constraint.
    pub fn moves_into(&self, state: &NetworkState, filter: &StepConstraint, fresh_task: TaskId, out: &mut Vec<Move>) {
        match *filter {
            StepConstraint::Unrestricted => {
                self.arrivals(state, fresh_task, None, None, out);
                self.all_services(state, || Dest::Any, out);
            }
            StepConstraint::ArrivalOf { task, class } => self.arrivals(state, task, class, None, out),
            StepConstraint::DepartureOf { task } => {
                if let Some((i, k, _)) = state.locate(task) {
                    self.services_of(state, i, k, Dest::Exit, out);
                }
            }
            StepConstraint::ServiceAt { station, task } => {
                if let Some((i, k, _)) = state.locate(task) {
                    if i == station {
                        self.services_of(state, i, k, Dest::Inner, out);
                    }
                }
            }
            StepConstraint::InnerOrVirtual => self.all_services(state, || Dest::Inner, out),
            StepConstraint::ExactTriplet(g) => {
                if g.from == 0 {
                    self.arrivals(state, g.task, None, Some(g.to), out);
                } else if let Some((i, k, _)) = state.locate(g.task) {
                    if i == g.from {
                        self.services_of(state, i, k, Dest::Exactly(g.to), out);
                    }
                }
            }
            StepConstraint::Virtual => {}
        }
    }

    pub fn moves(&self, state: &NetworkState, filter: &StepConstraint, fresh_task: TaskId) -> Vec<Move> {
        let mut out = Vec::new();
        self.moves_into(state, filter, fresh_task, &mut out);
        out
    }

    /// `Q_{x,x'}` for a real transition, or 0 if `after` is not reachable in one move.
    pub fn rate(&self, before: &NetworkState, after: &NetworkState) -> f64 {
        match classify(before, after, self.spec) {
            Step::Real(g) => self
                .moves(before, &StepConstraint::ExactTriplet(g), g.task)
                .into_iter()
                .find(|m| m.apply(before) == *after)
                .map(|m| m.rate)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// A successor state together with the transition and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub state: NetworkState,
    pub transition: TaskTransition,
    pub rate: f64,
}

/// All positive-rate successors of `state` admitted by `filter`.
pub fn successors(
    state: &NetworkState,
    params: &Params,
    spec: &NetworkSpec,
    filter: &StepConstraint,
    fresh_task: TaskId,
) -> Vec<Successor> {
    Generator::new(spec, params)
        .moves(state, filter, fresh_task)
        .into_iter()
        .map(|m| Successor {
            state: m.apply(state),
            transition: m.transition(),
            rate: m.rate,
        })
        .collect()
}

pub fn exit_rate(state: &NetworkState, params: &Params, spec: &NetworkSpec) -> f64 {
    Generator::new(spec, params).exit_rate(state)
}

/// `sum_c lambda_c + sum_i max_c mu_i^c`, which dominates every exit rate.
/// The maximum runs over classes that can actually reach station `i`.
pub fn rate_bound(params: &Params, spec: &NetworkSpec) -> f64 {
    let arrivals: f64 = params.arrival.iter().sum();
    let services: f64 = (1..=spec.station_count())
        .map(|i| {
            (0..spec.class_count())
                .filter(|&c| spec.is_reachable(i, c))
                .map(|c| spec.service_rate(params, i, c))
                .fold(0.0, f64::max)
        })
        .sum();
    arrivals + services
}
