//! Construction of a starting path compatible with the evidence.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;

use super::ffbs::ffbs;
use super::grid::{project_constraints, Clamp};
use super::SamplerError;
use crate::model::{
    is_compatible, rate_bound, ClassId, Discipline, Job, NetworkSpec, NetworkState, ObservationSequence, Params, Path,
    StationId, StepConstraint, TaskId,
};

#[derive(Debug, Default)]
struct TaskEvidence {
    arrival: Option<(f64, Option<ClassId>)>,
    services: Vec<(f64, StationId)>,
    departure: Option<f64>,
}

/// One hop of a task's route. `anchor` is the observation time pinning the
/// hop, if any.
#[derive(Debug, Clone, Copy)]
struct Hop {
    from: StationId,
    to: StationId,
    class_to: ClassId,
    anchor: Option<f64>,
}

type Node = (StationId, ClassId, usize);

/// Shortest route, in hops, from the task's arrival through its observed
/// services to its departure (or to any station when no departure was seen).
/// Edges are explored in increasing `(station, class)` order.
fn route(task: TaskId, ev: &TaskEvidence, spec: &NetworkSpec, params: &Params) -> Result<Vec<Hop>, SamplerError> {
    let no_route = |detail: &str| SamplerError::NoRoute {
        task,
        detail: detail.to_string(),
    };
    let (t_arr, class) = ev.arrival.ok_or_else(|| no_route("no arrival observed"))?;
    let routing = spec.routing();
    let hidden_ok = spec.obs_prob() < 1.0;
    let n = ev.services.len();
    let targets = |from: StationId, c: ClassId| -> Vec<(StationId, ClassId)> {
        let Some(r) = routing.row_index(from, c) else { return Vec::new() };
        let mut t: Vec<(StationId, ClassId)> = routing.rows[r]
            .targets
            .iter()
            .zip(&params.routing[r])
            .filter(|(_, &p)| p > 0.0)
            .map(|(t, _)| (t.to, t.class))
            .collect();
        t.sort_unstable();
        t
    };

    let mut parent: HashMap<Node, Option<(Node, Hop)>> = HashMap::new();
    let mut queue = VecDeque::new();
    let classes: Vec<ClassId> = match class {
        Some(c) => vec![c],
        None => spec.arrival_classes().to_vec(),
    };
    let mut starts = Vec::new();
    for c in classes {
        if !(params.arrival[c] > 0.0) {
            continue;
        }
        for (to, c2) in targets(0, c) {
            starts.push((to, c2));
        }
    }
    starts.sort_unstable();
    for (to, c2) in starts {
        let node = (to, c2, 0);
        if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(node) {
            e.insert(None);
            queue.push_back(node);
        }
    }
    let first_hop = |node: Node| Hop {
        from: 0,
        to: node.0,
        class_to: node.1,
        anchor: Some(t_arr),
    };

    let mut goal: Option<(Node, Option<Hop>)> = None;
    while let Some(node) = queue.pop_front() {
        let (i, c, j) = node;
        if j == n {
            match ev.departure {
                None => {
                    goal = Some((node, None));
                    break;
                }
                Some(t_dep) => {
                    if targets(i, c).iter().any(|&(to, _)| to == 0) {
                        let exit = Hop {
                            from: i,
                            to: 0,
                            class_to: c,
                            anchor: Some(t_dep),
                        };
                        goal = Some((node, Some(exit)));
                        break;
                    }
                }
            }
        }
        for (to, c2) in targets(i, c) {
            if to == 0 {
                continue;
            }
            let mut push = |next: Node, anchor: Option<f64>| {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(next) {
                    e.insert(Some((
                        node,
                        Hop {
                            from: i,
                            to,
                            class_to: c2,
                            anchor,
                        },
                    )));
                    queue.push_back(next);
                }
            };
            if j < n && ev.services[j].1 == i {
                push((to, c2, j + 1), Some(ev.services[j].0));
            }
            if hidden_ok {
                push((to, c2, j), None);
            }
        }
    }
    let (mut node, exit) = goal.ok_or_else(|| no_route("no route through the observed stations"))?;
    let mut hops = Vec::new();
    if let Some(h) = exit {
        hops.push(h);
    }
    while let Some(Some((prev, hop))) = parent.get(&node).copied() {
        hops.push(hop);
        node = prev;
    }
    hops.push(first_hop(node));
    hops.reverse();
    Ok(hops)
}

/// Places unanchored hops evenly between the anchors around them; hops after
/// the last anchor are spread before the horizon.
fn schedule(hops: &[Hop], horizon: f64) -> Vec<f64> {
    let mut times = vec![f64::NAN; hops.len()];
    let mut k = 0;
    while k < hops.len() {
        if let Some(t) = hops[k].anchor {
            times[k] = t;
            k += 1;
            continue;
        }
        let start = k;
        while k < hops.len() && hops[k].anchor.is_none() {
            k += 1;
        }
        let lo = times[start - 1];
        let hi = if k < hops.len() { hops[k].anchor.expect("anchored") } else { horizon };
        let r = (k - start) as f64;
        for (s, slot) in times[start..k].iter_mut().enumerate() {
            *slot = lo + (hi - lo) * (s as f64 + 1.0) / (r + 1.0);
        }
    }
    times
}

fn group_by_task(obs: &ObservationSequence) -> BTreeMap<TaskId, TaskEvidence> {
    let mut tasks: BTreeMap<TaskId, TaskEvidence> = BTreeMap::new();
    for r in obs.records() {
        match r.constraint {
            StepConstraint::ArrivalOf { task, class } => tasks.entry(task).or_default().arrival = Some((r.time, class)),
            StepConstraint::DepartureOf { task } => tasks.entry(task).or_default().departure = Some(r.time),
            StepConstraint::ServiceAt { station, task } => tasks.entry(task).or_default().services.push((r.time, station)),
            _ => {}
        }
    }
    tasks
}

/// Merges per-task routes into one path, or `None` when the interleaving
/// breaks a discipline or two events share a time.
fn merge(events: &mut [(f64, TaskId, Hop)], spec: &NetworkSpec, horizon: f64) -> Option<Path> {
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    if events.windows(2).any(|w| w[0].0 == w[1].0) {
        return None;
    }
    let mut x = NetworkState::empty(spec.station_count());
    let mut states = Vec::with_capacity(events.len());
    for &(_, task, hop) in events.iter() {
        let mut stations: Vec<Vec<Job>> = (1..=x.station_count()).map(|i| x.station(i).to_vec()).collect();
        if hop.from != 0 {
            let (i, pos, _) = x.locate(task)?;
            if i != hop.from || (spec.discipline(i) == Discipline::Fcfs && pos != 0) {
                return None;
            }
            stations[i - 1].remove(pos);
        }
        if hop.to != 0 {
            stations[hop.to - 1].push(Job {
                task,
                class: hop.class_to,
            });
        }
        x = NetworkState::from_stations(stations);
        states.push(x.clone());
    }
    let times = events.iter().map(|e| e.0).collect();
    Path::new(spec, horizon, times, states).ok()
}

/// Builds a path compatible with `obs`.
///
/// Each task gets its shortest feasible route with hidden hops evenly spaced
/// between observations. If the merged routes violate a queue discipline, a
/// path is drawn instead by unclamped filtering on a dense grid under `params`.
pub fn initial_path<R: Rng + ?Sized>(
    obs: &ObservationSequence,
    spec: &NetworkSpec,
    params: &Params,
    support_cap: usize,
    rng: &mut R,
) -> Result<Path, SamplerError> {
    let horizon = obs.horizon();
    let mut events = Vec::new();
    for (task, ev) in group_by_task(obs) {
        let hops = route(task, &ev, spec, params)?;
        for (t, hop) in schedule(&hops, horizon).into_iter().zip(hops) {
            events.push((t, task, hop));
        }
    }
    if let Some(path) = merge(&mut events, spec, horizon) {
        if is_compatible(&path, obs) {
            return Ok(path);
        }
    }
    log::debug!("evenly spaced routes conflict; inserting tasks one by one");
    inserted_path(obs, spec, params, support_cap, rng)
}

/// Clamp-keeping probabilities tried, in order, when inserting one task.
const KEEP_SCHEDULE: [f64; 12] = [1.0, 1.0, 0.8, 0.8, 0.6, 0.6, 0.4, 0.4, 0.2, 0.2, 0.0, 0.0];

/// Adds tasks one at a time in order of arrival. Each insertion filters over
/// the current path's times plus a few points per gap in the new task's
/// window, clamping the transitions already placed. When that has no
/// feasible state, clamps are released at random with growing probability.
fn inserted_path<R: Rng + ?Sized>(
    obs: &ObservationSequence,
    spec: &NetworkSpec,
    params: &Params,
    support_cap: usize,
    rng: &mut R,
) -> Result<Path, SamplerError> {
    let horizon = obs.horizon();
    let omega = 2.0 * rate_bound(params, spec);
    let mut order: Vec<(f64, TaskId, f64)> = group_by_task(obs)
        .into_iter()
        .map(|(task, ev)| {
            let start = ev.arrival.map_or(0.0, |a| a.0);
            (start, task, ev.departure.unwrap_or(horizon))
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut included = std::collections::HashSet::new();
    let mut path = Path::empty(spec.station_count(), horizon);
    for &(start, task, end) in &order {
        included.insert(task);
        let records: Vec<_> = obs
            .records()
            .iter()
            .filter(|r| r.constraint.task().is_some_and(|t| included.contains(&t)))
            .copied()
            .collect();
        let sub = ObservationSequence::new(horizon, records)?;
        let mut last_err = None;
        let mut placed = None;
        for (attempt, &keep) in KEEP_SCHEDULE.iter().enumerate() {
            let fill = if attempt % 2 == 0 { 4 } else { 10 };
            let mut grid: Vec<(f64, Clamp)> = path
                .times()
                .iter()
                .zip(path.transitions())
                .map(|(&t, &g)| {
                    let clamp = if keep >= 1.0 || rng.random::<f64>() < keep {
                        Clamp::Exact(g)
                    } else {
                        Clamp::Unrestricted
                    };
                    (t, clamp)
                })
                .collect();
            for r in sub.records() {
                if r.constraint.task() == Some(task) {
                    grid.push((r.time, Clamp::Unrestricted));
                }
            }
            grid.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut anchors: Vec<f64> = vec![start];
            anchors.extend(grid.iter().map(|g| g.0).filter(|&t| t > start && t < end));
            anchors.push(end);
            for w in anchors.windows(2) {
                for s in 1..=fill {
                    let t = w[0] + (w[1] - w[0]) * s as f64 / (fill + 1) as f64;
                    if t > w[0] && t < w[1] {
                        grid.push((t, Clamp::Unrestricted));
                    }
                }
            }
            grid.sort_by(|a, b| a.0.total_cmp(&b.0));
            grid.dedup_by(|a, b| a.0 == b.0);
            let times: Vec<f64> = grid.iter().map(|g| g.0).collect();
            let clamps: Vec<Clamp> = grid.iter().map(|g| g.1).collect();
            let cgrid = project_constraints(&times, horizon, &sub, &clamps)?;
            match ffbs(&cgrid, params, spec, omega, support_cap, rng) {
                Ok(out) => {
                    placed = Some(out.path.strip(spec)?);
                    break;
                }
                Err(e @ (SamplerError::EmptySupport { .. } | SamplerError::SupportCap { .. })) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        path = match placed {
            Some(p) => p,
            None => {
                return Err(SamplerError::NoRoute {
                    task,
                    detail: format!("cannot be placed among earlier tasks: {}", last_err.expect("attempted")),
                })
            }
        };
    }
    if !is_compatible(&path, obs) {
        return Err(SamplerError::Inconsistent("starting path is incompatible".into()));
    }
    Ok(path)
}
