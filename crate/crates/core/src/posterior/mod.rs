//! Sufficient statistics of latent paths and conditional parameter draws.

mod truncated;

use std::ops::AddAssign;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{topological_order, Discipline, ModelError, NetworkSpec, NetworkState, Params, Path};

pub use truncated::truncated_gamma;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("{param}: {count} services recorded with zero exposure time")]
    ZeroExposure { param: String, count: u64 },
    #[error("{param}: posterior is improper (prior rate 0 and no exposure)")]
    Improper { param: String },
    #[error("total observation horizon must be positive")]
    NoHorizon,
    #[error("path step {step} does not match a routing entry: {detail}")]
    UnknownRoute { step: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Event counts and exposure times summed over realizations. Per
/// `(station, class)` arrays are indexed by `(station - 1) * classes + class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub classes: usize,
    pub arrivals: Vec<u64>,
    pub total_horizon: f64,
    pub services: Vec<u64>,
    /// Time the head-of-line job at an FCFS station has the class.
    pub fcfs_busy: Vec<f64>,
    /// Integral of the per-class service share at a PS station.
    pub ps_share: Vec<f64>,
    /// Counts per routing row, aligned with the row's targets.
    pub routing: Vec<Vec<u64>>,
}

impl SufficientStats {
    pub fn zero(spec: &NetworkSpec) -> Self {
        let (m, nc) = (spec.station_count(), spec.class_count());
        Self {
            classes: nc,
            arrivals: vec![0; nc],
            total_horizon: 0.0,
            services: vec![0; m * nc],
            fcfs_busy: vec![0.0; m * nc],
            ps_share: vec![0.0; m * nc],
            routing: spec.routing().rows.iter().map(|r| vec![0; r.targets.len()]).collect(),
        }
    }

    fn at(&self, station: usize, class: usize) -> usize {
        (station - 1) * self.classes + class
    }

    pub fn service_count(&self, station: usize, class: usize) -> u64 {
        self.services[self.at(station, class)]
    }

    /// Exposure of `(station, class)` to service: head-of-line time at FCFS
    /// stations, share integral at PS stations.
    pub fn exposure(&self, spec: &NetworkSpec, station: usize, class: usize) -> f64 {
        let k = self.at(station, class);
        match spec.discipline(station) {
            Discipline::Fcfs => self.fcfs_busy[k],
            Discipline::Ps => self.ps_share[k],
        }
    }

    /// Statistics of one path.
    pub fn from_path(path: &Path, spec: &NetworkSpec) -> Result<Self, PosteriorError> {
        let mut s = Self::zero(spec);
        s.total_horizon = path.horizon();
        let routing = spec.routing();
        let empty = NetworkState::empty(spec.station_count());
        let mut prev = &empty;
        for (k, (g, x)) in path.transitions().iter().zip(path.states()).enumerate() {
            let bad = |detail: String| PosteriorError::UnknownRoute { step: k, detail };
            let to_class = |st: &NetworkState| st.locate(g.task).map(|(_, _, j)| j.class);
            let class_from = if g.is_arrival() {
                to_class(x).ok_or_else(|| bad(format!("arriving task {} missing", g.task)))?
            } else {
                to_class(prev).ok_or_else(|| bad(format!("task {} missing", g.task)))?
            };
            let class_to = if g.to == 0 { class_from } else { to_class(x).ok_or_else(|| bad(format!("task {} missing", g.task)))? };
            if g.is_arrival() {
                s.arrivals[class_from] += 1;
            } else {
                let i = s.at(g.from, class_from);
                s.services[i] += 1;
            }
            let row = routing
                .row_index(g.from, class_from)
                .ok_or_else(|| bad(format!("no routing row for station {} class {class_from}", g.from)))?;
            let target = routing.rows[row]
                .targets
                .iter()
                .position(|t| t.to == g.to && (g.to == 0 || t.class == class_to))
                .ok_or_else(|| bad(format!("no entry {} -> {} for class {class_to}", g.from, g.to)))?;
            s.routing[row][target] += 1;
            prev = x;
        }
        path.for_each_segment(|a, b, x| {
            let dt = b - a;
            if dt <= 0.0 {
                return;
            }
            for i in 1..=x.station_count() {
                let jobs = x.station(i);
                if jobs.is_empty() {
                    continue;
                }
                match spec.discipline(i) {
                    Discipline::Fcfs => {
                        let k = s.at(i, jobs[0].class);
                        s.fcfs_busy[k] += dt;
                    }
                    Discipline::Ps => {
                        let share = dt / jobs.len() as f64;
                        for j in jobs {
                            let k = s.at(i, j.class);
                            s.ps_share[k] += share;
                        }
                    }
                }
            }
        });
        Ok(s)
    }
}

impl AddAssign<&SufficientStats> for SufficientStats {
    fn add_assign(&mut self, o: &SufficientStats) {
        fn add<T: Copy + AddAssign>(a: &mut [T], b: &[T]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        add(&mut self.arrivals, &o.arrivals);
        self.total_horizon += o.total_horizon;
        add(&mut self.services, &o.services);
        add(&mut self.fcfs_busy, &o.fcfs_busy);
        add(&mut self.ps_share, &o.ps_share);
        for (a, b) in self.routing.iter_mut().zip(&o.routing) {
            add(a, b);
        }
    }
}

/// Statistics summed over `paths`, folded in order.
pub fn sufficient_stats(paths: &[Path], spec: &NetworkSpec) -> Result<SufficientStats, PosteriorError> {
    let mut total = SufficientStats::zero(spec);
    for p in paths {
        total += &SufficientStats::from_path(p, spec)?;
    }
    Ok(total)
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive shape and rate").sample(rng)
}

/// Posterior `(shape, rate)` of each arrival class, `None` for classes
/// without external arrivals.
pub fn arrival_posteriors(stats: &SufficientStats, spec: &NetworkSpec) -> Result<Vec<Option<(f64, f64)>>, PosteriorError> {
    if !(stats.total_horizon > 0.0) {
        return Err(PosteriorError::NoHorizon);
    }
    let mut out = vec![None; spec.class_count()];
    for &c in spec.arrival_classes() {
        let prior = spec.arrival_priors()[c];
        out[c] = Some((stats.arrivals[c] as f64 + prior.shape, stats.total_horizon + prior.rate));
    }
    Ok(out)
}

/// `lambda_c ~ Gamma(arrivals_c + a0, total_horizon + b0)` for arrival
/// classes; other classes keep rate 0.
pub fn draw_arrival_rates<R: Rng + ?Sized>(
    stats: &SufficientStats,
    spec: &NetworkSpec,
    rng: &mut R,
) -> Result<Vec<f64>, PosteriorError> {
    Ok(arrival_posteriors(stats, spec)?
        .into_iter()
        .map(|p| p.map_or(0.0, |(shape, rate)| gamma_draw(shape, rate, rng)))
        .collect())
}

/// Posterior Gamma shape and rate of each service symbol.
pub fn service_posteriors(stats: &SufficientStats, spec: &NetworkSpec) -> Result<Vec<(f64, f64)>, PosteriorError> {
    let priors = spec.service_priors();
    let mut out = Vec::with_capacity(spec.symbols().len());
    for (k, sym) in spec.symbols().iter().enumerate() {
        let mut count = 0;
        let mut exposure = 0.0;
        for &(i, c) in &sym.members {
            count += stats.service_count(i, c);
            exposure += stats.exposure(spec, i, c);
        }
        if count > 0 && !(exposure > 0.0) {
            return Err(PosteriorError::ZeroExposure {
                param: sym.name.clone(),
                count,
            });
        }
        let rate = exposure + priors[k].rate;
        if !(rate > 0.0) && spec.symbol_in_use(k) {
            return Err(PosteriorError::Improper { param: sym.name.clone() });
        }
        out.push((count as f64 + priors[k].shape, rate));
    }
    Ok(out)
}

/// Draws service rates given `stats`.
///
/// Unconstrained symbols are drawn from their Gamma posterior. Symbols under
/// order constraints are updated one at a time in topological order, each from
/// its posterior truncated between its already-drawn lower neighbours and the
/// `current` values of its upper neighbours; an upper bound that `current`
/// violates is ignored. Symbols no job can use keep their `current` value.
pub fn draw_service_rates<R: Rng + ?Sized>(
    stats: &SufficientStats,
    spec: &NetworkSpec,
    current: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, PosteriorError> {
    let post = service_posteriors(stats, spec)?;
    let n = post.len();
    let cons = spec.constraints();
    let mut out = current.to_vec();
    let order = topological_order(n, cons).expect("constraints validated acyclic");
    for k in order {
        if !spec.symbol_in_use(k) {
            continue;
        }
        let (shape, rate) = post[k];
        let lo = cons.iter().filter(|c| c.1 == k).map(|c| out[c.0]).fold(0.0, f64::max);
        let hi = cons.iter().filter(|c| c.0 == k).map(|c| out[c.1]).fold(f64::INFINITY, f64::min);
        let hi = if hi < lo { f64::INFINITY } else { hi };
        out[k] = truncated_gamma(shape, rate, lo, hi, rng);
    }
    Ok(out)
}

/// Dirichlet draws for free routing rows; fixed rows are copied from `current`.
pub fn draw_routing<R: Rng + ?Sized>(stats: &SufficientStats, spec: &NetworkSpec, current: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    spec.routing()
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            if row.fixed || row.targets.len() < 2 {
                return current[r].clone();
            }
            let g: Vec<f64> = row
                .prior
                .iter()
                .zip(&stats.routing[r])
                .map(|(&a, &n)| gamma_draw(a + n as f64, 1.0, rng))
                .collect();
            let total: f64 = g.iter().sum();
            g.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// One full parameter update: arrivals, service rates, then routing.
pub fn draw_params<R: Rng + ?Sized>(
    stats: &SufficientStats,
    spec: &NetworkSpec,
    current: &Params,
    rng: &mut R,
) -> Result<Params, PosteriorError> {
    Ok(Params {
        arrival: draw_arrival_rates(stats, spec, rng)?,
        service: draw_service_rates(stats, spec, &current.service, rng)?,
        routing: draw_routing(stats, spec, &current.routing, rng),
    })
}
