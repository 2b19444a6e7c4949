//! Forward simulation of network paths and emission of partial evidence.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    Generator, ModelError, Move, NetworkSpec, NetworkState, Observation, ObservationSequence, Params, Path,
    StepConstraint, TaskId, UniformizedPath,
};
use crate::rng::{Domain, Streams};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("dominating rate {omega} is below the rate bound {bound}")]
    DominatingRateTooSmall { omega: f64, bound: f64 },
    #[error("horizon must be finite and non-negative, got {0}")]
    InvalidHorizon(f64),
    #[error("observation probability must lie in [0, 1], got {0}")]
    InvalidObsProb(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_horizon(horizon: f64) -> Result<(), SimulateError> {
    if horizon.is_finite() && horizon >= 0.0 {
        Ok(())
    } else {
        Err(SimulateError::InvalidHorizon(horizon))
    }
}

/// Picks a move with probability proportional to its rate, given
/// `u ~ Uniform(0, total)`. Returns `None` when `u` falls past every move.
fn pick(moves: &[Move], u: f64) -> Option<&Move> {
    let mut acc = 0.0;
    for m in moves {
        acc += m.rate;
        if u < acc {
            return Some(m);
        }
    }
    None
}

/// Competing-exponentials simulation from the empty network.
pub fn gillespie_simulate<R: Rng + ?Sized>(
    params: &Params,
    spec: &NetworkSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<Path, SimulateError> {
    check_horizon(horizon)?;
    params.validate(spec)?;
    let gen = Generator::new(spec, params);
    let mut x = NetworkState::empty(spec.station_count());
    let (mut times, mut states) = (Vec::new(), Vec::new());
    let mut t = 0.0;
    let mut next_task: TaskId = 1;
    let mut moves = Vec::new();
    loop {
        moves.clear();
        gen.moves_into(&x, &StepConstraint::Unrestricted, next_task, &mut moves);
        let total: f64 = moves.iter().map(|m| m.rate).sum();
        if total <= 0.0 {
            break;
        }
        t += Exp::new(total).expect("positive rate").sample(rng);
        if t > horizon {
            break;
        }
        let u = rng.random::<f64>() * total;
        let m = *pick(&moves, u).unwrap_or_else(|| moves.last().expect("non-empty"));
        if m.from == 0 {
            next_task += 1;
        }
        x = m.apply(&x);
        times.push(t);
        states.push(x.clone());
    }
    Ok(Path::new(spec, horizon, times, states)?)
}

/// Uniformization: a Poisson(`omega`) grid on `[0, horizon]`, and at each
/// grid point a move with probability `rate / omega` or a virtual jump.
pub fn uniformized_simulate<R: Rng + ?Sized>(
    params: &Params,
    spec: &NetworkSpec,
    omega: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<UniformizedPath, SimulateError> {
    check_horizon(horizon)?;
    params.validate(spec)?;
    let gen = Generator::new(spec, params);
    let bound = gen.rate_bound();
    if !(omega >= bound) || !omega.is_finite() || omega <= 0.0 {
        return Err(SimulateError::DominatingRateTooSmall { omega, bound });
    }
    let n = if horizon > 0.0 {
        Poisson::new(omega * horizon).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut grid: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * horizon).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.retain(|&t| t > 0.0);

    let mut x = NetworkState::empty(spec.station_count());
    let mut states = Vec::with_capacity(grid.len());
    let mut next_task: TaskId = 1;
    let mut moves = Vec::new();
    for _ in &grid {
        moves.clear();
        gen.moves_into(&x, &StepConstraint::Unrestricted, next_task, &mut moves);
        let u = rng.random::<f64>() * omega;
        if let Some(m) = pick(&moves, u) {
            if m.from == 0 {
                next_task += 1;
            }
            x = m.apply(&x);
        }
        states.push(x.clone());
    }
    Ok(UniformizedPath::new(spec.station_count(), horizon, grid, states))
}

/// Evidence from a path: every arrival (with its class) and departure, and
/// each inner transition independently with probability `q`.
pub fn emit_observations<R: Rng + ?Sized>(path: &Path, q: f64, rng: &mut R) -> Result<ObservationSequence, SimulateError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(SimulateError::InvalidObsProb(q));
    }
    let mut records = Vec::new();
    for (k, (&time, g)) in path.times().iter().zip(path.transitions()).enumerate() {
        let constraint = if g.is_arrival() {
            let class = path.states()[k].station(g.to).last().map(|j| j.class);
            StepConstraint::ArrivalOf { task: g.task, class }
        } else if g.is_departure() {
            StepConstraint::DepartureOf { task: g.task }
        } else if rng.random::<f64>() < q {
            StepConstraint::ServiceAt {
                station: g.from,
                task: g.task,
            }
        } else {
            continue;
        };
        records.push(Observation { time, constraint });
    }
    Ok(ObservationSequence::new(path.horizon(), records)?)
}

/// One simulated realization with its evidence.
#[derive(Debug, Clone)]
pub struct Realization {
    pub path: Path,
    pub observations: ObservationSequence,
}

/// Simulates `horizons.len()` independent realizations in parallel. Realization
/// `k` uses the simulation and emission streams at coordinate `(k, 0)`.
pub fn simulate_realizations(
    params: &Params,
    spec: &NetworkSpec,
    horizons: &[f64],
    q: f64,
    streams: &Streams,
) -> Result<Vec<Realization>, SimulateError> {
    horizons
        .par_iter()
        .enumerate()
        .map(|(k, &horizon)| {
            let mut rng = streams.stream(Domain::Simulation, k as u64, 0);
            let path = gillespie_simulate(params, spec, horizon, &mut rng)?;
            let mut rng = streams.stream(Domain::Emission, k as u64, 0);
            let observations = emit_observations(&path, q, &mut rng)?;
            Ok(Realization { path, observations })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_compatible;
    use crate::networks;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_arrivals_means_empty_path() {
        let spec = networks::mm1(1.0, 1.0);
        let mut p = spec.declared_params().clone();
        p.arrival = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gillespie_simulate(&p, &spec, 100.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn mm1_empty_fraction_matches_one_minus_rho() {
        let spec = networks::mm1(0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = gillespie_simulate(spec.declared_params(), &spec, 1e4, &mut rng).unwrap();
        let mut idle = 0.0;
        path.for_each_segment(|a, b, x| {
            if x.is_empty() {
                idle += b - a;
            }
        });
        let frac = idle / 1e4;
        assert!((frac - 0.5).abs() < 0.02, "idle fraction {frac}");
    }

    #[test]
    fn tandem_arrival_rate() {
        let spec = networks::tandem();
        let horizons = vec![23.12; 5000];
        let reals = simulate_realizations(spec.declared_params(), &spec, &horizons, 0.0, &Streams::new(3)).unwrap();
        let arrivals: usize = reals.iter().map(|r| r.observations.arrival_count()).sum();
        let rate = arrivals as f64 / horizons.iter().sum::<f64>();
        assert!((rate - 0.12).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn uniformized_requires_dominating_rate() {
        let spec = networks::tandem();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let err = uniformized_simulate(spec.declared_params(), &spec, 0.5, 10.0, &mut rng).unwrap_err();
        assert!(matches!(err, SimulateError::DominatingRateTooSmall { .. }));
    }

    #[test]
    fn uniformized_zero_horizon_is_empty() {
        let spec = networks::tandem();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let up = uniformized_simulate(spec.declared_params(), &spec, 1.0, 0.0, &mut rng).unwrap();
        assert!(up.is_empty());
        assert!(up.strip(&spec).unwrap().is_empty());
    }

    #[test]
    fn empty_network_virtual_fraction() {
        // Grid points met in the empty state stay put with probability 1 - lambda / omega.
        let spec = networks::mm1(0.5, 1.0);
        let omega = rate_bound_of(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let up = uniformized_simulate(spec.declared_params(), &spec, omega, 2e4, &mut rng).unwrap();
        let (mut empty_slots, mut stayed) = (0usize, 0usize);
        let mut prev = NetworkState::empty(1);
        for x in up.states() {
            if prev.is_empty() {
                empty_slots += 1;
                if x == &prev {
                    stayed += 1;
                }
            }
            prev = x.clone();
        }
        let frac = stayed as f64 / empty_slots as f64;
        let expect = 1.0 - 0.5 / omega;
        let sd = (expect * (1.0 - expect) / empty_slots as f64).sqrt();
        assert!((frac - expect).abs() < 4.0 * sd, "{frac} vs {expect}");
    }

    fn rate_bound_of(spec: &NetworkSpec) -> f64 {
        crate::model::rate_bound(spec.declared_params(), spec)
    }

    #[test]
    fn emitted_evidence_is_compatible_and_exact() {
        let spec = networks::bottleneck(0.5);
        let reals = simulate_realizations(spec.declared_params(), &spec, &[50.0; 40], 0.5, &Streams::new(7)).unwrap();
        for r in &reals {
            assert!(is_compatible(&r.path, &r.observations));
            for o in r.observations.records() {
                assert!(r.path.times().contains(&o.time));
            }
        }
    }

    #[test]
    fn emission_extremes() {
        let spec = networks::bottleneck(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let path = gillespie_simulate(spec.declared_params(), &spec, 200.0, &mut rng).unwrap();
        let none = emit_observations(&path, 0.0, &mut rng).unwrap();
        assert_eq!(none.service_count(), 0);
        assert_eq!(none.len(), path.len() - path.inner_count());
        let all = emit_observations(&path, 1.0, &mut rng).unwrap();
        assert_eq!(all.len(), path.len());
    }

    #[test]
    fn emission_retains_binomial_share() {
        let spec = networks::bottleneck(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let path = gillespie_simulate(spec.declared_params(), &spec, 5e3, &mut rng).unwrap();
        let n = path.inner_count() as f64;
        let kept = emit_observations(&path, 0.5, &mut rng).unwrap().service_count() as f64;
        assert!((kept - n / 2.0).abs() < 3.0 * n.sqrt() / 2.0, "{kept} of {n}");
    }

    #[test]
    fn realizations_do_not_depend_on_thread_count() {
        let spec = networks::bottleneck(0.5);
        let p = spec.declared_params();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_realizations(p, &spec, &[30.0; 16], 0.5, &Streams::new(11)).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.path, y.path);
            assert_eq!(x.observations, y.observations);
        }
    }
}
