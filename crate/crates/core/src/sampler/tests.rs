use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{Job, NetworkState, Observation, StepConstraint, TaskTransition, UniformizedPath};
use crate::networks;
use crate::simulate::{emit_observations, gillespie_simulate};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn obs(horizon: f64, recs: &[(f64, StepConstraint)]) -> ObservationSequence {
    ObservationSequence::new(
        horizon,
        recs.iter()
            .map(|&(time, constraint)| Observation { time, constraint })
            .collect(),
    )
    .unwrap()
}

fn arrival(task: TaskId) -> StepConstraint {
    StepConstraint::ArrivalOf { task, class: None }
}

fn departure(task: TaskId) -> StepConstraint {
    StepConstraint::DepartureOf { task }
}

#[test]
fn virtual_points_on_empty_path() {
    let spec = networks::mm1(0.12, 0.5);
    let p = spec.declared_params().clone();
    let path = Path::empty(1, 100.0);
    let mut r = rng(1);
    let n = 1000;
    let total: usize = (0..n)
        .map(|_| resample_times(&path, &p, &spec, 0.64, &mut r).unwrap().len())
        .sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 52.0).abs() < 2.0, "mean {mean}");
}

#[test]
fn no_virtual_points_when_exit_rate_saturates_bound() {
    let spec = networks::mm1(1.0, 2.0);
    let p = spec.declared_params().clone();
    let x = NetworkState::from_stations(vec![vec![Job { task: 1, class: 0 }]]);
    let path = Path::new(&spec, 10.0, vec![1e-9], vec![x]).unwrap();
    let mut r = rng(2);
    let extra: usize = (0..200)
        .map(|_| resample_times(&path, &p, &spec, 3.0 + 1e-9, &mut r).unwrap().len() - 1)
        .sum();
    assert_eq!(extra, 0);
}

#[test]
fn resampling_requires_strict_domination() {
    let spec = networks::mm1(1.0, 2.0);
    let path = Path::empty(1, 1.0);
    let err = resample_times(&path, spec.declared_params(), &spec, 3.0, &mut rng(3)).unwrap_err();
    assert!(matches!(err, SamplerError::DominatingRate { .. }));
}

#[test]
fn grid_contains_path_times() {
    let spec = networks::bottleneck(0.5);
    let p = spec.declared_params().clone();
    let mut r = rng(4);
    for _ in 0..50 {
        let path = gillespie_simulate(&p, &spec, 30.0, &mut r).unwrap();
        let grid = resample_times(&path, &p, &spec, 1.3 * 2.68, &mut r).unwrap();
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(path.times().iter().all(|t| grid.binary_search_by(|g| g.total_cmp(t)).is_ok()));
    }
}

fn simulated(spec: &NetworkSpec, horizon: f64, seed: u64) -> (Path, ObservationSequence) {
    let mut r = rng(seed);
    let path = gillespie_simulate(spec.declared_params(), spec, horizon, &mut r).unwrap();
    let o = emit_observations(&path, spec.obs_prob(), &mut r).unwrap();
    (path, o)
}

fn uniformized(path: &Path, spec: &NetworkSpec, seed: u64) -> UniformizedPath {
    let omega = 1.5 * rate_bound(spec.declared_params(), spec);
    let grid = resample_times(path, spec.declared_params(), spec, omega, &mut rng(seed)).unwrap();
    path.uniformize(&grid).unwrap()
}

#[test]
fn auxiliary_extremes() {
    let spec = networks::bottleneck(0.5);
    let (path, _) = simulated(&spec, 40.0, 5);
    let up = uniformized(&path, &spec, 6);
    let open = draw_auxiliaries(&up, &spec, 0.0, &mut rng(7)).unwrap();
    assert!(open.iter().all(|c| *c == Clamp::Unrestricted));
    let shut = draw_auxiliaries(&up, &spec, 1.0, &mut rng(7)).unwrap();
    assert!(shut.iter().all(|c| *c != Clamp::Unrestricted));
    assert_eq!(shut.iter().filter(|c| matches!(c, Clamp::Exact(_))).count(), path.len());
}

#[test]
fn auxiliary_clamp_rate() {
    let spec = networks::bottleneck(0.5);
    let (path, _) = simulated(&spec, 4000.0, 8);
    let up = uniformized(&path, &spec, 9);
    assert!(up.len() > 10_000);
    let clamps = draw_auxiliaries(&up, &spec, 0.25, &mut rng(10)).unwrap();
    let frac = clamps.iter().filter(|c| **c != Clamp::Unrestricted).count() as f64 / clamps.len() as f64;
    assert!((frac - 0.25).abs() < 0.01, "{frac}");
}

#[test]
fn clamps_are_satisfied_by_their_own_path() {
    let spec = networks::feedback();
    let (path, o) = simulated(&spec, 16.0, 11);
    let up = uniformized(&path, &spec, 12);
    let clamps = draw_auxiliaries(&up, &spec, 0.5, &mut rng(13)).unwrap();
    let cgrid = project_constraints(up.times(), up.horizon(), &o, &clamps).unwrap();
    let mut prev = NetworkState::empty(spec.station_count());
    for (x, slot) in up.states().iter().zip(&cgrid.slots) {
        match crate::model::classify(&prev, x, &spec) {
            crate::model::Step::Virtual => assert!(slot.admits_virtual()),
            crate::model::Step::Real(g) => {
                let ok = spec
                    .routing()
                    .rows
                    .iter()
                    .any(|_| slot.effective().admits_transition(&g) && slot.observed.admits_transition(&g));
                assert!(ok, "{g:?} vs {slot:?}");
            }
            crate::model::Step::Incompatible => panic!("bad uniformized path"),
        }
        prev = x.clone();
    }
}

#[test]
fn projection_examples() {
    let o = obs(10.0, &[(1.0, arrival(4))]);
    let grid = [0.5, 1.0, 2.0];
    let g = project_constraints(
        &grid,
        10.0,
        &o,
        &[Clamp::Unrestricted, Clamp::Unrestricted, Clamp::Virtual],
    )
    .unwrap();
    assert_eq!(g.slots[1].effective(), arrival(4));
    assert_eq!(g.slots[0].effective(), StepConstraint::InnerOrVirtual);
    assert_eq!(g.slots[2].effective(), StepConstraint::Virtual);
}

#[test]
fn projection_reports_missing_and_contradictory_evidence() {
    let o = obs(10.0, &[(1.0, arrival(4))]);
    let err = project_constraints(&[0.5, 2.0], 10.0, &o, &[Clamp::Unrestricted; 2]).unwrap_err();
    assert!(matches!(err, SamplerError::ObservationOffGrid { .. }));
    let err = project_constraints(&[1.0], 10.0, &o, &[Clamp::Virtual]).unwrap_err();
    assert!(matches!(err, SamplerError::Contradiction { slot: 0, .. }));
    let wrong = Clamp::Exact(TaskTransition::new(0, 1, 5));
    assert!(project_constraints(&[1.0], 10.0, &o, &[wrong]).is_err());
    let departure_clamp = Clamp::Exact(TaskTransition::new(1, 0, 5));
    assert!(project_constraints(&[2.0], 10.0, &obs(10.0, &[]), &[departure_clamp]).is_err());
}

#[test]
fn full_clamping_reproduces_the_path() {
    for (k, spec) in [networks::bottleneck(0.5), networks::feedback(), networks::tandem()].into_iter().enumerate() {
        let (path, o) = simulated(&spec, 40.0, 20 + k as u64);
        let cfg = SweepConfig::new(1.5, 1.0);
        for s in 0..5 {
            let out = sweep(&path, &o, spec.declared_params(), &spec, &cfg, &mut rng(100 + s)).unwrap();
            assert_eq!(out.path, path);
        }
    }
}

#[test]
fn full_observation_pins_the_path() {
    let spec = networks::bottleneck(1.0);
    let (path, o) = simulated(&spec, 60.0, 30);
    assert_eq!(o.len(), path.len());
    let cfg = SweepConfig::new(2.0, 0.0);
    for s in 0..5 {
        let out = sweep(&path, &o, spec.declared_params(), &spec, &cfg, &mut rng(200 + s)).unwrap();
        assert_eq!(out.path, path);
    }
}

#[test]
fn empty_support_names_the_slot() {
    let spec = networks::tandem();
    let o = obs(10.0, &[(2.0, departure(9))]);
    let cgrid = project_constraints(&[1.0, 2.0], 10.0, &o, &[Clamp::Unrestricted; 2]).unwrap();
    let err = ffbs(&cgrid, spec.declared_params(), &spec, 2.0, DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap_err();
    assert!(matches!(err, SamplerError::EmptySupport { slot: 1, .. }), "{err}");
    assert!(err.to_string().contains("slot 1"));
}

#[test]
fn support_cap_aborts() {
    let spec = networks::tiny_bottleneck();
    let recs: Vec<(f64, StepConstraint)> = (1..=6).map(|k| (k as f64, arrival(k))).collect();
    let o = obs(20.0, &recs);
    let mut grid: Vec<f64> = (1..=60).map(|k| k as f64 * 0.25).collect();
    grid.retain(|t| *t <= 20.0);
    let cgrid = project_constraints(&grid, 20.0, &o, &vec![Clamp::Unrestricted; grid.len()]).unwrap();
    let err = ffbs(&cgrid, spec.declared_params(), &spec, 5.0, 10, &mut rng(1)).unwrap_err();
    assert!(matches!(err, SamplerError::SupportCap { cap: 10, .. }));
}

#[test]
fn sweep_rejects_bad_tuning() {
    let spec = networks::tandem();
    let o = obs(10.0, &[]);
    let path = Path::empty(2, 10.0);
    let err = sweep(&path, &o, spec.declared_params(), &spec, &SweepConfig::new(1.0, 0.5), &mut rng(1)).unwrap_err();
    assert!(matches!(err, SamplerError::InvalidOmegaFactor(_)));
    let err = sweep(&path, &o, spec.declared_params(), &spec, &SweepConfig::new(2.0, 1.5), &mut rng(1)).unwrap_err();
    assert!(matches!(err, SamplerError::InvalidAuxProb(_)));
}

#[test]
fn initial_tandem_route_is_midpoint() {
    let spec = networks::tandem();
    let o = obs(10.0, &[(1.0, arrival(1)), (5.0, departure(1))]);
    let path = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap();
    assert_eq!(path.times(), &[1.0, 3.0, 5.0]);
    assert_eq!(
        path.transitions(),
        &[
            TaskTransition::new(0, 1, 1),
            TaskTransition::new(1, 2, 1),
            TaskTransition::new(2, 0, 1)
        ]
    );
}

#[test]
fn initial_bottleneck_route_prefers_lowest_station() {
    let spec = networks::bottleneck(0.5);
    let o = obs(10.0, &[(1.0, arrival(1)), (4.0, departure(1))]);
    let path = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap();
    assert_eq!(path.transitions()[0], TaskTransition::new(0, 1, 1));
    assert_eq!(path.times(), &[1.0, 2.5, 4.0]);
}

#[test]
fn initial_route_threads_observed_service() {
    let spec = networks::bottleneck(0.5);
    let o = obs(
        10.0,
        &[
            (1.0, arrival(1)),
            (2.0, StepConstraint::ServiceAt { station: 2, task: 1 }),
            (4.0, departure(1)),
        ],
    );
    let path = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap();
    assert_eq!(path.transitions()[0], TaskTransition::new(0, 2, 1));
    assert!(crate::model::is_compatible(&path, &o));
}

#[test]
fn initial_route_failure_names_task() {
    let spec = networks::tiny_bottleneck();
    let o = obs(
        10.0,
        &[
            (1.0, arrival(7)),
            (2.0, StepConstraint::ServiceAt { station: 3, task: 7 }),
            (4.0, departure(7)),
        ],
    );
    let err = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap_err();
    assert!(matches!(err, SamplerError::NoRoute { task: 7, .. }), "{err}");
}

#[test]
fn initial_path_handles_overtaking() {
    // Task 2 overtakes task 1, so routing both through station 1 breaks FCFS.
    let spec = networks::bottleneck(0.0);
    let o = obs(
        20.0,
        &[(1.0, arrival(1)), (2.0, arrival(2)), (3.0, departure(2)), (10.0, departure(1))],
    );
    let path = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(1)).unwrap();
    assert!(crate::model::is_compatible(&path, &o));
}

#[test]
fn initial_paths_for_simulated_data() {
    for (k, spec) in [networks::bottleneck(0.5), networks::feedback(), networks::tandem()].into_iter().enumerate() {
        for s in 0..20 {
            let (_, o) = simulated(&spec, 25.0, 1000 * k as u64 + s);
            let path = initial_path(&o, &spec, spec.declared_params(), DEFAULT_SUPPORT_CAP, &mut rng(s)).unwrap();
            assert!(crate::model::is_compatible(&path, &o));
        }
    }
}

#[test]
fn observed_slot_penalty_does_not_change_draws() {
    let spec = networks::bottleneck(0.5);
    let p = spec.declared_params().clone();
    let omega = 1.5 * rate_bound(&p, &spec);
    for s in 0..40 {
        let (path, o) = simulated(&spec, 30.0, 500 + s);
        let grid = resample_times(&path, &p, &spec, omega, &mut rng(s)).unwrap();
        let up = path.uniformize(&grid).unwrap();
        let clamps = draw_auxiliaries(&up, &spec, 0.3, &mut rng(s + 1)).unwrap();
        let cgrid = project_constraints(&grid, 30.0, &o, &clamps).unwrap();
        let plain = ffbs::FilterOptions::default();
        let weighed = ffbs::FilterOptions {
            weigh_observed: true,
            ..plain
        };
        let a = ffbs::ffbs_with(&cgrid, &p, &spec, omega, &plain, &mut rng(s + 2)).unwrap();
        let b = ffbs::ffbs_with(&cgrid, &p, &spec, omega, &weighed, &mut rng(s + 2)).unwrap();
        assert_eq!(a.path, b.path);
    }
}

fn random_params(spec: &NetworkSpec, r: &mut impl Rng) -> Params {
    let mut p = spec.declared_params().clone();
    for &c in spec.arrival_classes() {
        p.arrival[c] = r.random_range(0.05..0.6);
    }
    for m in &mut p.service {
        *m = r.random_range(0.2..3.0);
    }
    for (k, row) in spec.routing().rows.iter().enumerate() {
        if !row.fixed {
            let w: Vec<f64> = row.targets.iter().map(|_| r.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            p.routing[k] = w.into_iter().map(|x| x / s).collect();
        }
    }
    p
}

#[test]
fn sweeps_preserve_compatibility() {
    let specs = [
        networks::tiny_bottleneck(),
        networks::bottleneck(0.5),
        networks::tandem(),
        networks::feedback(),
        networks::ps_pair([0.3, 0.2], [0.9, 0.6]),
        networks::single_station(crate::model::Discipline::Ps, 0.4, 1.0, 0.3),
    ];
    let mut r = rng(77);
    let mut sweeps = 0;
    for round in 0..100 {
        let spec = &specs[round % specs.len()];
        let truth = random_params(spec, &mut r);
        // Unclamped feedback sweeps can hold millions of buffer orderings.
        let feedback = spec.station_count() == 2 && spec.class_count() == 6;
        let (min_p, horizon) = if feedback { (0.5, 8.0) } else { (0.0, 15.0) };
        let path = gillespie_simulate(&truth, spec, horizon, &mut r).unwrap();
        let o = emit_observations(&path, spec.obs_prob(), &mut r).unwrap();
        let mut cur = match initial_path(&o, spec, &truth, DEFAULT_SUPPORT_CAP, &mut r) {
            Ok(p) => p,
            Err(e) => panic!("round {round}, {} records: {e}", o.len()),
        };
        let theta = random_params(spec, &mut r);
        let cfg = SweepConfig::new(r.random_range(1.1..2.5), r.random_range(min_p..0.9));
        for _ in 0..100 {
            cur = match sweep(&cur, &o, &theta, spec, &cfg, &mut r) {
                Ok(out) => out.path,
                Err(e) => panic!("round {round}, {cfg:?}, {} records: {e}", o.len()),
            };
            assert!(crate::model::is_compatible(&cur, &o));
            sweeps += 1;
        }
    }
    assert_eq!(sweeps, 10_000);
}

#[test]
fn support_csv_has_header_and_rows() {
    let mut buf = Vec::new();
    write_support_csv(&mut buf, &[0.5, 1.0], &[1, 3]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "slot,time,support\n0,0.5,1\n1,1,3\n");
}
