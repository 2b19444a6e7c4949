use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use super::*;
use crate::networks;
use crate::posterior::sufficient_stats;
use crate::simulate::simulate_realizations;
use crate::stat_tests::ks_one_sample;

fn tandem_data(n: usize, horizon: f64, seed: u64) -> (NetworkSpec, Vec<ObservationSequence>) {
    let spec = networks::tandem();
    let reals = simulate_realizations(spec.declared_params(), &spec, &vec![horizon; n], 0.0, &Streams::new(seed)).unwrap();
    (spec, reals.into_iter().map(|r| r.observations).collect())
}

fn cfg(iterations: usize, burn_in: usize) -> ChainConfig {
    ChainConfig::new(iterations, burn_in, 1.5, 0.25, 11)
}

#[test]
fn config_validation() {
    assert!(cfg(10, 10).validate().is_err());
    assert!(ChainConfig { thin: 0, ..cfg(10, 0) }.validate().is_err());
    assert!(ChainConfig::new(10, 0, 1.0, 0.25, 1).validate().is_err());
    assert!(ChainConfig::new(10, 0, 1.5, 1.5, 1).validate().is_err());
    assert!(cfg(10, 9).validate().is_ok());
    let json = r#"{"iterations": 5, "burn_in": 1, "omega_factor": 2, "aux_prob": 0.5, "master_seed": 3}"#;
    let c: ChainConfig = serde_json::from_str(json).unwrap();
    assert_eq!((c.thin, c.worker_count, c.support_cap), (1, 0, DEFAULT_SUPPORT_CAP));
    assert!(serde_json::from_str::<ChainConfig>(r#"{"iterations": 5, "bogus": 1}"#).is_err());
}

#[test]
fn retention_counts() {
    let (spec, data) = tandem_data(3, 20.0, 1);
    let chain = run_gibbs(&spec, &data, &cfg(6, 5)).unwrap();
    assert_eq!(chain.rows.len(), 1);
    assert_eq!(chain.kept, vec![5]);
    assert_eq!(chain.trace.len(), 6);
    let thinned = ChainConfig { thin: 3, ..cfg(20, 4) };
    let chain = run_gibbs(&spec, &data, &thinned).unwrap();
    assert_eq!(chain.rows.len(), thinned.retained_rows());
    assert_eq!(chain.kept, vec![6, 9, 12, 15, 18]);
    assert_eq!(chain.names, ["lambda[c1]", "mu[1][c1]", "mu[2][c1]"]);
}

#[test]
fn order_constraint_holds_in_every_row() {
    let (spec, data) = tandem_data(4, 40.0, 2);
    let chain = run_gibbs(&spec, &data, &cfg(60, 0)).unwrap();
    for row in &chain.rows {
        assert!(row[1] <= row[2], "{row:?}");
    }
}

#[test]
fn worker_count_does_not_change_draws() {
    let (spec, data) = tandem_data(5, 30.0, 3);
    let one = run_gibbs(&spec, &data, &ChainConfig { worker_count: 1, ..cfg(25, 5) }).unwrap();
    let two = run_gibbs(&spec, &data, &ChainConfig { worker_count: 2, ..cfg(25, 5) }).unwrap();
    assert_eq!(one.rows, two.rows);
}

#[test]
fn resumed_chain_matches_one_shot_run() {
    let (spec, data) = tandem_data(4, 30.0, 4);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("chain.ckpt");
    let full = ChainConfig { checkpoint_interval: 10, ..cfg(40, 10) };
    let reference = run_gibbs(&spec, &data, &full).unwrap();

    let opts = RunOptions {
        checkpoint: Some(file.clone()),
        support_dump: None,
    };
    let first = run_gibbs_with(&spec, &data, &ChainConfig { iterations: 20, ..full.clone() }, &opts).unwrap();
    assert_eq!(first.resumed_from, 0);
    assert!(file.exists());
    let second = run_gibbs_with(&spec, &data, &full, &opts).unwrap();
    assert_eq!(second.resumed_from, 20);
    assert_eq!(second.chain.rows, reference.rows);
    assert_eq!(second.chain.kept, reference.kept);
}

#[test]
fn resume_refuses_other_spec_data_or_tuning() {
    let (spec, data) = tandem_data(3, 20.0, 5);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("chain.ckpt");
    let opts = RunOptions {
        checkpoint: Some(file.clone()),
        support_dump: None,
    };
    run_gibbs_with(&spec, &data, &cfg(4, 1), &opts).unwrap();

    let edited = spec.with_obs_prob(0.5).unwrap();
    let e = run_gibbs_with(&edited, &data, &cfg(8, 1), &opts).unwrap_err();
    assert!(matches!(e, EngineError::Checkpoint { .. }), "{e}");
    assert!(e.to_string().contains("spec"));

    let e = run_gibbs_with(&spec, &data[..2], &cfg(8, 1), &opts).unwrap_err();
    assert!(e.to_string().contains("dataset"), "{e}");

    let e = run_gibbs_with(&spec, &data, &ChainConfig { aux_prob: 0.5, ..cfg(8, 1) }, &opts).unwrap_err();
    assert!(e.to_string().contains("configuration"), "{e}");
}

#[test]
fn missing_checkpoint_starts_fresh() {
    let (spec, data) = tandem_data(2, 20.0, 6);
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        checkpoint: Some(dir.path().join("absent.ckpt")),
        support_dump: None,
    };
    let out = run_gibbs_with(&spec, &data, &cfg(3, 0), &opts).unwrap();
    assert_eq!(out.resumed_from, 0);
    assert_eq!(out.chain.rows, run_gibbs(&spec, &data, &cfg(3, 0)).unwrap().rows);
}

#[test]
fn support_dump_has_one_row_per_slot() {
    let (spec, data) = tandem_data(2, 20.0, 7);
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("support.csv");
    let opts = RunOptions {
        checkpoint: None,
        support_dump: Some(dump.clone()),
    };
    let out = run_gibbs_with(&spec, &data, &cfg(3, 0), &opts).unwrap();
    let text = std::fs::read_to_string(dump).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,realization,slot,time,support"));
    let slots: u64 = out.chain.trace.iter().map(|t| t.grid_points).sum();
    assert_eq!(lines.count() as u64, slots);
}

#[test]
fn initial_values_by_name() {
    let (spec, data) = tandem_data(2, 20.0, 8);
    let mut c = cfg(2, 0);
    c.initial.insert("lambda[c1]".into(), 0.1);
    c.initial.insert("mu[1][c1]".into(), 0.3);
    c.initial.insert("mu[2][c1]".into(), 0.6);
    assert_eq!(run_gibbs(&spec, &data, &c).unwrap().rows.len(), 2);
    c.initial.insert("mu[9][c1]".into(), 0.6);
    assert!(matches!(run_gibbs(&spec, &data, &c), Err(EngineError::Config(_))));
}

#[test]
fn chain_csv_layout() {
    let (spec, data) = tandem_data(2, 20.0, 9);
    let chain = run_gibbs(&spec, &data, &cfg(4, 2)).unwrap();
    let mut buf = Vec::new();
    chain.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,lambda[c1],mu[1][c1],mu[2][c1]");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,"));
}

#[test]
fn fully_observed_chain_draws_the_exact_posterior() {
    let spec = networks::mm1(0.5, 1.0).with_obs_prob(1.0).unwrap();
    let reals = simulate_realizations(spec.declared_params(), &spec, &[30.0; 4], 1.0, &Streams::new(12)).unwrap();
    let data: Vec<_> = reals.iter().map(|r| r.observations.clone()).collect();
    let truth: Vec<_> = reals.iter().map(|r| r.path.clone()).collect();
    let stats = sufficient_stats(&truth, &spec).unwrap();
    let arr = crate::posterior::arrival_posteriors(&stats, &spec).unwrap()[0].unwrap();
    let svc = crate::posterior::service_posteriors(&stats, &spec).unwrap()[0];

    let out = run_gibbs_with(&spec, &data, &cfg(2000, 0), &RunOptions::default()).unwrap();
    for (p, q) in out.paths.iter().zip(&truth) {
        assert_eq!(p.times(), q.times());
    }
    let check = |col: Vec<f64>, (shape, rate): (f64, f64)| {
        let g = GammaDist::new(shape, rate).unwrap();
        let t = ks_one_sample(&col, |x| g.cdf(x));
        assert!(t.p_value > 0.001, "{t:?}");
    };
    check(out.chain.column("lambda[c1]").unwrap(), arr);
    check(out.chain.column("mu[1][c1]").unwrap(), svc);
}
