//! Ready-made network specs for the shipped experiments and for tests.

use crate::model::{
    Discipline, NetworkSpec, NetworkSpecDoc, PriorDoc, RouteEntryDoc, RoutingRowDoc, StationDoc,
};

fn station(d: Discipline) -> StationDoc {
    StationDoc {
        name: None,
        discipline: d,
    }
}

fn entry(to: usize, prob: f64) -> RouteEntryDoc {
    RouteEntryDoc { to, class: None, prob }
}

fn row(from: usize, class: &str, fixed: bool, entries: Vec<RouteEntryDoc>) -> RoutingRowDoc {
    RoutingRowDoc {
        from,
        class: class.to_string(),
        fixed,
        entries,
        prior: None,
    }
}

fn build(doc: NetworkSpecDoc) -> NetworkSpec {
    NetworkSpec::from_doc(doc).expect("built-in network is valid")
}

/// Two FCFS stations in series, one class, `mu[1] <= mu[2]`, only end-to-end
/// evidence (`q = 0`).
pub fn tandem() -> NetworkSpec {
    build(NetworkSpecDoc {
        stations: vec![station(Discipline::Fcfs), station(Discipline::Fcfs)],
        classes: vec!["c1".into()],
        arrival_rates: vec![0.12],
        service_rates: vec![vec![0.2], vec![0.5]],
        shared_service_rates: vec![],
        routing: vec![
            row(0, "c1", true, vec![entry(1, 1.0)]),
            row(1, "c1", true, vec![entry(2, 1.0)]),
            row(2, "c1", true, vec![entry(0, 1.0)]),
        ],
        obs_prob: 0.0,
        rate_constraints: vec![vec!["mu[1][c1]".into(), "mu[2][c1]".into()]],
        priors: PriorDoc::default(),
    })
}

/// Entry split evenly over stations 1 and 2, both feeding station 3, which
/// exits. Three classes with slow/medium/fast server ordering per class.
pub fn bottleneck(q: f64) -> NetworkSpec {
    let classes = ["c1", "c2", "c3"];
    let mut routing = Vec::new();
    for c in classes {
        routing.push(row(0, c, true, vec![entry(1, 0.5), entry(2, 0.5)]));
        routing.push(row(1, c, true, vec![entry(3, 1.0)]));
        routing.push(row(2, c, true, vec![entry(3, 1.0)]));
        routing.push(row(3, c, true, vec![entry(0, 1.0)]));
    }
    build(NetworkSpecDoc {
        stations: vec![station(Discipline::Fcfs); 3],
        classes: classes.iter().map(|s| s.to_string()).collect(),
        arrival_rates: vec![0.08, 0.06, 0.04],
        service_rates: vec![vec![0.3, 0.25, 0.2], vec![0.7, 0.5, 0.3], vec![1.5, 1.2, 0.8]],
        shared_service_rates: vec![],
        routing,
        obs_prob: q,
        rate_constraints: classes
            .iter()
            .map(|c| (1..=3).map(|i| format!("mu[{i}][{c}]")).collect())
            .collect(),
        priors: PriorDoc::default(),
    })
}

/// Single-class bottleneck with the first class's rates; the smallest
/// instance on which the route of a task is ambiguous.
pub fn tiny_bottleneck() -> NetworkSpec {
    build(NetworkSpecDoc {
        stations: vec![station(Discipline::Fcfs); 3],
        classes: vec!["c1".into()],
        arrival_rates: vec![0.08],
        service_rates: vec![vec![0.3], vec![0.7], vec![1.5]],
        shared_service_rates: vec![],
        routing: vec![
            row(0, "c1", false, vec![entry(1, 0.5), entry(2, 0.5)]),
            row(1, "c1", true, vec![entry(3, 1.0)]),
            row(2, "c1", true, vec![entry(3, 1.0)]),
            row(3, "c1", true, vec![entry(0, 1.0)]),
        ],
        obs_prob: 0.0,
        rate_constraints: vec![],
        priors: PriorDoc::default(),
    })
}

/// One station, one class.
pub fn single_station(discipline: Discipline, lambda: f64, mu: f64, q: f64) -> NetworkSpec {
    build(NetworkSpecDoc {
        stations: vec![station(discipline)],
        classes: vec!["c1".into()],
        arrival_rates: vec![lambda],
        service_rates: vec![vec![mu]],
        shared_service_rates: vec![],
        routing: vec![row(0, "c1", true, vec![entry(1, 1.0)]), row(1, "c1", true, vec![entry(0, 1.0)])],
        obs_prob: q,
        rate_constraints: vec![],
        priors: PriorDoc::default(),
    })
}

pub fn mm1(lambda: f64, mu: f64) -> NetworkSpec {
    single_station(Discipline::Fcfs, lambda, mu, 0.0)
}

/// One PS station serving classes `a` and `b`, both exiting afterwards.
pub fn ps_pair(lambda: [f64; 2], mu: [f64; 2]) -> NetworkSpec {
    build(NetworkSpecDoc {
        stations: vec![station(Discipline::Ps)],
        classes: vec!["a".into(), "b".into()],
        arrival_rates: lambda.to_vec(),
        service_rates: vec![mu.to_vec()],
        shared_service_rates: vec![],
        routing: vec![
            row(0, "a", true, vec![entry(1, 1.0)]),
            row(0, "b", true, vec![entry(1, 1.0)]),
            row(1, "a", true, vec![entry(0, 1.0)]),
            row(1, "b", true, vec![entry(0, 1.0)]),
        ],
        obs_prob: 0.0,
        rate_constraints: vec![],
        priors: PriorDoc::default(),
    })
}

/// Task types of the synthetic feedback network: name, arrival rate, PS rate
/// after switching, and probability of leaving straight after the buffer.
pub const FEEDBACK_TYPES: [(&str, f64, f64, f64); 3] =
    [("admission", 0.30, 0.59, 0.25), ("review", 0.20, 0.73, 0.60), ("relatives", 0.10, 0.36, 0.47)];

/// Shared buffer rate of the synthetic feedback network.
pub const FEEDBACK_BUFFER_RATE: f64 = 3.4;

/// FCFS buffer (station 1) feeding a PS station (station 2). After the buffer
/// a task of type `c` either leaves or moves to station 2 as class `c*`;
/// `c*` jobs return to the buffer and then leave. The buffer rate is shared
/// by every class.
pub fn feedback() -> NetworkSpec {
    let mut classes = Vec::new();
    let mut arrival_rates = Vec::new();
    for (name, lambda, _, _) in FEEDBACK_TYPES {
        classes.push(name.to_string());
        arrival_rates.push(lambda);
    }
    for (name, _, _, _) in FEEDBACK_TYPES {
        classes.push(format!("{name}*"));
        arrival_rates.push(0.0);
    }
    let n = FEEDBACK_TYPES.len();
    let buffer = vec![FEEDBACK_BUFFER_RATE; 2 * n];
    // Unswitched classes never reach station 2; their rates there are unused.
    let ps: Vec<f64> = FEEDBACK_TYPES.iter().chain(&FEEDBACK_TYPES).map(|t| t.2).collect();
    let mut routing = Vec::new();
    for (name, _, _, exit) in FEEDBACK_TYPES {
        let switched = format!("{name}*");
        routing.push(row(0, name, true, vec![entry(1, 1.0)]));
        routing.push(row(
            1,
            name,
            false,
            vec![
                entry(0, exit),
                RouteEntryDoc {
                    to: 2,
                    class: Some(switched.clone()),
                    prob: 1.0 - exit,
                },
            ],
        ));
        routing.push(row(2, &switched, true, vec![entry(1, 1.0)]));
        routing.push(row(1, &switched, true, vec![entry(0, 1.0)]));
    }
    let shared = vec![classes.iter().map(|c| (1, c.clone())).collect()];
    build(NetworkSpecDoc {
        stations: vec![station(Discipline::Fcfs), station(Discipline::Ps)],
        classes,
        arrival_rates,
        service_rates: vec![buffer, ps],
        shared_service_rates: shared,
        routing,
        obs_prob: 0.0,
        rate_constraints: vec![],
        priors: PriorDoc::default(),
    })
}
