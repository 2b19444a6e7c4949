//! Oracle checks of the simulators and samplers with fixed seeds.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use thiserror::Error;

use crate::engine::{run_gibbs, ChainConfig, EngineError};
use crate::model::{
    GammaPrior, ModelError, NetworkSpec, NetworkState, Observation, ObservationSequence, Params, Path, StepConstraint,
};
use crate::networks;
use crate::posterior::{arrival_posteriors, draw_params, service_posteriors, sufficient_stats, PosteriorError, SufficientStats};
use crate::rng::{Domain, Streams};
use crate::sampler::{initial_path, sweep, SamplerError, SweepConfig, DEFAULT_SUPPORT_CAP};
use crate::simulate::{emit_observations, gillespie_simulate, simulate_realizations, uniformized_simulate, SimulateError};
use crate::stat_tests::{chi_square_gof, chi_square_two_sample, ks_one_sample, ks_two_sample};

pub const SUITES: [&str; 4] = ["unif-equivalence", "path-oracle", "conjugacy", "geweke"];

/// Significance level of the distributional checks.
pub const P_THRESHOLD: f64 = 0.01;
/// Largest allowed total-variation distance between queue-length marginals.
pub const TV_THRESHOLD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("unknown suite {0:?}; expected one of unif-equivalence, path-oracle, conjugacy, geweke")]
    UnknownSuite(String),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Direction {
    /// Passes when the statistic is below the threshold.
    Below,
    /// Passes when the statistic is above the threshold.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub direction: Direction,
}

impl Check {
    fn below(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            direction: Direction::Below,
        }
    }

    fn above(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            direction: Direction::Above,
        }
    }

    pub fn passed(&self) -> bool {
        match self.direction {
            Direction::Below => self.statistic < self.threshold,
            Direction::Above => self.statistic > self.threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            Direction::Below => "<",
            Direction::Above => ">",
        };
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.6} (need {op} {})", self.name, self.statistic, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} ({:.1}s)", self.suite, self.seconds)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        write!(f, "  => {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Runs a suite by name at its full size.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, ValidationError> {
    match name {
        "unif-equivalence" => uniformization_equivalence(&UnifSettings::default(), seed),
        "path-oracle" => path_oracle(&PathOracleSettings::default(), seed),
        "conjugacy" => conjugacy(&ConjugacySettings::default(), seed),
        "geweke" => geweke(&GewekeSettings::default(), seed),
        other => Err(ValidationError::UnknownSuite(other.to_string())),
    }
}

fn report(suite: &str, checks: Vec<Check>, clock: Instant) -> SuiteReport {
    SuiteReport {
        suite: suite.to_string(),
        checks,
        seconds: clock.elapsed().as_secs_f64(),
    }
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|k| (at(p, k) - at(q, k)).abs()).sum::<f64>()
}

fn frequencies(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

fn final_jobs(path: &Path) -> usize {
    path.states().last().map_or(0, NetworkState::total_jobs)
}

/// Queue-length law at time `t` of an M/M/1 queue started empty, from the
/// generator truncated at `cap` jobs.
pub fn mm1_marginal(lambda: f64, mu: f64, t: f64, cap: usize) -> Vec<f64> {
    let n = cap + 1;
    let mut q = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        if k < cap {
            q[(k, k + 1)] = lambda;
        }
        if k > 0 {
            q[(k, k - 1)] = mu;
        }
        let out: f64 = (0..n).filter(|&j| j != k).map(|j| q[(k, j)]).sum();
        q[(k, k)] = -out;
    }
    let p = (q * t).exp();
    (0..n).map(|j| p[(0, j)]).collect()
}

#[derive(Debug, Clone)]
pub struct UnifSettings {
    pub lambda: f64,
    pub mu: f64,
    pub horizon: f64,
    pub runs: usize,
    pub omega_factor: f64,
    pub cap: usize,
}

impl Default for UnifSettings {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mu: 1.0,
            horizon: 5.0,
            runs: 100_000,
            omega_factor: 2.0,
            cap: 30,
        }
    }
}

/// Queue length at the horizon under both simulators, against each other and
/// against the matrix-exponential law.
pub fn uniformization_equivalence(s: &UnifSettings, seed: u64) -> Result<SuiteReport, ValidationError> {
    let clock = Instant::now();
    let spec = networks::mm1(s.lambda, s.mu);
    let params = spec.declared_params();
    let omega = s.omega_factor * crate::model::rate_bound(params, &spec);
    let streams = Streams::new(seed);
    let mut direct = vec![0u64; s.cap + 2];
    let mut unif = vec![0u64; s.cap + 2];
    let bin = |n: usize| n.min(s.cap + 1);
    for k in 0..s.runs {
        let mut rng = streams.stream(Domain::Validation, 1, k as u64);
        direct[bin(final_jobs(&gillespie_simulate(params, &spec, s.horizon, &mut rng)?))] += 1;
        let mut rng = streams.stream(Domain::Validation, 2, k as u64);
        let u = uniformized_simulate(params, &spec, omega, s.horizon, &mut rng)?;
        unif[bin(final_jobs(&u.strip(&spec)?))] += 1;
    }
    let exact = mm1_marginal(s.lambda, s.mu, s.horizon, s.cap);
    let (fd, fu) = (frequencies(&direct), frequencies(&unif));
    let checks = vec![
        Check::below("TV(uniformized, competing clocks)", total_variation(&fu, &fd), TV_THRESHOLD),
        Check::below("TV(uniformized, matrix exponential)", total_variation(&fu, &exact), TV_THRESHOLD),
        Check::below("TV(competing clocks, matrix exponential)", total_variation(&fd, &exact), TV_THRESHOLD),
    ];
    Ok(report("unif-equivalence", checks, clock))
}

#[derive(Debug, Clone)]
pub struct PathOracleSettings {
    pub arrival: f64,
    pub departure: f64,
    pub horizon: f64,
    pub samples: usize,
    pub thin: usize,
    pub aux_prob: f64,
    pub omega_factor: f64,
    pub oracle_samples: usize,
    pub bins: usize,
}

impl Default for PathOracleSettings {
    fn default() -> Self {
        Self {
            arrival: 1.0,
            departure: 6.0,
            horizon: 10.0,
            samples: 10_000,
            thin: 5,
            aux_prob: 0.25,
            omega_factor: 2.0,
            oracle_samples: 100_000,
            bins: 20,
        }
    }
}

/// Route and first service time of one task on the three-station bottleneck,
/// given only its arrival and departure times.
///
/// Given the route `r`, the time `s` spent at station `r` has density
/// proportional to `mu_r exp(-mu_r s) mu_3 exp(-mu_3 (D - s))` on `(0, D)`.
/// The oracle draws `r` from the routing law and `s` from Exp(`mu_r`), and
/// accepts with probability `exp(-mu_3 (D - s))` when `s < D`.
pub fn path_oracle(s: &PathOracleSettings, seed: u64) -> Result<SuiteReport, ValidationError> {
    let clock = Instant::now();
    let spec = networks::tiny_bottleneck();
    let params = spec.declared_params().clone();
    let (mu1, mu2, mu3) = (params.service[0], params.service[1], params.service[2]);
    let d = s.departure - s.arrival;
    let obs = ObservationSequence::new(
        s.horizon,
        vec![
            Observation {
                time: s.arrival,
                constraint: StepConstraint::ArrivalOf { task: 1, class: Some(0) },
            },
            Observation {
                time: s.departure,
                constraint: StepConstraint::DepartureOf { task: 1 },
            },
        ],
    )?;
    let streams = Streams::new(seed);
    let mut rng = streams.stream(Domain::Validation, 10, 0);
    let mut path = initial_path(&obs, &spec, &params, DEFAULT_SUPPORT_CAP, &mut rng)?;
    let cfg = SweepConfig::new(s.omega_factor, s.aux_prob);
    let mut routes = [0u64; 2];
    let mut times = Vec::with_capacity(s.samples);
    for k in 0..s.samples * s.thin {
        path = sweep(&path, &obs, &params, &spec, &cfg, &mut rng)?.path;
        if (k + 1) % s.thin == 0 {
            let (route, at) = first_service(&path);
            routes[route - 1] += 1;
            times.push(at - s.arrival);
        }
    }

    // Exact route probabilities: routing weight times the integral of the density.
    let integral = |mu: f64| mu * (-mu3 * d).exp() * ((mu3 - mu) * d).exp_m1() / (mu3 - mu);
    let p = params.routing[0].clone();
    let w = [p[0] * integral(mu1), p[1] * integral(mu2)];
    let route_probs = [w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])];

    let mut orng = streams.stream(Domain::Validation, 11, 0);
    let mut oracle = Vec::with_capacity(s.oracle_samples);
    while oracle.len() < s.oracle_samples {
        let mu = if orng.random::<f64>() < p[0] { mu1 } else { mu2 };
        let t = Exp::new(mu).expect("positive rate").sample(&mut orng);
        if t < d && orng.random::<f64>() < (-mu3 * (d - t)).exp() {
            oracle.push(t);
        }
    }
    let hist = |xs: &[f64]| {
        let mut h = vec![0u64; s.bins];
        for &x in xs {
            h[((x / d * s.bins as f64) as usize).min(s.bins - 1)] += 1;
        }
        h
    };
    let checks = vec![
        Check::above("route choice chi-square p", chi_square_gof(&routes, &route_probs).p_value, P_THRESHOLD),
        Check::above("service time KS p", ks_two_sample(&times, &oracle).p_value, P_THRESHOLD),
        Check::above(
            "service time histogram chi-square p",
            chi_square_two_sample(&hist(&times), &hist(&oracle)).p_value,
            P_THRESHOLD,
        ),
    ];
    Ok(report("path-oracle", checks, clock))
}

/// Station and time of the single inner move of a one-task path.
fn first_service(path: &Path) -> (usize, f64) {
    path.transitions()
        .iter()
        .zip(path.times())
        .find(|(g, _)| g.from != 0 && g.to != 0)
        .map(|(g, &t)| (g.from, t))
        .expect("the task passes through a first station")
}

#[derive(Debug, Clone)]
pub struct ConjugacySettings {
    pub realizations: usize,
    pub horizon: f64,
    pub draws: usize,
}

impl Default for ConjugacySettings {
    fn default() -> Self {
        Self {
            realizations: 10,
            horizon: 50.0,
            draws: 10_000,
        }
    }
}

/// With every transition observed the path is known, so each Gibbs draw of a
/// rate is an independent draw from its Gamma posterior.
pub fn conjugacy(s: &ConjugacySettings, seed: u64) -> Result<SuiteReport, ValidationError> {
    let clock = Instant::now();
    let mut doc = networks::tandem().doc().clone();
    doc.rate_constraints.clear();
    let tandem = NetworkSpec::from_doc(doc)?;
    let mut checks = Vec::new();
    for (label, spec) in [("fcfs", tandem), ("ps", networks::ps_pair([0.3, 0.2], [0.9, 0.6]))] {
        let spec = spec.with_obs_prob(1.0)?;
        let horizons = vec![s.horizon; s.realizations];
        let reals = simulate_realizations(spec.declared_params(), &spec, &horizons, 1.0, &Streams::new(seed))?;
        let data: Vec<_> = reals.iter().map(|r| r.observations.clone()).collect();
        let truth: Vec<_> = reals.into_iter().map(|r| r.path).collect();
        let stats = sufficient_stats(&truth, &spec)?;
        let chain = run_gibbs(&spec, &data, &ChainConfig::new(s.draws, 0, 1.5, 0.25, seed))?;

        let mut laws: Vec<(String, (f64, f64))> = Vec::new();
        for (c, post) in arrival_posteriors(&stats, &spec)?.into_iter().enumerate() {
            if let Some(p) = post {
                laws.push((format!("lambda[{}]", spec.class_name(c)), p));
            }
        }
        for (sym, p) in spec.symbols().iter().zip(service_posteriors(&stats, &spec)?) {
            laws.push((sym.name.clone(), p));
        }
        for (name, (shape, rate)) in laws {
            let col = chain.column(&name).expect("sampled parameter");
            let g = GammaDist::new(shape, rate).expect("valid posterior");
            let t = ks_one_sample(&col, |x| g.cdf(x));
            checks.push(Check::above(format!("{label} {name} KS p"), t.p_value, P_THRESHOLD));
        }
    }
    Ok(report("conjugacy", checks, clock))
}

#[derive(Debug, Clone)]
pub struct GewekeSettings {
    pub rounds: usize,
    /// Alternations between recorded rounds.
    pub thin: usize,
    pub horizon: f64,
    pub arrival_prior: GammaPrior,
    pub service_prior: GammaPrior,
    pub omega_factor: f64,
    pub aux_prob: f64,
}

impl Default for GewekeSettings {
    fn default() -> Self {
        Self {
            rounds: 5_000,
            thin: 10,
            horizon: 10.0,
            arrival_prior: GammaPrior { shape: 3.0, rate: 6.0 },
            service_prior: GammaPrior { shape: 3.0, rate: 3.0 },
            omega_factor: 1.5,
            aux_prob: 0.25,
        }
    }
}

/// Successive-conditional simulation on a single FCFS station: alternately
/// simulate data given the rates, then run one Gibbs pass (path sweep and
/// rate draw) given the data. The rates then keep the prior as their law.
pub fn geweke(s: &GewekeSettings, seed: u64) -> Result<SuiteReport, ValidationError> {
    let clock = Instant::now();
    let spec = geweke_spec(s)?;
    let streams = Streams::new(seed);
    let mut rng = streams.stream(Domain::Validation, 20, 0);
    let draw = |p: GammaPrior, rng: &mut rand_chacha::ChaCha8Rng| {
        Gamma::new(p.shape, 1.0 / p.rate).expect("valid prior").sample(rng)
    };
    let mut theta = Params {
        arrival: vec![draw(s.arrival_prior, &mut rng)],
        service: vec![draw(s.service_prior, &mut rng)],
        routing: spec.declared_params().routing.clone(),
    };
    let cfg = SweepConfig::new(s.omega_factor, s.aux_prob);
    let (mut lambdas, mut mus) = (Vec::with_capacity(s.rounds), Vec::with_capacity(s.rounds));
    for k in 0..s.rounds * s.thin {
        let truth = gillespie_simulate(&theta, &spec, s.horizon, &mut rng)?;
        let obs = emit_observations(&truth, spec.obs_prob(), &mut rng)?;
        let path = sweep(&truth, &obs, &theta, &spec, &cfg, &mut rng)?.path;
        let stats = SufficientStats::from_path(&path, &spec)?;
        theta = draw_params(&stats, &spec, &theta, &mut rng)?;
        if (k + 1) % s.thin == 0 {
            lambdas.push(theta.arrival[0]);
            mus.push(theta.service[0]);
        }
    }
    let ks = |xs: &[f64], p: GammaPrior| {
        let g = GammaDist::new(p.shape, p.rate).expect("valid prior");
        ks_one_sample(xs, |x| g.cdf(x)).p_value
    };
    let checks = vec![
        Check::above("lambda against prior KS p", ks(&lambdas, s.arrival_prior), P_THRESHOLD),
        Check::above("mu against prior KS p", ks(&mus, s.service_prior), P_THRESHOLD),
    ];
    Ok(report("geweke", checks, clock))
}

fn geweke_spec(s: &GewekeSettings) -> Result<NetworkSpec, ModelError> {
    let mut doc = networks::mm1(s.arrival_prior.mean(), s.service_prior.mean()).doc().clone();
    doc.priors.arrival = s.arrival_prior;
    doc.priors.service = s.service_prior;
    NetworkSpec::from_doc(doc)
}
