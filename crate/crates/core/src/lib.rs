//! Bayesian inference for multi-class open Markovian queueing networks from
//! partially observed task transitions.
//!
//! Latent network paths are sampled by a uniformization-based Gibbs sampler
//! with auxiliary clamps and forward filtering backward sampling; rates and
//! routing probabilities are then drawn from their conditionals.

pub mod dataset;
pub mod diagnostics;
pub mod engine;
pub mod model;
pub mod networks;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod stat_tests;
pub mod validation;
pub mod simulate;

pub use model::{
    classify, exit_rate, is_compatible, path_log_density, rate_bound, successors, ClassId, Discipline, Job,
    ModelError, NetworkSpec, NetworkState, Observation, ObservationSequence, Params, Path, StationId, Step,
    StepConstraint, TaskId, TaskTransition, UniformizedPath,
};
