//! Networks, states, task transitions and evidence.
//!
//! The state space is countably infinite, so the generator is never
//! materialized: [`Generator`] enumerates the finitely many moves out of a
//! given state on demand.

mod observation;
mod params;
mod path;
mod spec;
mod state;
mod transition;

use thiserror::Error;

pub use observation::{Observation, ObservationSequence, StepConstraint};
pub use params::Params;
pub use path::{is_compatible, path_log_density, Path, UniformizedPath};
pub use spec::{
    Discipline, GammaPrior, NetworkSpec, NetworkSpecDoc, PriorDoc, RouteEntryDoc, RouteTarget, RoutingRow,
    RoutingRowDoc, RoutingRule, ServiceSymbol, StationDoc,
};
pub(crate) use spec::topological_order;
pub use state::{Job, NetworkState};
pub use transition::{classify, exit_rate, rate_bound, successors, Generator, Move, Step, Successor, TaskTransition};

/// Station index; 0 is the exterior, stations are `1..=M`.
pub type StationId = usize;
pub type ClassId = usize;
pub type TaskId = u64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("path horizon {path} differs from observation horizon {observations}")]
    HorizonMismatch { path: f64, observations: f64 },
}
