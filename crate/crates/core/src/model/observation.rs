use serde::{Deserialize, Serialize};

use super::transition::{Move, TaskTransition};
use super::{ClassId, ModelError, StationId, TaskId};

/// Restriction on the transition taken at one time slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepConstraint {
    /// `task` enters the network; entry station unknown. The class may be known.
    ArrivalOf { task: TaskId, class: Option<ClassId> },
    /// `task` leaves the network from an unknown station.
    DepartureOf { task: TaskId },
    /// `task` completes service at `station` and moves to another station.
    ServiceAt { station: StationId, task: TaskId },
    /// No arrival and no departure: an inner move or a virtual jump.
    InnerOrVirtual,
    ExactTriplet(TaskTransition),
    Virtual,
    Unrestricted,
}

impl StepConstraint {
    /// Whether a real move satisfies the constraint.
    pub fn admits_move(&self, m: &Move) -> bool {
        match *self {
            StepConstraint::ArrivalOf { task, class } => {
                m.from == 0 && m.task == task && class.is_none_or(|c| c == m.class_from)
            }
            StepConstraint::DepartureOf { task } => m.to == 0 && m.task == task,
            StepConstraint::ServiceAt { station, task } => m.from == station && m.to != 0 && m.task == task,
            StepConstraint::InnerOrVirtual => m.is_inner(),
            StepConstraint::ExactTriplet(g) => m.transition() == g,
            StepConstraint::Virtual => false,
            StepConstraint::Unrestricted => true,
        }
    }

    /// Whether a triplet can satisfy the constraint (classes aside).
    pub fn admits_transition(&self, g: &TaskTransition) -> bool {
        match *self {
            StepConstraint::ArrivalOf { task, .. } => g.from == 0 && g.task == task,
            StepConstraint::DepartureOf { task } => g.to == 0 && g.task == task,
            StepConstraint::ServiceAt { station, task } => g.from == station && g.to != 0 && g.task == task,
            StepConstraint::InnerOrVirtual => g.is_inner(),
            StepConstraint::ExactTriplet(h) => h == *g,
            StepConstraint::Virtual => false,
            StepConstraint::Unrestricted => true,
        }
    }

    pub fn admits_virtual(&self) -> bool {
        matches!(
            self,
            StepConstraint::InnerOrVirtual | StepConstraint::Virtual | StepConstraint::Unrestricted
        )
    }

    /// True for the kinds that real evidence may take.
    pub fn is_observation(&self) -> bool {
        matches!(
            self,
            StepConstraint::ArrivalOf { .. } | StepConstraint::DepartureOf { .. } | StepConstraint::ServiceAt { .. }
        )
    }

    pub fn task(&self) -> Option<TaskId> {
        match *self {
            StepConstraint::ArrivalOf { task, .. }
            | StepConstraint::DepartureOf { task }
            | StepConstraint::ServiceAt { task, .. } => Some(task),
            StepConstraint::ExactTriplet(g) => Some(g.task),
            _ => None,
        }
    }
}

/// One piece of evidence: at `time`, the network made a transition satisfying `constraint`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub constraint: StepConstraint,
}

/// Evidence collected on one realization over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    horizon: f64,
    records: Vec<Observation>,
}

impl ObservationSequence {
    /// Checks that times are strictly increasing within `(0, horizon]` and that
    /// every record is an arrival, departure or service observation.
    pub fn new(horizon: f64, records: Vec<Observation>) -> Result<Self, ModelError> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(ModelError::InvalidObservations(format!("bad horizon {horizon}")));
        }
        let mut last = 0.0;
        for (n, r) in records.iter().enumerate() {
            if !r.constraint.is_observation() {
                return Err(ModelError::InvalidObservations(format!(
                    "record {n} is not an arrival, departure or service observation"
                )));
            }
            if !(r.time > last) {
                return Err(ModelError::InvalidObservations(format!(
                    "record {n} at t={} does not strictly follow t={last}",
                    r.time
                )));
            }
            if r.time > horizon {
                return Err(ModelError::InvalidObservations(format!(
                    "record {n} at t={} lies beyond the horizon {horizon}",
                    r.time
                )));
            }
            last = r.time;
        }
        Ok(Self { horizon, records })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn service_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.constraint, StepConstraint::ServiceAt { .. }))
            .count()
    }

    pub fn arrival_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.constraint, StepConstraint::ArrivalOf { .. }))
            .count()
    }
}
