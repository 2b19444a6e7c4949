use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use super::ModelError;

/// Network parameters: arrival rates per class, service rates per service
/// symbol (see [`NetworkSpec::service_symbol`]) and routing probabilities per
/// routing row, aligned with the row's targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub arrival: Vec<f64>,
    pub service: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
}

impl Params {
    pub fn check_shape(&self, spec: &NetworkSpec) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if self.arrival.len() != spec.class_count() {
            return bad("arrival rate count does not match class count");
        }
        if self.service.len() != spec.symbols().len() {
            return bad("service rate count does not match service symbols");
        }
        let rows = &spec.routing().rows;
        if self.routing.len() != rows.len()
            || self.routing.iter().zip(rows).any(|(p, r)| p.len() != r.targets.len())
        {
            return bad("routing probabilities do not match routing rows");
        }
        Ok(())
    }

    /// Shape plus positivity and row normalization.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<(), ModelError> {
        self.check_shape(spec)?;
        if self.arrival.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
            return Err(ModelError::InvalidParams("arrival rates must be non-negative".into()));
        }
        if self.service.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
            return Err(ModelError::InvalidParams("service rates must be positive".into()));
        }
        for row in &self.routing {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(ModelError::InvalidParams("routing rows must be probability vectors".into()));
            }
        }
        Ok(())
    }
}
