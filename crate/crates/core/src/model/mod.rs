//! Domain data model: input parameters, fibers, results and their
//! derived characteristics.

mod characteristic;
mod fiber;
pub mod fiber_io;

pub use characteristic::{derive_characteristics, Characteristic, Characteristics, Units};
pub use fiber::{bounding_box, Fiber, FiberResult};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};

/// A named continuous input parameter with its investigated range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDescriptor {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ParameterDescriptor {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Result<Self> {
        let d = ParameterDescriptor {
            name: name.into(),
            min,
            max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParameter {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(bad("empty name"));
        }
        if self.name.contains(',') || self.name.contains('{') || self.name.contains('}') {
            return Err(bad("name may not contain `,`, `{` or `}`"));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(bad("range bounds must be finite"));
        }
        if self.min >= self.max {
            return Err(bad("min must be strictly below max"));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }

    /// Maps `value` from `[min, max]` onto `[0, 1]`.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.min) / self.range()
    }
}

/// Checks every descriptor and that names are unique within the study.
pub fn validate_descriptors(descriptors: &[ParameterDescriptor]) -> Result<()> {
    if descriptors.is_empty() {
        return Err(Error::input("at least one parameter is required"));
    }
    let mut seen = HashSet::new();
    for d in descriptors {
        d.validate()?;
        if !seen.insert(d.name.as_str()) {
            return Err(Error::InvalidParameter {
                name: d.name.clone(),
                reason: "duplicate name".into(),
            });
        }
    }
    Ok(())
}

/// One point in parameter space, ordered like the study's descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>, descriptors: &[ParameterDescriptor]) -> Result<Self> {
        if values.len() != descriptors.len() {
            return Err(Error::input(format!(
                "parameter vector has {} values but {} parameters are declared",
                values.len(),
                descriptors.len()
            )));
        }
        for (v, d) in values.iter().zip(descriptors) {
            if !d.contains(*v) {
                return Err(Error::InvalidParameter {
                    name: d.name.clone(),
                    reason: format!("value {v} outside [{}, {}]", d.min, d.max),
                });
            }
        }
        Ok(ParameterVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn with_value(&self, index: usize, value: f64) -> Self {
        let mut values = self.0.clone();
        values[index] = value;
        ParameterVector(values)
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }
}
