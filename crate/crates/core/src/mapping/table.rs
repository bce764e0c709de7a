use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{ExprError, Expression};
use crate::model::{Catalog, Direction, Registry, SignalId, SignalPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("`{0}` is not a source signal")]
    NotASource(String),
    #[error("`{0}` is not a destination signal")]
    NotADestination(String),
    #[error("destination `{destination}` is already driven by mapping {mapping}")]
    DestinationBusy { destination: String, mapping: u64 },
    #[error("no mapping with id {0}")]
    UnknownMapping(u64),
    #[error("a mapping needs between 1 and 10 sources, got {0}")]
    SourceCount(usize),
    #[error("smoothing time must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),
    #[error(transparent)]
    Expression(#[from] ExprError),
}

/// Wire/session form of a mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRequest {
    pub sources: Vec<String>,
    pub destination: String,
    pub expression: String,
    #[serde(default)]
    pub smoothing_ms: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl MappingRequest {
    pub fn new(sources: &[&str], destination: &str, expression: &str) -> Self {
        MappingRequest {
            sources: sources.iter().map(|s| s.to_string()).collect(),
            destination: destination.to_string(),
            expression: expression.to_string(),
            smoothing_ms: 0.0,
            enabled: true,
        }
    }

    /// Parses the expression; done on the caller's thread so only validated
    /// ASTs reach the audio path.
    pub fn prepare(&self) -> Result<PreparedMapping, MappingError> {
        if self.sources.is_empty() || self.sources.len() > super::expr::MAX_VARIABLES {
            return Err(MappingError::SourceCount(self.sources.len()));
        }
        if !(self.smoothing_ms.is_finite() && self.smoothing_ms >= 0.0) {
            return Err(MappingError::InvalidSmoothing(self.smoothing_ms));
        }
        Ok(PreparedMapping {
            request: self.clone(),
            expression: Expression::parse(&self.expression, self.sources.len())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedMapping {
    pub request: MappingRequest,
    pub expression: Expression,
}

/// One-pole smoother, y += α(x − y) with α = 1 − e^(−dt/τ).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Smoother {
    time_constant_ms: f64,
    state: Option<f64>,
}

impl Smoother {
    fn step(&mut self, input: f64, dt: f64) -> f64 {
        if self.time_constant_ms <= 0.0 {
            return input;
        }
        let out = match self.state {
            None => input,
            Some(prev) => {
                let alpha = 1.0 - (-dt * 1000.0 / self.time_constant_ms).exp();
                prev + alpha * (input - prev)
            }
        };
        self.state = Some(out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingSpec {
    pub id: u64,
    pub sources: Vec<SignalPath>,
    pub destination: SignalPath,
    pub expression: Expression,
    pub enabled: bool,
    pub smoothing_ms: f64,
    source_ids: Vec<SignalId>,
    destination_id: SignalId,
    smoother: Smoother,
}

impl MappingSpec {
    pub fn to_request(&self) -> MappingRequest {
        MappingRequest {
            sources: self.sources.iter().map(ToString::to_string).collect(),
            destination: self.destination.to_string(),
            expression: self.expression.text().to_string(),
            smoothing_ms: self.smoothing_ms,
            enabled: self.enabled,
        }
    }

    pub fn destination_id(&self) -> SignalId {
        self.destination_id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DestinationUpdate {
    pub mapping: u64,
    pub destination: SignalId,
    pub value: f64,
}

/// Runtime-editable mapping table. Every successful edit bumps `revision`.
#[derive(Clone, Debug, Default)]
pub struct MappingTable {
    specs: BTreeMap<u64, MappingSpec>,
    revision: u64,
    next_id: u64,
}

impl MappingTable {
    pub fn new() -> Self {
        MappingTable {
            specs: BTreeMap::new(),
            revision: 0,
            next_id: 1,
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MappingSpec> {
        self.specs.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MappingSpec> {
        self.specs.values()
    }

    fn writer_of(&self, destination: SignalId, except: Option<u64>) -> Option<u64> {
        self.specs
            .values()
            .find(|s| s.enabled && s.destination_id == destination && Some(s.id) != except)
            .map(|s| s.id)
    }

    pub fn add(&mut self, catalog: &Catalog, prepared: PreparedMapping) -> Result<u64, MappingError> {
        let PreparedMapping { request, expression } = prepared;
        let resolve = |id: &str| {
            catalog
                .lookup(id)
                .ok_or_else(|| MappingError::UnknownSignal(id.to_string()))
        };
        let mut source_ids = Vec::with_capacity(request.sources.len());
        for s in &request.sources {
            let h = resolve(s)?;
            if catalog.descriptor(h).direction != Direction::Source {
                return Err(MappingError::NotASource(s.clone()));
            }
            source_ids.push(h);
        }
        let destination_id = resolve(&request.destination)?;
        if catalog.descriptor(destination_id).direction != Direction::Destination {
            return Err(MappingError::NotADestination(request.destination.clone()));
        }
        if request.enabled {
            if let Some(mapping) = self.writer_of(destination_id, None) {
                return Err(MappingError::DestinationBusy {
                    destination: request.destination.clone(),
                    mapping,
                });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.specs.insert(
            id,
            MappingSpec {
                id,
                sources: source_ids
                    .iter()
                    .map(|&h| catalog.descriptor(h).id.clone())
                    .collect(),
                destination: catalog.descriptor(destination_id).id.clone(),
                expression,
                enabled: request.enabled,
                smoothing_ms: request.smoothing_ms,
                source_ids,
                destination_id,
                smoother: Smoother {
                    time_constant_ms: request.smoothing_ms,
                    state: None,
                },
            },
        );
        self.revision += 1;
        Ok(id)
    }

    pub fn remove(&mut self, id: u64) -> Result<(), MappingError> {
        self.specs
            .remove(&id)
            .ok_or(MappingError::UnknownMapping(id))?;
        self.revision += 1;
        Ok(())
    }

    pub fn set_enabled(&mut self, id: u64, enabled: bool) -> Result<(), MappingError> {
        let spec = self.specs.get(&id).ok_or(MappingError::UnknownMapping(id))?;
        if enabled && !spec.enabled {
            if let Some(mapping) = self.writer_of(spec.destination_id, Some(id)) {
                return Err(MappingError::DestinationBusy {
                    destination: spec.destination.to_string(),
                    mapping,
                });
            }
        }
        let spec = self.specs.get_mut(&id).expect("checked above");
        spec.enabled = enabled;
        spec.smoother.state = None;
        self.revision += 1;
        Ok(())
    }

    /// Replaces the expression of mapping `id`. The text is parsed against
    /// the mapping's own source count.
    pub fn set_expression(&mut self, id: u64, expression: Expression) -> Result<(), MappingError> {
        let spec = self.specs.get_mut(&id).ok_or(MappingError::UnknownMapping(id))?;
        spec.expression = if expression.n_sources() == spec.sources.len() {
            expression
        } else {
            Expression::parse(expression.text(), spec.sources.len())?
        };
        self.revision += 1;
        Ok(())
    }

    /// Evaluates every enabled mapping once, in id order, and writes the
    /// clamped results into `registry`. Non-finite results are dropped so the
    /// destination keeps its last value.
    pub fn evaluate(&mut self, registry: &mut Registry, dt: f64) -> Vec<DestinationUpdate> {
        let catalog = registry.catalog().clone();
        let mut inputs = [0.0; super::expr::MAX_VARIABLES];
        let mut updates = Vec::new();
        for spec in self.specs.values_mut().filter(|s| s.enabled) {
            for (slot, &src) in inputs.iter_mut().zip(&spec.source_ids) {
                *slot = registry.value(src);
            }
            let raw = spec.expression.eval(&inputs[..spec.source_ids.len()]);
            if !raw.is_finite() {
                continue;
            }
            let smoothed = spec.smoother.step(raw, dt);
            let value = catalog.descriptor(spec.destination_id).clamp(smoothed);
            registry.write(spec.destination_id, value);
            updates.push(DestinationUpdate {
                mapping: spec.id,
                destination: spec.destination_id,
                value,
            });
        }
        updates
    }
}
