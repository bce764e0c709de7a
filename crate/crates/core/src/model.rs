//! Signal namespace shared by the audio pipeline, the mapping engine and the
//! transports.
//!
//! Every value that moves through the engine is addressed by a [`SignalPath`]
//! such as `backend0/band1/loudness` or `scene/particles.size`. Paths double as
//! OSC addresses once a leading `/` is prepended.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("signal `{0}` is already registered")]
    DuplicateId(String),
    #[error("malformed signal path `{path}`: {reason}")]
    MalformedPath { path: String, reason: &'static str },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("signal `{0}` is not an automatable")]
    NotAnAutomatable(String),
    #[error("invalid range [{min}, {max}] for `{id}`")]
    InvalidRange { id: String, min: f64, max: f64 },
}

/// A validated hierarchical signal id: nonempty `/`-separated segments made of
/// `[a-z0-9_.]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SignalPath(String);

impl SignalPath {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let malformed = |reason| ModelError::MalformedPath {
            path: text.to_string(),
            reason,
        };
        if text.is_empty() {
            return Err(malformed("empty path"));
        }
        for segment in text.split('/') {
            if segment.is_empty() {
                return Err(malformed("empty segment"));
            }
            if !segment
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.')
            {
                return Err(malformed("segments may only contain [a-z0-9_.]"));
            }
        }
        Ok(SignalPath(text.to_string()))
    }

    pub fn from_segments<S: AsRef<str>>(segments: &[S]) -> Result<Self, ModelError> {
        let joined = segments
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join("/");
        Self::parse(&joined)
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// OSC address form, `/` + path.
    pub fn osc_address(&self) -> String {
        format!("/{}", self.0)
    }
}

impl fmt::Display for SignalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SignalPath {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for SignalPath {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<SignalPath> for String {
    fn from(path: SignalPath) -> String {
        path.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Source,
    Destination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Continuous,
    Pulse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalDescriptor {
    pub id: SignalPath,
    pub direction: Direction,
    pub value_kind: ValueKind,
    pub range_min: f64,
    pub range_max: f64,
    pub unit: String,
}

impl SignalDescriptor {
    pub fn continuous(
        id: SignalPath,
        direction: Direction,
        range_min: f64,
        range_max: f64,
        unit: &str,
    ) -> Result<Self, ModelError> {
        if !(range_min.is_finite() && range_max.is_finite() && range_min < range_max) {
            return Err(ModelError::InvalidRange {
                id: id.to_string(),
                min: range_min,
                max: range_max,
            });
        }
        Ok(SignalDescriptor {
            id,
            direction,
            value_kind: ValueKind::Continuous,
            range_min,
            range_max,
            unit: unit.to_string(),
        })
    }

    /// Pulse signals always span [0, 1].
    pub fn pulse(id: SignalPath, direction: Direction) -> Self {
        SignalDescriptor {
            id,
            direction,
            value_kind: ValueKind::Pulse,
            range_min: 0.0,
            range_max: 1.0,
            unit: "pulse".to_string(),
        }
    }

    /// Clamps into the declared range. Non-finite input maps to `range_min`.
    pub fn clamp(&self, value: f64) -> f64 {
        if value.is_nan() {
            return self.range_min;
        }
        value.clamp(self.range_min, self.range_max)
    }
}

/// User-controlled scalar injected alongside the audio features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Automatable {
    pub id: SignalPath,
    #[serde(default)]
    pub min: f64,
    #[serde(default = "one")]
    pub max: f64,
    #[serde(default)]
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

impl Automatable {
    pub fn new(id: SignalPath, min: f64, max: f64, value: f64) -> Self {
        Automatable { id, min, max, value }
    }

    pub fn descriptor(&self) -> Result<SignalDescriptor, ModelError> {
        SignalDescriptor::continuous(
            self.id.clone(),
            Direction::Source,
            self.min,
            self.max,
            "normalized",
        )
    }
}

/// Default set of automatables exposed by one backend instance.
pub fn default_automatables(count: usize) -> Vec<Automatable> {
    (1..=count)
        .map(|i| {
            Automatable::new(
                SignalPath::parse(&format!("auto/fader{i}")).expect("static path"),
                0.0,
                1.0,
                0.0,
            )
        })
        .collect()
}

pub const DEFAULT_AUTOMATABLE_COUNT: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneProperty {
    pub descriptor: SignalDescriptor,
    pub default: f64,
}

/// Visual destinations understood by frontends. All ranges are normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePropertyCatalog {
    pub entries: Vec<SceneProperty>,
}

const SCENE_PROPERTIES: &[(&str, f64)] = &[
    ("particles.size", 0.5),
    ("particles.emission_rate", 0.5),
    ("particles.hue", 0.0),
    ("camera.orbit_speed", 0.0),
    ("camera.fov", 0.5),
    ("light.intensity", 0.5),
    ("light.hue", 0.0),
    ("stars.drift_speed", 0.0),
    ("stars.brightness", 0.5),
    ("fog.density", 0.2),
];

impl Default for ScenePropertyCatalog {
    fn default() -> Self {
        let entries = SCENE_PROPERTIES
            .iter()
            .map(|(name, default)| SceneProperty {
                descriptor: SignalDescriptor::continuous(
                    SignalPath::parse(&format!("scene/{name}")).expect("static path"),
                    Direction::Destination,
                    0.0,
                    1.0,
                    "normalized",
                )
                .expect("static range"),
                default: *default,
            })
            .collect();
        ScenePropertyCatalog { entries }
    }
}

/// Handle into a [`Registry`]; stable for the registry's lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalId(pub usize);

/// Immutable list of registered descriptors, in registration order.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    descriptors: Vec<SignalDescriptor>,
    automatable: Vec<bool>,
    index: HashMap<SignalPath, usize>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Option<SignalId> {
        // Paths are validated on insert, so a malformed query simply misses.
        SignalPath::parse(id)
            .ok()
            .and_then(|p| self.index.get(&p).copied())
            .map(SignalId)
    }

    pub fn descriptor(&self, id: SignalId) -> &SignalDescriptor {
        &self.descriptors[id.0]
    }

    pub fn descriptors(&self) -> &[SignalDescriptor] {
        &self.descriptors
    }

    pub fn is_automatable(&self, id: SignalId) -> bool {
        self.automatable[id.0]
    }

    pub fn ids_with_direction(&self, direction: Direction) -> impl Iterator<Item = SignalId> + '_ {
        self.descriptors
            .iter()
            .enumerate()
            .filter(move |(_, d)| d.direction == direction)
            .map(|(i, _)| SignalId(i))
    }
}

/// Single-writer store of current signal values.
///
/// Non-finite writes never land: the previous finite value is kept, or
/// `range_min` if the signal never held one.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    catalog: Arc<Catalog>,
    values: Vec<f64>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: SignalDescriptor) -> Result<SignalId, ModelError> {
        let initial = descriptor.range_min;
        self.insert(descriptor, false, initial)
    }

    pub fn register_with_default(
        &mut self,
        descriptor: SignalDescriptor,
        default: f64,
    ) -> Result<SignalId, ModelError> {
        let initial = descriptor.clamp(default);
        self.insert(descriptor, false, initial)
    }

    pub fn register_automatable(&mut self, automatable: &Automatable) -> Result<SignalId, ModelError> {
        let descriptor = automatable.descriptor()?;
        let initial = descriptor.clamp(automatable.value);
        self.insert(descriptor, true, initial)
    }

    fn insert(
        &mut self,
        descriptor: SignalDescriptor,
        automatable: bool,
        initial: f64,
    ) -> Result<SignalId, ModelError> {
        if descriptor.value_kind == ValueKind::Continuous
            && !(descriptor.range_min < descriptor.range_max)
        {
            return Err(ModelError::InvalidRange {
                id: descriptor.id.to_string(),
                min: descriptor.range_min,
                max: descriptor.range_max,
            });
        }
        if self.catalog.index.contains_key(&descriptor.id) {
            return Err(ModelError::DuplicateId(descriptor.id.to_string()));
        }
        let catalog = Arc::make_mut(&mut self.catalog);
        let id = catalog.descriptors.len();
        catalog.index.insert(descriptor.id.clone(), id);
        catalog.descriptors.push(descriptor);
        catalog.automatable.push(automatable);
        self.values.push(initial);
        Ok(SignalId(id))
    }

    /// Registers from a raw path string, validating the grammar first.
    pub fn register_path(
        &mut self,
        path: &str,
        direction: Direction,
        value_kind: ValueKind,
    ) -> Result<SignalId, ModelError> {
        let id = SignalPath::parse(path)?;
        let descriptor = match value_kind {
            ValueKind::Pulse => SignalDescriptor::pulse(id, direction),
            ValueKind::Continuous => {
                SignalDescriptor::continuous(id, direction, 0.0, 1.0, "normalized")?
            }
        };
        self.register(descriptor)
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn lookup(&self, id: &str) -> Option<SignalId> {
        self.catalog.lookup(id)
    }

    pub fn resolve(&self, id: &str) -> Result<SignalId, ModelError> {
        self.lookup(id)
            .ok_or_else(|| ModelError::UnknownSignal(id.to_string()))
    }

    pub fn value(&self, id: SignalId) -> f64 {
        self.values[id.0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes a value, masking non-finite input with the last good value.
    pub fn write(&mut self, id: SignalId, value: f64) {
        if value.is_finite() {
            self.values[id.0] = value;
        }
    }

    pub fn set_automatable(&mut self, id: &str, value: f64) -> Result<f64, ModelError> {
        let handle = self.resolve(id)?;
        if !self.catalog.is_automatable(handle) {
            return Err(ModelError::NotAnAutomatable(id.to_string()));
        }
        let descriptor = self.catalog.descriptor(handle);
        let accepted = if value.is_finite() {
            descriptor.clamp(value)
        } else {
            self.values[handle.0]
        };
        self.values[handle.0] = accepted;
        Ok(accepted)
    }

    pub fn snapshot(&self, frame_index: u64, time_s: f64, revision: u64) -> Snapshot {
        Snapshot {
            frame_index,
            time_s,
            revision,
            catalog: Arc::clone(&self.catalog),
            values: self.values.clone(),
        }
    }
}

/// Immutable view of every signal value after one processed frame.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub frame_index: u64,
    pub time_s: f64,
    /// Mapping-table revision the frame was evaluated under.
    pub revision: u64,
    pub catalog: Arc<Catalog>,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.catalog.lookup(id).map(|h| self.values[h.0])
    }

    pub fn value(&self, id: SignalId) -> f64 {
        self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SignalDescriptor, f64)> {
        self.catalog
            .descriptors()
            .iter()
            .zip(self.values.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fader(reg: &mut Registry) {
        let auto = Automatable::new(SignalPath::parse("auto/fader1").unwrap(), 0.0, 1.0, 0.0);
        reg.register_automatable(&auto).unwrap();
    }

    #[test]
    fn register_and_list() {
        let mut reg = Registry::new();
        let id = reg
            .register_path("backend0/global/loudness", Direction::Source, ValueKind::Continuous)
            .unwrap();
        assert_eq!(reg.lookup("backend0/global/loudness"), Some(id));
        assert_eq!(reg.catalog().descriptors()[0].id.as_str(), "backend0/global/loudness");
    }

    #[test]
    fn duplicate_is_rejected() {
        let mut reg = Registry::new();
        reg.register_path("backend0/global/loudness", Direction::Source, ValueKind::Continuous)
            .unwrap();
        let err = reg
            .register_path("backend0/global/loudness", Direction::Source, ValueKind::Continuous)
            .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateId(_)));
    }

    #[test]
    fn empty_segment_is_malformed() {
        let mut reg = Registry::new();
        let err = reg
            .register_path("backend0//bad", Direction::Source, ValueKind::Continuous)
            .unwrap_err();
        assert!(matches!(err, ModelError::MalformedPath { .. }));
        assert!(SignalPath::parse("Backend0/x").is_err());
        assert!(SignalPath::parse("a/b c").is_err());
        assert!(SignalPath::parse("/a").is_err());
    }

    #[test]
    fn automatable_clamps() {
        let mut reg = Registry::new();
        fader(&mut reg);
        assert_eq!(reg.set_automatable("auto/fader1", 0.5).unwrap(), 0.5);
        assert_eq!(reg.set_automatable("auto/fader1", 1.7).unwrap(), 1.0);
        assert_eq!(reg.set_automatable("auto/fader1", -3.0).unwrap(), 0.0);
        // non-finite input leaves the last value in place
        assert_eq!(reg.set_automatable("auto/fader1", f64::NAN).unwrap(), 0.0);
    }

    #[test]
    fn set_on_feature_is_not_automatable() {
        let mut reg = Registry::new();
        fader(&mut reg);
        reg.register_path("backend0/global/pitch", Direction::Source, ValueKind::Continuous)
            .unwrap();
        assert!(matches!(
            reg.set_automatable("backend0/global/pitch", 0.2),
            Err(ModelError::NotAnAutomatable(_))
        ));
        assert!(matches!(
            reg.set_automatable("auto/nope", 0.2),
            Err(ModelError::UnknownSignal(_))
        ));
    }

    #[test]
    fn non_finite_writes_are_masked() {
        let mut reg = Registry::new();
        let desc = SignalDescriptor::continuous(
            SignalPath::parse("a/b").unwrap(),
            Direction::Source,
            -2.0,
            2.0,
            "",
        )
        .unwrap();
        let id = reg.register(desc).unwrap();
        reg.write(id, f64::NAN);
        assert_eq!(reg.value(id), -2.0);
        reg.write(id, 1.25);
        reg.write(id, f64::INFINITY);
        assert_eq!(reg.value(id), 1.25);
    }

    #[test]
    fn catalog_has_required_scene_properties() {
        let catalog = ScenePropertyCatalog::default();
        for name in [
            "particles.size",
            "particles.emission_rate",
            "camera.orbit_speed",
            "camera.fov",
            "light.intensity",
            "light.hue",
            "stars.drift_speed",
            "fog.density",
        ] {
            let entry = catalog
                .entries
                .iter()
                .find(|e| e.descriptor.id.as_str() == format!("scene/{name}"))
                .unwrap_or_else(|| panic!("missing {name}"));
            assert_eq!(entry.descriptor.direction, Direction::Destination);
            assert_eq!((entry.descriptor.range_min, entry.descriptor.range_max), (0.0, 1.0));
        }
    }

    #[test]
    fn snapshot_carries_frame_and_values() {
        let mut reg = Registry::new();
        fader(&mut reg);
        reg.set_automatable("auto/fader1", 0.25).unwrap();
        let snap = reg.snapshot(10, 0.1, 3);
        assert_eq!(snap.frame_index, 10);
        assert_eq!(snap.get("auto/fader1"), Some(0.25));
    }

    fn segment() -> impl Strategy<Value = String> {
        "[a-z0-9_.]{1,8}"
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(v in proptest::num::f64::ANY, lo in -1e6f64..1e6, width in 1e-6f64..1e6) {
            let desc = SignalDescriptor::continuous(
                SignalPath::parse("p/q").unwrap(), Direction::Destination, lo, lo + width, "").unwrap();
            let once = desc.clamp(v);
            prop_assert_eq!(desc.clamp(once).to_bits(), once.to_bits());
            prop_assert!(once.is_finite());
        }

        #[test]
        fn path_round_trips(segments in proptest::collection::vec(segment(), 1..5)) {
            let path = SignalPath::from_segments(&segments).unwrap();
            let reparsed = SignalPath::parse(&path.to_string()).unwrap();
            prop_assert_eq!(reparsed.segments().collect::<Vec<_>>(), segments.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert_eq!(reparsed, path);
        }

        #[test]
        fn registry_never_exposes_non_finite(writes in proptest::collection::vec(prop_oneof![
            proptest::num::f64::ANY,
            Just(f64::NAN),
            Just(f64::INFINITY),
        ], 0..50)) {
            let mut reg = Registry::new();
            let id = reg.register_path("a/b", Direction::Source, ValueKind::Continuous).unwrap();
            for w in writes {
                reg.write(id, w);
                prop_assert!(reg.value(id).is_finite());
            }
        }
    }
}
