//! The per-frame pipeline: features → sub-band slots → registry → mappings.
//!
//! An [`Engine`] is the single writer of its registry. Edits from other
//! threads go through an [`EngineHandle`] and are applied atomically at the
//! start of the next frame, so every frame is evaluated under exactly one
//! mapping-table revision.

use crossbeam::channel::{self, Receiver, Sender};
use thiserror::Error;

use crate::features::{
    FeatureExtractor, FeatureKind, FeatureSnapshot, FeatureValues, PitchConfigError,
};
use crate::ingest::{AudioFrame, FramingError, StreamConfig};
use crate::mapping::{DestinationUpdate, Expression, MappingError, MappingRequest, MappingTable, PreparedMapping};
use crate::model::{
    Direction, ModelError, Registry, ScenePropertyCatalog, SignalDescriptor, SignalId, SignalPath,
    Snapshot, ValueKind,
};
use crate::session::SessionConfig;
use crate::subbands::{run_slots, BandSplitter, SubBandConfig, SubBandError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("mapping {index}: {error}")]
    MappingAt { index: usize, error: MappingError },
    #[error("{0}")]
    SubBand(String),
    #[error(transparent)]
    Pitch(#[from] PitchConfigError),
    #[error("{0}")]
    Stream(String),
    #[error("engine has shut down")]
    Disconnected,
}

impl From<SubBandError> for EngineError {
    fn from(e: SubBandError) -> Self {
        EngineError::SubBand(e.to_string())
    }
}

impl From<FramingError> for EngineError {
    fn from(e: FramingError) -> Self {
        EngineError::Stream(e.to_string())
    }
}

/// Edits applied between frames.
#[derive(Clone, Debug)]
pub enum Command {
    AddMapping(PreparedMapping),
    RemoveMapping(u64),
    SetEnabled(u64, bool),
    SetExpression(u64, Expression),
    SetAutomatable(String, f64),
    SetCrossovers(f64, f64),
}

impl Command {
    /// Parses the request off the audio path.
    pub fn add_mapping(request: &MappingRequest) -> Result<Command, MappingError> {
        request.prepare().map(Command::AddMapping)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    MappingAdded { id: u64, revision: u64 },
    Revision(u64),
    AutomatableSet { value: f64, revision: u64 },
}

impl Outcome {
    pub fn revision(&self) -> u64 {
        match self {
            Outcome::MappingAdded { revision, .. }
            | Outcome::Revision(revision)
            | Outcome::AutomatableSet { revision, .. } => *revision,
        }
    }
}

pub type CommandResult = Result<Outcome, EngineError>;

struct Pending {
    command: Command,
    reply: Option<Sender<CommandResult>>,
}

/// Cloneable sender for engine commands.
#[derive(Clone)]
pub struct EngineHandle {
    tx: Sender<Pending>,
}

impl EngineHandle {
    /// Queues a command; the receiver yields its result once applied.
    pub fn submit(&self, command: Command) -> Receiver<CommandResult> {
        let (reply, rx) = channel::bounded(1);
        if self
            .tx
            .send(Pending {
                command,
                reply: Some(reply.clone()),
            })
            .is_err()
        {
            let _ = reply.send(Err(EngineError::Disconnected));
        }
        rx
    }

    pub fn send(&self, command: Command) {
        let _ = self.tx.send(Pending { command, reply: None });
    }
}

#[derive(Clone, Debug)]
pub struct FrameOutput {
    pub snapshot: Snapshot,
    pub features: FeatureSnapshot,
    pub updates: Vec<DestinationUpdate>,
}

#[derive(Debug, Clone, Copy)]
struct GlobalIds {
    loudness: SignalId,
    pitch: SignalId,
    pitch_confidence: SignalId,
    centroid: SignalId,
    onset: SignalId,
    odf: SignalId,
    dissonance: SignalId,
}

pub struct Engine {
    stream: StreamConfig,
    registry: Registry,
    table: MappingTable,
    global: FeatureExtractor,
    splitter: BandSplitter,
    slot_config: SubBandConfig,
    band_extractors: Vec<FeatureExtractor>,
    global_ids: GlobalIds,
    band_ids: Vec<Vec<(FeatureKind, SignalId)>>,
    destinations: Vec<SignalId>,
    tx: Sender<Pending>,
    rx: Receiver<Pending>,
    frames_processed: u64,
}

fn feature_descriptor(
    path: SignalPath,
    kind: FeatureKind,
    stream: &StreamConfig,
    fmax: f64,
) -> Result<SignalDescriptor, ModelError> {
    let fs = stream.sample_rate as f64;
    match kind {
        FeatureKind::Onset => Ok(SignalDescriptor::pulse(path, Direction::Source)),
        FeatureKind::Loudness => SignalDescriptor::continuous(
            path,
            Direction::Source,
            0.0,
            (stream.frame_size as f64).powf(crate::features::LOUDNESS_EXPONENT),
            "energy^0.67",
        ),
        FeatureKind::Pitch => SignalDescriptor::continuous(path, Direction::Source, 0.0, fmax, "Hz"),
        FeatureKind::Centroid => {
            SignalDescriptor::continuous(path, Direction::Source, 0.0, fs / 2.0, "Hz")
        }
        FeatureKind::Dissonance => {
            SignalDescriptor::continuous(path, Direction::Source, 0.0, 1.0, "normalized")
        }
    }
}

impl Engine {
    /// Builds the pipeline and registers every signal the session implies:
    /// global features, band slots, automatables, then scene destinations.
    pub fn new(config: &SessionConfig) -> Result<Self, EngineError> {
        let stream = config.stream;
        stream.validate()?;
        let fs = stream.sample_rate as f64;
        let device = SignalPath::parse(&config.device)?;
        if device.segments().count() != 1 {
            return Err(ModelError::MalformedPath {
                path: config.device.clone(),
                reason: "device name must be a single segment",
            }
            .into());
        }
        let analysis = config.analysis;
        let path = |scope: &str, name: &str| SignalPath::parse(&format!("{device}/{scope}/{name}"));

        let mut registry = Registry::new();
        let fmax = analysis.pitch_fmax;
        let reg_feature = |registry: &mut Registry, scope: &str, kind: FeatureKind| {
            registry.register(feature_descriptor(path(scope, kind.name())?, kind, &stream, fmax)?)
        };
        let loudness = reg_feature(&mut registry, "global", FeatureKind::Loudness)?;
        let pitch = reg_feature(&mut registry, "global", FeatureKind::Pitch)?;
        let pitch_confidence = registry.register(SignalDescriptor::continuous(
            path("global", "pitch_confidence")?,
            Direction::Source,
            0.0,
            1.0,
            "normalized",
        )?)?;
        let centroid = reg_feature(&mut registry, "global", FeatureKind::Centroid)?;
        let onset = reg_feature(&mut registry, "global", FeatureKind::Onset)?;
        let odf = registry.register(SignalDescriptor::continuous(
            path("global", "odf")?,
            Direction::Source,
            0.0,
            1.0,
            "normalized",
        )?)?;
        let dissonance = reg_feature(&mut registry, "global", FeatureKind::Dissonance)?;
        let global_ids = GlobalIds {
            loudness,
            pitch,
            pitch_confidence,
            centroid,
            onset,
            odf,
            dissonance,
        };

        let splitter = BandSplitter::new(config.subbands.clone(), fs, stream.frame_size, stream.hop_size)?;
        let mut band_ids = Vec::new();
        let mut band_extractors = Vec::new();
        for (i, slots) in config.subbands.slots.iter().enumerate() {
            let scope = format!("band{}", i + 1);
            let ids = slots
                .iter()
                .map(|&kind| Ok((kind, reg_feature(&mut registry, &scope, kind)?)))
                .collect::<Result<Vec<_>, EngineError>>()?;
            band_ids.push(ids);
            band_extractors.push(FeatureExtractor::new(fs, stream.frame_size, stream.hop_size, analysis)?);
        }

        for auto in &config.automatables {
            registry.register_automatable(auto)?;
        }
        let destinations = ScenePropertyCatalog::default()
            .entries
            .into_iter()
            .map(|p| registry.register_with_default(p.descriptor, p.default))
            .collect::<Result<Vec<_>, _>>()?;

        let mut table = MappingTable::new();
        for (index, request) in config.mappings.iter().enumerate() {
            request
                .prepare()
                .and_then(|prepared| table.add(registry.catalog(), prepared))
                .map_err(|error| EngineError::MappingAt { index, error })?;
        }

        let (tx, rx) = channel::unbounded();
        Ok(Engine {
            stream,
            global: FeatureExtractor::new(fs, stream.frame_size, stream.hop_size, analysis)?,
            registry,
            table,
            splitter,
            slot_config: config.subbands.clone(),
            band_extractors,
            global_ids,
            band_ids,
            destinations,
            tx,
            rx,
            frames_processed: 0,
        })
    }

    pub fn handle(&self) -> EngineHandle {
        EngineHandle { tx: self.tx.clone() }
    }

    pub fn stream(&self) -> &StreamConfig {
        &self.stream
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn table(&self) -> &MappingTable {
        &self.table
    }

    pub fn revision(&self) -> u64 {
        self.table.revision()
    }

    /// Destination ids in catalog order.
    pub fn destinations(&self) -> &[SignalId] {
        &self.destinations
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Applies one command immediately. Only call between frames.
    pub fn apply(&mut self, command: Command) -> CommandResult {
        match command {
            Command::AddMapping(prepared) => {
                let id = self.table.add(self.registry.catalog(), prepared)?;
                Ok(Outcome::MappingAdded {
                    id,
                    revision: self.table.revision(),
                })
            }
            Command::RemoveMapping(id) => {
                self.table.remove(id)?;
                Ok(Outcome::Revision(self.table.revision()))
            }
            Command::SetEnabled(id, enabled) => {
                self.table.set_enabled(id, enabled)?;
                Ok(Outcome::Revision(self.table.revision()))
            }
            Command::SetExpression(id, expression) => {
                self.table.set_expression(id, expression)?;
                Ok(Outcome::Revision(self.table.revision()))
            }
            Command::SetAutomatable(id, value) => {
                let value = self.registry.set_automatable(&id, value)?;
                Ok(Outcome::AutomatableSet {
                    value,
                    revision: self.table.revision(),
                })
            }
            Command::SetCrossovers(lo, hi) => {
                self.splitter.set_crossovers(lo, hi)?;
                Ok(Outcome::Revision(self.table.revision()))
            }
        }
    }

    /// Applies every queued command.
    pub fn drain_commands(&mut self) {
        while let Ok(Pending { command, reply }) = self.rx.try_recv() {
            let result = self.apply(command);
            if let Some(reply) = reply {
                let _ = reply.send(result);
            }
        }
    }

    pub fn process_frame(&mut self, frame: &AudioFrame) -> FrameOutput {
        self.drain_commands();

        let global = self.global.compute(&frame.samples, &FeatureKind::ALL);
        let bands = self.splitter.split(frame);
        let band_values = run_slots(bands, &self.slot_config, &mut self.band_extractors);

        self.write_global(&global);
        for (ids, values) in self.band_ids.iter().zip(&band_values) {
            for &(kind, id) in ids {
                if let Some(v) = slot_value(values, kind) {
                    self.registry.write(id, v);
                }
            }
        }

        let updates = self
            .table
            .evaluate(&mut self.registry, self.stream.hop_seconds());
        self.frames_processed += 1;
        FrameOutput {
            snapshot: self.registry.snapshot(
                frame.frame_index,
                self.stream.frame_time(frame.frame_index),
                self.table.revision(),
            ),
            features: FeatureSnapshot::from_global(frame.frame_index, &global, band_values),
            updates,
        }
    }

    fn write_global(&mut self, values: &FeatureValues) {
        let ids = self.global_ids;
        let snap = FeatureSnapshot::from_global(0, values, Vec::new());
        self.registry.write(ids.loudness, snap.loudness);
        self.registry.write(ids.pitch, snap.pitch_hz);
        self.registry.write(ids.pitch_confidence, snap.pitch_confidence);
        self.registry.write(ids.centroid, snap.centroid_hz);
        self.registry.write(ids.onset, if snap.onset { 1.0 } else { 0.0 });
        self.registry.write(ids.odf, snap.odf);
        self.registry.write(ids.dissonance, snap.dissonance);
    }

    /// Current mapping table in request form, for sessions and announces.
    pub fn mapping_requests(&self) -> Vec<(u64, MappingRequest)> {
        self.table.iter().map(|s| (s.id, s.to_request())).collect()
    }
}

fn slot_value(values: &FeatureValues, kind: FeatureKind) -> Option<f64> {
    match kind {
        FeatureKind::Loudness => values.loudness,
        FeatureKind::Pitch => values.pitch.map(|p| p.pitch_hz),
        FeatureKind::Centroid => values.centroid_hz,
        FeatureKind::Onset => values.onset.map(|o| if o.onset { 1.0 } else { 0.0 }),
        FeatureKind::Dissonance => values.dissonance,
    }
}

/// Value kinds of the global signals, for documentation and tests.
pub const GLOBAL_SIGNALS: [(&str, ValueKind); 7] = [
    ("loudness", ValueKind::Continuous),
    ("pitch", ValueKind::Continuous),
    ("pitch_confidence", ValueKind::Continuous),
    ("centroid", ValueKind::Continuous),
    ("onset", ValueKind::Pulse),
    ("odf", ValueKind::Continuous),
    ("dissonance", ValueKind::Continuous),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::ingest::frame_stream;
    use std::f64::consts::PI;

    fn sine_frames(freq: f64, seconds: f64, config: &StreamConfig) -> Vec<AudioFrame> {
        let fs = config.sample_rate as f64;
        let x: Vec<f64> = (0..(seconds * fs) as usize)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect();
        frame_stream(&x, config).unwrap().collect()
    }

    #[test]
    fn registers_expected_signals() {
        let mut config = SessionConfig::default();
        config.subbands = SubBandConfig {
            n_bands: 3,
            slots: vec![vec![FeatureKind::Loudness], vec![], vec![FeatureKind::Onset]],
            ..SubBandConfig::default()
        };
        // Empty slot list for an enabled band is rejected.
        assert!(Engine::new(&config).is_err());
        config.subbands.slots[1] = vec![FeatureKind::Centroid];
        let engine = Engine::new(&config).unwrap();
        let ids: Vec<&str> = engine
            .registry()
            .catalog()
            .descriptors()
            .iter()
            .map(|d| d.id.as_str())
            .collect();
        assert!(ids.contains(&"backend0/band1/loudness"));
        assert!(ids.contains(&"backend0/band3/onset"));
        assert!(!ids.contains(&"backend0/band1/onset"));
        assert_eq!(ids.iter().filter(|i| i.contains("/band")).count(), 3);
        assert!(ids.iter().filter(|i| i.starts_with("scene/")).count() >= 8);
    }

    #[test]
    fn only_named_slots_are_registered() {
        let mut config = SessionConfig::default();
        config.subbands = SubBandConfig::from_slot_names(200.0, 2000.0, &[vec!["loudness"], vec!["pitch"], vec!["onset"]]).unwrap();
        let engine = Engine::new(&config).unwrap();
        let bands: Vec<&str> = engine
            .registry()
            .catalog()
            .descriptors()
            .iter()
            .map(|d| d.id.as_str())
            .filter(|i| i.contains("/band"))
            .collect();
        assert_eq!(bands, ["backend0/band1/loudness", "backend0/band2/pitch", "backend0/band3/onset"]);
    }

    #[test]
    fn frame_indices_increase_and_silence_is_defined() {
        let config = SessionConfig::default();
        let mut engine = Engine::new(&config).unwrap();
        let silence = vec![0.0; 44100];
        let mut last = None;
        for frame in frame_stream(&silence, &config.stream).unwrap() {
            let out = engine.process_frame(&frame);
            assert_eq!(out.snapshot.frame_index, frame.frame_index);
            if let Some(prev) = last {
                assert!(out.snapshot.frame_index > prev);
            }
            last = Some(out.snapshot.frame_index);
            assert_eq!(out.snapshot.get("backend0/global/loudness"), Some(0.0));
            assert_eq!(out.snapshot.get("backend0/global/onset"), Some(0.0));
            assert_eq!(out.snapshot.get("backend0/global/pitch"), Some(0.0));
            assert!(out.snapshot.values.iter().all(|v| v.is_finite()));
        }
        assert_eq!(last, Some(82));
    }

    #[test]
    fn mapping_follows_loudness_next_frame() {
        let config = SessionConfig::default();
        let mut engine = Engine::new(&config).unwrap();
        let frames = sine_frames(440.0, 0.5, &config.stream);
        engine.process_frame(&frames[0]);
        let rx = engine.handle().submit(
            Command::add_mapping(&MappingRequest::new(
                &["backend0/global/loudness"],
                "scene/particles.size",
                "y=0.01*x",
            ))
            .unwrap(),
        );
        // Not applied until the next frame boundary.
        assert!(rx.try_recv().is_err());
        let out = engine.process_frame(&frames[1]);
        assert_eq!(rx.try_recv().unwrap(), Ok(Outcome::MappingAdded { id: 1, revision: 1 }));
        let loud = out.snapshot.get("backend0/global/loudness").unwrap();
        let size = out.snapshot.get("scene/particles.size").unwrap();
        assert!((size - (0.01 * loud).clamp(0.0, 1.0)).abs() < 1e-12);
        assert_eq!(out.snapshot.revision, 1);
    }

    #[test]
    fn automatable_reaches_next_snapshot() {
        let config = SessionConfig::default();
        let mut engine = Engine::new(&config).unwrap();
        let frames = sine_frames(440.0, 0.2, &config.stream);
        let rx = engine.handle().submit(Command::SetAutomatable("auto/fader1".into(), 0.7));
        let out = engine.process_frame(&frames[0]);
        assert!(matches!(rx.recv().unwrap(), Ok(Outcome::AutomatableSet { value, .. }) if value == 0.7));
        assert_eq!(out.snapshot.get("auto/fader1"), Some(0.7));
        let err = engine.apply(Command::SetAutomatable("backend0/global/pitch".into(), 0.2));
        assert!(matches!(err, Err(EngineError::Model(ModelError::NotAnAutomatable(_)))));
    }

    #[test]
    fn pitch_tracks_sine() {
        let config = SessionConfig::default();
        let mut engine = Engine::new(&config).unwrap();
        for frame in sine_frames(440.0, 0.5, &config.stream) {
            let out = engine.process_frame(&frame);
            assert!((out.features.pitch_hz - 440.0).abs() < 0.5);
        }
    }

    #[test]
    fn processing_is_deterministic() {
        let config = SessionConfig::default();
        let frames = sine_frames(330.0, 0.5, &config.stream);
        let run = || {
            let mut engine = Engine::new(&config).unwrap();
            frames
                .iter()
                .map(|f| engine.process_frame(f).snapshot.values)
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
