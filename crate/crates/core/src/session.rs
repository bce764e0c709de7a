//! Versioned JSON session files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::features::{min_pitch_hz, AnalysisParams};
use crate::ingest::StreamConfig;
use crate::mapping::{ExprError, MappingError, MappingRequest};
use crate::model::{default_automatables, Automatable, DEFAULT_AUTOMATABLE_COUNT};
use crate::subbands::SubBandConfig;

pub const SESSION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("unsupported session version {0} (expected {SESSION_VERSION})")]
    Version(u32),
    #[error("mapping {index}: unknown signal `{signal}`")]
    UnknownSignal { index: usize, signal: String },
    #[error("mapping {index}: {error}")]
    Expression { index: usize, error: ExprError },
    #[error("mapping {index}: {error}")]
    Mapping { index: usize, error: MappingError },
    #[error("invalid session: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub osc_dest: String,
    pub ui_port: u16,
    /// Rate of UI value pushes, Hz.
    pub ui_rate_hz: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            osc_dest: "127.0.0.1:9000".into(),
            ui_port: 8765,
            ui_rate_hz: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub version: u32,
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default)]
    pub subbands: SubBandConfig,
    #[serde(default = "default_automatable_list")]
    pub automatables: Vec<Automatable>,
    #[serde(default)]
    pub mappings: Vec<MappingRequest>,
    #[serde(default)]
    pub transports: TransportConfig,
}

fn default_device() -> String {
    "backend0".into()
}

fn default_automatable_list() -> Vec<Automatable> {
    default_automatables(DEFAULT_AUTOMATABLE_COUNT)
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            version: SESSION_VERSION,
            device: default_device(),
            stream: StreamConfig::default(),
            analysis: AnalysisParams::default(),
            subbands: SubBandConfig::default(),
            automatables: default_automatable_list(),
            mappings: Vec::new(),
            transports: TransportConfig::default(),
        }
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl SessionConfig {
    /// Parses and fully validates session JSON.
    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SessionConfig =
            serde_path_to_error::deserialize(de).map_err(|e| SessionError::Schema {
                pointer: json_pointer(e.path()),
                message: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Overrides stream parameters. If the frame gets too short for the
    /// configured pitch floor, `pitch_fmin` is raised to the new floor and
    /// the old value returned.
    pub fn override_stream(
        &mut self,
        sample_rate: Option<u32>,
        frame_size: Option<usize>,
        hop_size: Option<usize>,
    ) -> Option<f64> {
        if let Some(sr) = sample_rate {
            self.stream.sample_rate = sr;
        }
        if let Some(frame) = frame_size {
            self.stream.frame_size = frame;
        }
        if let Some(hop) = hop_size {
            self.stream.hop_size = hop;
        }
        let floor = min_pitch_hz(self.stream.sample_rate as f64, self.stream.frame_size);
        (self.analysis.pitch_fmin < floor).then(|| {
            std::mem::replace(&mut self.analysis.pitch_fmin, floor)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    /// Checks the version, stream and band setup, and that every mapping
    /// parses and refers to known signals.
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.version != SESSION_VERSION {
            return Err(SessionError::Version(self.version));
        }
        Engine::new(self).map(|_| ()).map_err(SessionError::from)
    }
}

impl From<EngineError> for SessionError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::MappingAt { index, error } => match error {
                MappingError::UnknownSignal(signal) => SessionError::UnknownSignal { index, signal },
                MappingError::Expression(error) => SessionError::Expression { index, error },
                error => SessionError::Mapping { index, error },
            },
            other => SessionError::Invalid(other.to_string()),
        }
    }
}

pub fn load_session(path: impl AsRef<Path>) -> Result<SessionConfig, SessionError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SessionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SessionConfig::from_json(&text)
}

pub fn save_session(config: &SessionConfig, path: impl AsRef<Path>) -> Result<(), SessionError> {
    let path = path.as_ref();
    let mut text = config.to_json();
    text.push('\n');
    std::fs::write(path, text).map_err(|source| SessionError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_session_loads() {
        let config = SessionConfig::from_json(r#"{"version": 1}"#).unwrap();
        assert!(config.mappings.is_empty());
        assert_eq!(config.stream, StreamConfig::default());
        assert_eq!(config.automatables.len(), 4);
    }

    #[test]
    fn mapping_session_loads() {
        let config = SessionConfig::from_json(
            r#"{"version": 1, "mappings": [
                {"sources": ["backend0/global/loudness"], "destination": "scene/particles.size", "expression": "y=0.5*x"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(config.mappings.len(), 1);
        assert!(config.mappings[0].enabled);
    }

    #[test]
    fn unknown_band_signal() {
        let err = SessionConfig::from_json(
            r#"{"version": 1,
                "subbands": {"n_bands": 1, "slots": [["loudness"]]},
                "mappings": [{"sources": ["backend0/band2/loudness"], "destination": "scene/fog.density", "expression": "y=x"}]}"#,
        )
        .unwrap_err();
        assert!(
            matches!(&err, SessionError::UnknownSignal { index: 0, signal } if signal == "backend0/band2/loudness"),
            "{err}"
        );
    }

    #[test]
    fn schema_errors_carry_pointer() {
        let err = SessionConfig::from_json(
            r#"{"version": 1, "mappings": [{"sources": ["a/b"], "destination": "scene/fog.density", "expression": 3}]}"#,
        )
        .unwrap_err();
        match err {
            SessionError::Schema { pointer, .. } => assert_eq!(pointer, "/mappings/0/expression"),
            other => panic!("{other}"),
        }
        let err = SessionConfig::from_json(
            r#"{"version": 1, "subbands": {"n_bands": 1, "slots": [["tempo"]]}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, SessionError::Schema { ref pointer, .. } if pointer == "/subbands/slots/0/0"), "{err}");
        let err = SessionConfig::from_json(r#"{"version": 1, "bogus": true}"#).unwrap_err();
        assert!(matches!(err, SessionError::Schema { .. }));
    }

    #[test]
    fn version_and_expression_errors() {
        assert!(matches!(
            SessionConfig::from_json(r#"{"version": 2}"#),
            Err(SessionError::Version(2))
        ));
        let err = SessionConfig::from_json(
            r#"{"version": 1, "mappings": [
                {"sources": ["auto/fader1"], "destination": "scene/fog.density", "expression": "y=x"},
                {"sources": ["auto/fader2"], "destination": "scene/light.hue", "expression": "y=0.5*"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, SessionError::Expression { index: 1, .. }), "{err}");
    }

    #[test]
    fn short_frames_raise_pitch_floor() {
        let mut config = SessionConfig::default();
        assert_eq!(config.override_stream(None, None, Some(256)), None);
        assert_eq!(config.override_stream(None, Some(1024), None), Some(50.0));
        assert!((config.analysis.pitch_fmin - 86.1328125).abs() < 1e-9);
        config.validate().unwrap();
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut config = SessionConfig::default();
        config.mappings.push(MappingRequest::new(
            &["backend0/global/loudness"],
            "scene/particles.size",
            "y = 0.5*x",
        ));
        save_session(&config, &path).unwrap();
        let loaded = load_session(&path).unwrap();
        assert_eq!(loaded, config);
        save_session(&loaded, &path).unwrap();
        assert_eq!(load_session(&path).unwrap(), loaded);
    }
}
