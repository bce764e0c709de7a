//! Per-frame audio features: loudness, YIN pitch, spectral centroid, HFC
//! onsets and sensory dissonance.

mod dissonance;
mod onset;
mod peaks;
mod pitch;
mod spectrum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dissonance::{curve_maximum, pair_roughness, sensory_dissonance};
pub use onset::{OnsetDetector, OnsetOutput, OnsetParams};
pub use peaks::{pick_peaks, SpectralPeak, DEFAULT_MAX_PEAKS, DEFAULT_PEAK_THRESHOLD};
pub use pitch::{min_pitch_hz, PitchConfigError, PitchEstimate, Yin, YIN_THRESHOLD};
pub use spectrum::{hann, Spectrum, SpectrumAnalyzer};

/// Stevens power-law exponent applied to frame energy.
pub const LOUDNESS_EXPONENT: f64 = 0.67;

pub fn loudness(samples: &[f64]) -> f64 {
    let energy: f64 = samples.iter().map(|x| x * x).sum();
    energy.powf(LOUDNESS_EXPONENT)
}

/// Amplitude-weighted mean frequency; 0 for an all-zero spectrum.
pub fn spectral_centroid(spectrum: &Spectrum) -> f64 {
    let (weighted, total) = spectrum
        .magnitudes
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(w, t), (k, &m)| (w + k as f64 * m, t + m));
    if total > 0.0 {
        weighted / total * spectrum.bin_hz
    } else {
        0.0
    }
}

/// High-frequency content, Σ k·|X_k|².
pub fn hfc(spectrum: &Spectrum) -> f64 {
    spectrum
        .magnitudes
        .iter()
        .enumerate()
        .map(|(k, &m)| k as f64 * m * m)
        .sum()
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown feature `{0}`")]
pub struct UnknownFeatureName(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "String", into = "String")]
pub enum FeatureKind {
    Loudness,
    Pitch,
    Centroid,
    Onset,
    Dissonance,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Loudness,
        FeatureKind::Pitch,
        FeatureKind::Centroid,
        FeatureKind::Onset,
        FeatureKind::Dissonance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Loudness => "loudness",
            FeatureKind::Pitch => "pitch",
            FeatureKind::Centroid => "centroid",
            FeatureKind::Onset => "onset",
            FeatureKind::Dissonance => "dissonance",
        }
    }

    pub fn needs_spectrum(self) -> bool {
        matches!(
            self,
            FeatureKind::Centroid | FeatureKind::Onset | FeatureKind::Dissonance
        )
    }

    /// One-line plain-language description, shown in the console.
    pub fn description(self) -> &'static str {
        match self {
            FeatureKind::Loudness => "How loud the sound feels right now.",
            FeatureKind::Pitch => "The musical note being played, in Hz (0 when there is no clear note).",
            FeatureKind::Centroid => "Brightness: higher for sharp, bright sounds, lower for dull ones.",
            FeatureKind::Onset => "A pulse at the start of each new note or drum hit.",
            FeatureKind::Dissonance => "Tension or roughness between the tones that sound together.",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = UnknownFeatureName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownFeatureName(s.to_string()))
    }
}

impl TryFrom<String> for FeatureKind {
    type Error = UnknownFeatureName;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<FeatureKind> for String {
    fn from(kind: FeatureKind) -> String {
        kind.name().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub pitch_fmin: f64,
    pub pitch_fmax: f64,
    pub yin_threshold: f64,
    pub onset: OnsetParams,
    pub max_peaks: usize,
    pub peak_threshold: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            pitch_fmin: 50.0,
            pitch_fmax: 2000.0,
            yin_threshold: YIN_THRESHOLD,
            onset: OnsetParams::default(),
            max_peaks: DEFAULT_MAX_PEAKS,
            peak_threshold: DEFAULT_PEAK_THRESHOLD,
        }
    }
}

/// Feature values for one scope (global or one band). Features that were not
/// requested stay `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureValues {
    pub loudness: Option<f64>,
    pub pitch: Option<PitchEstimate>,
    pub centroid_hz: Option<f64>,
    pub onset: Option<OnsetOutput>,
    pub dissonance: Option<f64>,
}

/// Global features of one frame plus the per-band slot values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSnapshot {
    pub frame_index: u64,
    pub loudness: f64,
    pub pitch_hz: f64,
    pub pitch_confidence: f64,
    pub centroid_hz: f64,
    pub onset: bool,
    pub odf: f64,
    pub dissonance: f64,
    pub bands: Vec<FeatureValues>,
}

impl FeatureSnapshot {
    pub fn from_global(frame_index: u64, global: &FeatureValues, bands: Vec<FeatureValues>) -> Self {
        let pitch = global.pitch.unwrap_or(PitchEstimate::UNVOICED);
        let onset = global.onset.unwrap_or(OnsetOutput { odf: 0.0, onset: false });
        FeatureSnapshot {
            frame_index,
            loudness: global.loudness.unwrap_or(0.0),
            pitch_hz: pitch.pitch_hz,
            pitch_confidence: pitch.confidence,
            centroid_hz: global.centroid_hz.unwrap_or(0.0),
            onset: onset.onset,
            odf: onset.odf,
            dissonance: global.dissonance.unwrap_or(0.0),
            bands,
        }
    }
}

/// Stateful extractor for one analysis scope. Owns the FFT plan, the YIN
/// buffers and the onset history for that scope.
#[derive(Debug)]
pub struct FeatureExtractor {
    params: AnalysisParams,
    analyzer: SpectrumAnalyzer,
    yin: Yin,
    onset: OnsetDetector,
    spectrum: Spectrum,
}

impl FeatureExtractor {
    pub fn new(
        sample_rate: f64,
        frame_size: usize,
        hop_size: usize,
        params: AnalysisParams,
    ) -> Result<Self, PitchConfigError> {
        let yin = Yin::new(sample_rate, frame_size, params.pitch_fmin, params.pitch_fmax)?
            .with_threshold(params.yin_threshold);
        Ok(FeatureExtractor {
            params,
            analyzer: SpectrumAnalyzer::new(frame_size, sample_rate),
            yin,
            onset: OnsetDetector::new(params.onset, hop_size as f64 / sample_rate),
            spectrum: Spectrum::zeros(frame_size, sample_rate),
        })
    }

    pub fn params(&self) -> &AnalysisParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.onset.reset();
    }

    /// Computes the requested features. The onset detector only advances when
    /// onset is requested, so it must be requested on every frame to track.
    pub fn compute(&mut self, samples: &[f64], kinds: &[FeatureKind]) -> FeatureValues {
        let mut out = FeatureValues::default();
        if kinds.iter().any(|k| k.needs_spectrum()) {
            self.analyzer.analyze_into(samples, &mut self.spectrum);
        }
        for &kind in kinds {
            match kind {
                FeatureKind::Loudness => out.loudness = Some(loudness(samples)),
                FeatureKind::Pitch => out.pitch = Some(self.yin.estimate(samples)),
                FeatureKind::Centroid => out.centroid_hz = Some(spectral_centroid(&self.spectrum)),
                FeatureKind::Onset => out.onset = Some(self.onset.process(hfc(&self.spectrum))),
                FeatureKind::Dissonance => {
                    let peaks = pick_peaks(
                        &self.spectrum,
                        self.params.max_peaks,
                        self.params.peak_threshold,
                    );
                    out.dissonance = Some(sensory_dissonance(&peaks));
                }
            }
        }
        out
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }
}
