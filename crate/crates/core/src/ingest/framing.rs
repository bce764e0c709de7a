use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FramingError {
    #[error("input contains no samples")]
    EmptyInput,
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
}

pub const FRAME_SIZES: [usize; 4] = [512, 1024, 2048, 4096];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_frame_size")]
    pub frame_size: usize,
    #[serde(default = "default_hop_size")]
    pub hop_size: usize,
}

fn default_sample_rate() -> u32 {
    44100
}
fn default_frame_size() -> usize {
    2048
}
fn default_hop_size() -> usize {
    512
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            sample_rate: default_sample_rate(),
            frame_size: default_frame_size(),
            hop_size: default_hop_size(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), FramingError> {
        if !FRAME_SIZES.contains(&self.frame_size) {
            return Err(FramingError::InvalidConfig(format!(
                "frame_size {} not in {:?}",
                self.frame_size, FRAME_SIZES
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.frame_size {
            return Err(FramingError::InvalidConfig(format!(
                "hop_size {} must be in 1..={}",
                self.hop_size, self.frame_size
            )));
        }
        if self.sample_rate == 0 {
            return Err(FramingError::InvalidConfig("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Seconds between consecutive frames.
    pub fn hop_seconds(&self) -> f64 {
        self.hop_size as f64 / self.sample_rate as f64
    }

    pub fn frame_time(&self, frame_index: u64) -> f64 {
        frame_index as f64 * self.hop_size as f64 / self.sample_rate as f64
    }

    /// Number of frames `frame_stream` yields for `n` input samples.
    pub fn frame_count(&self, n: usize) -> usize {
        match n {
            0 => 0,
            n if n < self.frame_size => 1,
            n => (n - self.frame_size) / self.hop_size + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AudioFrame {
    pub samples: Vec<f64>,
    pub frame_index: u64,
    pub start_time: f64,
}

/// Cuts `samples` into frames at offsets 0, hop, 2·hop, …
///
/// Input shorter than one frame yields a single zero-padded frame.
pub fn frame_stream<'a>(
    samples: &'a [f64],
    config: &StreamConfig,
) -> Result<impl Iterator<Item = AudioFrame> + 'a, FramingError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(FramingError::EmptyInput);
    }
    let config = *config;
    let count = config.frame_count(samples.len());
    Ok((0..count).map(move |i| {
        let start = i * config.hop_size;
        let end = (start + config.frame_size).min(samples.len());
        let mut frame = Vec::with_capacity(config.frame_size);
        frame.extend(samples[start..end].iter().map(|s| s.clamp(-1.0, 1.0)));
        frame.resize(config.frame_size, 0.0);
        AudioFrame {
            samples: frame,
            frame_index: i as u64,
            start_time: config.frame_time(i as u64),
        }
    }))
}

/// Incremental framer for pushed sample blocks (live streams, FFI callers).
///
/// Pushing a whole signal and then calling [`Framer::finish`] yields exactly
/// the frames of [`frame_stream`].
#[derive(Debug, Clone)]
pub struct Framer {
    config: StreamConfig,
    pending: Vec<f64>,
    next_index: u64,
}

impl Framer {
    pub fn new(config: StreamConfig) -> Result<Self, FramingError> {
        config.validate()?;
        Ok(Framer {
            config,
            pending: Vec::with_capacity(config.frame_size * 2),
            next_index: 0,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn push(&mut self, samples: &[f64]) -> Vec<AudioFrame> {
        self.pending
            .extend(samples.iter().map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 }));
        let mut frames = Vec::new();
        while self.pending.len() >= self.config.frame_size {
            frames.push(self.emit(self.pending[..self.config.frame_size].to_vec()));
            self.pending.drain(..self.config.hop_size);
        }
        frames
    }

    /// Flushes a zero-padded frame if the input never filled one.
    pub fn finish(&mut self) -> Option<AudioFrame> {
        if self.next_index == 0 && !self.pending.is_empty() {
            let mut samples = std::mem::take(&mut self.pending);
            samples.resize(self.config.frame_size, 0.0);
            Some(self.emit(samples))
        } else {
            None
        }
    }

    fn emit(&mut self, samples: Vec<f64>) -> AudioFrame {
        let frame_index = self.next_index;
        self.next_index += 1;
        AudioFrame {
            samples,
            frame_index,
            start_time: self.config.frame_time(frame_index),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(frame: usize, hop: usize) -> StreamConfig {
        StreamConfig {
            sample_rate: 44100,
            frame_size: frame,
            hop_size: hop,
        }
    }

    #[test]
    fn frame_counts() {
        let one_second = vec![0.0; 44100];
        assert_eq!(frame_stream(&one_second, &cfg(1024, 512)).unwrap().count(), 85);
        assert_eq!(frame_stream(&vec![0.1; 1024], &cfg(1024, 512)).unwrap().count(), 1);
        let short: Vec<AudioFrame> = frame_stream(&vec![0.5; 1000], &cfg(1024, 512)).unwrap().collect();
        assert_eq!(short.len(), 1);
        assert_eq!(short[0].samples.len(), 1024);
        assert_eq!(short[0].samples[999], 0.5);
        assert!(short[0].samples[1000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_input_errors() {
        assert!(matches!(
            frame_stream(&[], &cfg(1024, 512)).map(|it| it.count()),
            Err(FramingError::EmptyInput)
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(1000, 500).validate().is_err());
        assert!(cfg(1024, 2048).validate().is_err());
        assert!(cfg(1024, 0).validate().is_err());
        assert!(StreamConfig::default().validate().is_ok());
    }

    #[test]
    fn start_times() {
        let frames: Vec<_> = frame_stream(&vec![0.0; 4096], &cfg(1024, 512)).unwrap().collect();
        assert_eq!(frames[2].frame_index, 2);
        assert!((frames[2].start_time - 1024.0 / 44100.0).abs() < 1e-15);
        assert!((cfg(2048, 512).hop_seconds() * 1000.0 - 11.61).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn hops_reconstruct_prefix(
            samples in proptest::collection::vec(-1.0f64..1.0, 512..6000),
            hop_pow in 6u32..10,
        ) {
            let config = cfg(512, 1 << hop_pow.min(9));
            let frames: Vec<_> = frame_stream(&samples, &config).unwrap().collect();
            let rebuilt: Vec<f64> = frames.iter().flat_map(|f| f.samples[..config.hop_size].to_vec()).collect();
            prop_assert_eq!(&rebuilt[..], &samples[..rebuilt.len()]);
            prop_assert_eq!(frames.len(), config.frame_count(samples.len()));
        }

        #[test]
        fn framer_matches_batch(
            samples in proptest::collection::vec(-1.0f64..1.0, 1..5000),
            chunk in 1usize..700,
        ) {
            let config = cfg(512, 128);
            let batch: Vec<_> = frame_stream(&samples, &config).unwrap().collect();
            let mut framer = Framer::new(config).unwrap();
            let mut streamed = Vec::new();
            for block in samples.chunks(chunk) {
                streamed.extend(framer.push(block));
            }
            streamed.extend(framer.finish());
            prop_assert_eq!(batch, streamed);
        }
    }
}
