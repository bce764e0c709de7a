//! Up-to-three-band split with second-order Butterworth sections, and the
//! per-band feature slots.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureExtractor, FeatureKind, FeatureValues, UnknownFeatureName};
use crate::ingest::AudioFrame;

#[derive(Debug, Error, PartialEq)]
pub enum SubBandError {
    #[error("cutoff {fc} Hz must lie strictly between 0 and {nyquist} Hz")]
    InvalidCutoff { fc: f64, nyquist: f64 },
    #[error("invalid sub-band config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    UnknownFeatureName(#[from] UnknownFeatureName),
}

pub const BUTTERWORTH_Q: f64 = FRAC_1_SQRT_2;
pub const MAX_BANDS: usize = 3;

/// Normalized biquad coefficients (a0 = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    fn check_cutoff(fc: f64, fs: f64) -> Result<(), SubBandError> {
        if fc > 0.0 && fc < fs / 2.0 && fc.is_finite() {
            Ok(())
        } else {
            Err(SubBandError::InvalidCutoff { fc, nyquist: fs / 2.0 })
        }
    }

    /// Bilinear-transform Butterworth low-pass (audio EQ cookbook form).
    pub fn lowpass(fc: f64, fs: f64) -> Result<Self, SubBandError> {
        Self::check_cutoff(fc, fs)?;
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * BUTTERWORTH_Q);
        let a0 = 1.0 + alpha;
        Ok(BiquadCoeffs {
            b0: (1.0 - cos) / 2.0 / a0,
            b1: (1.0 - cos) / a0,
            b2: (1.0 - cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        })
    }

    pub fn highpass(fc: f64, fs: f64) -> Result<Self, SubBandError> {
        Self::check_cutoff(fc, fs)?;
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * BUTTERWORTH_Q);
        let a0 = 1.0 + alpha;
        Ok(BiquadCoeffs {
            b0: (1.0 + cos) / 2.0 / a0,
            b1: -(1.0 + cos) / a0,
            b2: (1.0 + cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        })
    }

    /// Complex response H(e^{jω}) at `freq`.
    pub fn response(&self, freq: f64, fs: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -2.0 * PI * freq / fs);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        self.response(freq, fs).norm()
    }

    /// Roots of z² + a1·z + a2.
    pub fn poles(&self) -> [Complex<f64>; 2] {
        let disc = Complex::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let minus_b = Complex::new(-self.a1, 0.0);
        [(minus_b + disc) / 2.0, (minus_b - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Transposed direct form II section with persistent state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub coeffs: BiquadCoeffs,
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(coeffs: BiquadCoeffs) -> Self {
        Biquad { coeffs, s1: 0.0, s2: 0.0 }
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }

    #[inline]
    pub fn process_sample(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        let y = c.b0 * x + self.s1;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
        self.s2 = c.b2 * x - c.a2 * y;
        y
    }

    pub fn process(&mut self, samples: &mut [f64]) {
        for s in samples {
            *s = self.process_sample(*s);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubBandConfig {
    pub n_bands: usize,
    #[serde(default = "default_lo")]
    pub crossover_lo: f64,
    #[serde(default = "default_hi")]
    pub crossover_hi: f64,
    /// Feature slots for band1..band{n_bands}.
    pub slots: Vec<Vec<FeatureKind>>,
}

fn default_lo() -> f64 {
    200.0
}
fn default_hi() -> f64 {
    2000.0
}

impl Default for SubBandConfig {
    fn default() -> Self {
        SubBandConfig {
            n_bands: 3,
            crossover_lo: default_lo(),
            crossover_hi: default_hi(),
            slots: vec![
                vec![FeatureKind::Loudness, FeatureKind::Onset],
                vec![FeatureKind::Loudness, FeatureKind::Centroid],
                vec![FeatureKind::Loudness, FeatureKind::Onset],
            ],
        }
    }
}

impl SubBandConfig {
    /// Builds a config from slot names, rejecting unknown features.
    pub fn from_slot_names<S: AsRef<str>>(
        crossover_lo: f64,
        crossover_hi: f64,
        slots: &[Vec<S>],
    ) -> Result<Self, SubBandError> {
        let slots = slots
            .iter()
            .map(|band| band.iter().map(|s| s.as_ref().parse()).collect())
            .collect::<Result<Vec<Vec<FeatureKind>>, _>>()?;
        Ok(SubBandConfig {
            n_bands: slots.len(),
            crossover_lo,
            crossover_hi,
            slots,
        })
    }

    pub fn validate(&self, sample_rate: f64) -> Result<(), SubBandError> {
        let invalid = |msg: String| Err(SubBandError::InvalidConfig(msg));
        if !(1..=MAX_BANDS).contains(&self.n_bands) {
            return invalid(format!("n_bands {} not in 1..=3", self.n_bands));
        }
        if self.slots.len() != self.n_bands {
            return invalid(format!(
                "{} slot lists for {} bands",
                self.slots.len(),
                self.n_bands
            ));
        }
        for (i, band) in self.slots.iter().enumerate() {
            if band.is_empty() {
                return invalid(format!("band{} has no feature slots", i + 1));
            }
            let mut seen = band.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != band.len() {
                return invalid(format!("band{} lists a feature twice", i + 1));
            }
        }
        let ceiling = sample_rate / 2.0 * 0.95;
        let in_range = |f: f64| (20.0..=ceiling).contains(&f);
        match self.n_bands {
            3 if !(in_range(self.crossover_lo)
                && in_range(self.crossover_hi)
                && self.crossover_lo < self.crossover_hi) =>
            {
                invalid(format!(
                    "crossovers must satisfy 20 <= lo < hi <= {ceiling}, got {} and {}",
                    self.crossover_lo, self.crossover_hi
                ))
            }
            2 if !in_range(self.crossover_lo) => invalid(format!(
                "crossover_lo must lie in [20, {ceiling}], got {}",
                self.crossover_lo
            )),
            _ => Ok(()),
        }
    }

    /// (band number starting at 1, feature) for every slot.
    pub fn slot_list(&self) -> impl Iterator<Item = (usize, FeatureKind)> + '_ {
        self.slots
            .iter()
            .take(self.n_bands)
            .enumerate()
            .flat_map(|(i, band)| band.iter().map(move |&k| (i + 1, k)))
    }
}

#[derive(Debug, Clone)]
enum BandFilter {
    PassThrough,
    Single(Biquad),
    Cascade(Biquad, Biquad),
}

impl BandFilter {
    fn process(&mut self, samples: &mut [f64]) {
        match self {
            BandFilter::PassThrough => {}
            BandFilter::Single(f) => f.process(samples),
            BandFilter::Cascade(a, b) => {
                a.process(samples);
                b.process(samples);
            }
        }
    }
}

/// Streaming splitter. Each band keeps the last `frame_size` filtered
/// samples; only the samples new to each frame run through the filters, so
/// the band frames equal framing the one-pass filtered signal.
#[derive(Debug, Clone)]
pub struct BandSplitter {
    config: SubBandConfig,
    sample_rate: f64,
    frame_size: usize,
    hop_size: usize,
    filters: Vec<BandFilter>,
    history: Vec<Vec<f64>>,
    last_frame: Option<u64>,
}

impl BandSplitter {
    pub fn new(
        config: SubBandConfig,
        sample_rate: f64,
        frame_size: usize,
        hop_size: usize,
    ) -> Result<Self, SubBandError> {
        config.validate(sample_rate)?;
        let filters = Self::design(&config, sample_rate)?;
        Ok(BandSplitter {
            history: vec![vec![0.0; frame_size]; config.n_bands],
            config,
            sample_rate,
            frame_size,
            hop_size,
            filters,
            last_frame: None,
        })
    }

    fn design(config: &SubBandConfig, fs: f64) -> Result<Vec<BandFilter>, SubBandError> {
        let lp = |fc| BiquadCoeffs::lowpass(fc, fs).map(Biquad::new);
        let hp = |fc| BiquadCoeffs::highpass(fc, fs).map(Biquad::new);
        Ok(match config.n_bands {
            1 => vec![BandFilter::PassThrough],
            2 => vec![
                BandFilter::Single(lp(config.crossover_lo)?),
                BandFilter::Single(hp(config.crossover_lo)?),
            ],
            _ => vec![
                BandFilter::Single(lp(config.crossover_lo)?),
                BandFilter::Cascade(hp(config.crossover_lo)?, lp(config.crossover_hi)?),
                BandFilter::Single(hp(config.crossover_hi)?),
            ],
        })
    }

    pub fn config(&self) -> &SubBandConfig {
        &self.config
    }

    /// Moves the crossovers; the redesigned filters start from zero state.
    pub fn set_crossovers(&mut self, lo: f64, hi: f64) -> Result<(), SubBandError> {
        let mut config = self.config.clone();
        config.crossover_lo = lo;
        config.crossover_hi = hi;
        config.validate(self.sample_rate)?;
        self.filters = Self::design(&config, self.sample_rate)?;
        self.config = config;
        Ok(())
    }

    /// Returns one frame per band (band1 first).
    pub fn split(&mut self, frame: &AudioFrame) -> &[Vec<f64>] {
        assert_eq!(frame.samples.len(), self.frame_size, "frame length mismatch");
        let fresh = match self.last_frame {
            Some(last) if frame.frame_index > last => {
                ((frame.frame_index - last) as usize).saturating_mul(self.hop_size)
            }
            _ => self.frame_size,
        }
        .min(self.frame_size);
        self.last_frame = Some(frame.frame_index);

        let new_samples = &frame.samples[self.frame_size - fresh..];
        for (filter, history) in self.filters.iter_mut().zip(self.history.iter_mut()) {
            history.copy_within(fresh.., 0);
            let tail = &mut history[self.frame_size - fresh..];
            tail.copy_from_slice(new_samples);
            filter.process(tail);
        }
        &self.history
    }
}

/// Runs each band's slots on its band frame. `extractors[i]` serves band i+1.
pub fn run_slots(
    band_frames: &[Vec<f64>],
    config: &SubBandConfig,
    extractors: &mut [FeatureExtractor],
) -> Vec<FeatureValues> {
    band_frames
        .iter()
        .zip(extractors.iter_mut())
        .zip(&config.slots)
        .map(|((samples, extractor), slots)| extractor.compute(samples, slots))
        .collect()
}
