//! YIN fundamental-frequency estimation.
//!
//! The difference function is computed over an integration window of half the
//! frame, using an FFT cross-correlation for the product term and prefix sums
//! for the energy terms, so each frame costs O(N log N) rather than O(N²).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const YIN_THRESHOLD: f64 = 0.15;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PitchConfigError {
    #[error("fmin {fmin} Hz is below the floor of {floor} Hz for this frame size")]
    FminTooLow { fmin: f64, floor: f64 },
    #[error("fmax {fmax} Hz exceeds a quarter of the sample rate ({ceiling} Hz)")]
    FmaxTooHigh { fmax: f64, ceiling: f64 },
    #[error("fmin {fmin} must be below fmax {fmax}")]
    EmptyRange { fmin: f64, fmax: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchEstimate {
    /// 0 when unvoiced.
    pub pitch_hz: f64,
    /// 1 − CMNDF at the chosen lag; 0 when unvoiced.
    pub confidence: f64,
}

impl PitchEstimate {
    pub const UNVOICED: PitchEstimate = PitchEstimate {
        pitch_hz: 0.0,
        confidence: 0.0,
    };

    pub fn is_voiced(&self) -> bool {
        self.pitch_hz > 0.0
    }
}

/// Lowest detectable pitch: two periods must fit in one frame.
pub fn min_pitch_hz(sample_rate: f64, frame_size: usize) -> f64 {
    2.0 * sample_rate / frame_size as f64
}

pub struct Yin {
    sample_rate: f64,
    frame_size: usize,
    window: usize,
    fmin: f64,
    fmax: f64,
    threshold: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    head: Vec<Complex<f64>>,
    full: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    prefix: Vec<f64>,
    cmndf: Vec<f64>,
}

impl std::fmt::Debug for Yin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Yin")
            .field("sample_rate", &self.sample_rate)
            .field("frame_size", &self.frame_size)
            .field("fmin", &self.fmin)
            .field("fmax", &self.fmax)
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Yin {
    pub fn new(
        sample_rate: f64,
        frame_size: usize,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self, PitchConfigError> {
        let floor = min_pitch_hz(sample_rate, frame_size);
        let ceiling = sample_rate / 4.0;
        if !(fmin >= floor) {
            return Err(PitchConfigError::FminTooLow { fmin, floor });
        }
        if !(fmax <= ceiling) {
            return Err(PitchConfigError::FmaxTooHigh { fmax, ceiling });
        }
        if !(fmin < fmax) {
            return Err(PitchConfigError::EmptyRange { fmin, fmax });
        }
        let window = frame_size / 2;
        let fft_len = (frame_size + window).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Yin {
            sample_rate,
            frame_size,
            window,
            fmin,
            fmax,
            threshold: YIN_THRESHOLD,
            forward,
            inverse,
            head: vec![Complex::default(); fft_len],
            full: vec![Complex::default(); fft_len],
            scratch: vec![Complex::default(); scratch_len],
            prefix: vec![0.0; frame_size + 1],
            cmndf: vec![0.0; window],
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    fn max_lag(&self) -> usize {
        ((self.sample_rate / self.fmin).ceil() as usize).min(self.window - 2)
    }

    fn min_lag(&self) -> usize {
        ((self.sample_rate / self.fmax).floor() as usize).max(2)
    }

    /// Fills `self.cmndf[0..=max_lag]` for the frame.
    fn cumulative_mean_normalized_difference(&mut self, samples: &[f64]) {
        let w = self.window;
        let max_lag = self.max_lag();
        let n = self.full.len();

        for (i, slot) in self.full.iter_mut().enumerate() {
            *slot = Complex::new(samples.get(i).copied().unwrap_or(0.0), 0.0);
        }
        for (i, slot) in self.head.iter_mut().enumerate() {
            *slot = Complex::new(if i < w { samples[i] } else { 0.0 }, 0.0);
        }
        self.forward.process_with_scratch(&mut self.full, &mut self.scratch);
        self.forward.process_with_scratch(&mut self.head, &mut self.scratch);
        for (f, h) in self.full.iter_mut().zip(&self.head) {
            *f *= h.conj();
        }
        self.inverse.process_with_scratch(&mut self.full, &mut self.scratch);
        // full[tau].re / n == sum_{j<w} x[j]·x[j+tau]

        self.prefix[0] = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            self.prefix[i + 1] = self.prefix[i] + x * x;
        }
        let energy = |from: usize| self.prefix[from + w] - self.prefix[from];
        let head_energy = energy(0);

        self.cmndf[0] = 1.0;
        let mut running = 0.0;
        for tau in 1..=max_lag {
            let cross = self.full[tau].re / n as f64;
            let diff = (head_energy + energy(tau) - 2.0 * cross).max(0.0);
            running += diff;
            self.cmndf[tau] = if running > 0.0 {
                diff * tau as f64 / running
            } else {
                1.0
            };
        }
    }

    pub fn estimate(&mut self, samples: &[f64]) -> PitchEstimate {
        assert_eq!(samples.len(), self.frame_size, "frame length mismatch");
        self.cumulative_mean_normalized_difference(samples);
        let (lo, hi) = (self.min_lag(), self.max_lag());

        let Some(mut lag) = (lo..=hi).find(|&t| self.cmndf[t] < self.threshold) else {
            return PitchEstimate::UNVOICED;
        };
        while lag < hi && self.cmndf[lag + 1] < self.cmndf[lag] {
            lag += 1;
        }
        let d = &self.cmndf;
        let refined = if lag > 1 && lag < hi {
            let (a, b, c) = (d[lag - 1], d[lag], d[lag + 1]);
            let denom = a - 2.0 * b + c;
            if denom > 0.0 {
                lag as f64 + (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
            } else {
                lag as f64
            }
        } else {
            lag as f64
        };
        let pitch_hz = (self.sample_rate / refined).min(self.fmax);
        if !pitch_hz.is_finite() {
            return PitchEstimate::UNVOICED;
        }
        PitchEstimate {
            pitch_hz,
            confidence: (1.0 - d[lag]).clamp(0.0, 1.0),
        }
    }

    /// Exposes the CMNDF of the last estimate, for diagnostics and tests.
    pub fn last_cmndf(&self) -> &[f64] {
        &self.cmndf[..=self.max_lag()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FS: f64 = 44100.0;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.8 * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    fn square(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = (freq * i as f64 / FS).fract();
                if phase < 0.5 { 0.5 } else { -0.5 }
            })
            .collect()
    }

    /// Textbook O(N²) difference function, independent of the FFT route.
    fn brute_cmndf(x: &[f64], w: usize, max_lag: usize) -> Vec<f64> {
        let mut out = vec![1.0; max_lag + 1];
        let mut running = 0.0;
        for tau in 1..=max_lag {
            let d: f64 = (0..w).map(|j| (x[j] - x[j + tau]).powi(2)).sum();
            running += d;
            out[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
        }
        out
    }

    #[test]
    fn fft_route_matches_direct_difference() {
        let x: Vec<f64> = sine(313.0, 2048)
            .iter()
            .zip(square(97.0, 2048))
            .map(|(a, b)| a * 0.6 + b * 0.3)
            .collect();
        let mut yin = Yin::new(FS, 2048, 50.0, 2000.0).unwrap();
        yin.estimate(&x);
        let fast = yin.last_cmndf().to_vec();
        let slow = brute_cmndf(&x, 1024, fast.len() - 1);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn sine_440() {
        let mut yin = Yin::new(FS, 2048, 50.0, 2000.0).unwrap();
        let est = yin.estimate(&sine(440.0, 2048));
        assert!((est.pitch_hz - 440.0).abs() < 0.5, "{est:?}");
        assert!(est.confidence > 0.9);
    }

    #[test]
    fn square_220_is_not_an_octave_off() {
        let mut yin = Yin::new(FS, 2048, 50.0, 2000.0).unwrap();
        let est = yin.estimate(&square(220.0, 2048));
        assert!((est.pitch_hz - 220.0).abs() < 1.0, "{est:?}");
    }

    #[test]
    fn silence_is_unvoiced() {
        let mut yin = Yin::new(FS, 2048, 50.0, 2000.0).unwrap();
        assert_eq!(yin.estimate(&[0.0; 2048]), PitchEstimate::UNVOICED);
    }

    #[test]
    fn range_preconditions() {
        assert!(matches!(
            Yin::new(FS, 2048, 20.0, 2000.0),
            Err(PitchConfigError::FminTooLow { .. })
        ));
        assert!(matches!(
            Yin::new(FS, 2048, 50.0, 20000.0),
            Err(PitchConfigError::FmaxTooHigh { .. })
        ));
        assert!(Yin::new(FS, 1024, 87.0, 11025.0).is_ok());
    }

    #[test]
    fn harmonic_tones_within_one_percent() {
        // Sawtooth-like tones with 5 harmonics over 80..800 Hz.
        let mut yin = Yin::new(FS, 2048, 50.0, 2000.0).unwrap();
        let mut voiced = 0;
        let mut hits = 0;
        let mut f0 = 80.0;
        while f0 <= 800.0 {
            let x: Vec<f64> = (0..2048)
                .map(|i| {
                    (1..=5)
                        .map(|h| 0.5 / h as f64 * (2.0 * PI * f0 * h as f64 * i as f64 / FS).sin())
                        .sum()
                })
                .collect();
            let est = yin.estimate(&x);
            if est.is_voiced() {
                voiced += 1;
                if ((est.pitch_hz - f0) / f0).abs() < 0.01 {
                    hits += 1;
                }
            }
            f0 *= 1.05;
        }
        assert!(voiced > 0);
        assert!(hits as f64 >= 0.95 * voiced as f64, "{hits}/{voiced}");
    }
}
