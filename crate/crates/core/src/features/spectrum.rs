use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Magnitude spectrum of one Hann-windowed frame, bins 0..=N/2.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub bin_hz: f64,
}

impl Spectrum {
    pub fn zeros(frame_size: usize, sample_rate: f64) -> Self {
        Spectrum {
            magnitudes: vec![0.0; frame_size / 2 + 1],
            bin_hz: sample_rate / frame_size as f64,
        }
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    pub fn nyquist(&self) -> f64 {
        (self.magnitudes.len() - 1) as f64 * self.bin_hz
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Reusable windowed FFT for a fixed frame size.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    sample_rate: f64,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("frame_size", &self.window.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(frame_size: usize, sample_rate: f64) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        SpectrumAnalyzer {
            fft,
            window: hann(frame_size),
            buffer: vec![Complex::default(); frame_size],
            scratch,
            sample_rate,
        }
    }

    pub fn frame_size(&self) -> usize {
        self.window.len()
    }

    pub fn analyze(&mut self, samples: &[f64]) -> Spectrum {
        let mut spectrum = Spectrum::zeros(self.window.len(), self.sample_rate);
        self.analyze_into(samples, &mut spectrum);
        spectrum
    }

    pub fn analyze_into(&mut self, samples: &[f64], out: &mut Spectrum) {
        assert_eq!(samples.len(), self.window.len(), "frame length mismatch");
        for ((slot, &x), &w) in self.buffer.iter_mut().zip(samples).zip(&self.window) {
            *slot = Complex::new(x * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        let bins = self.window.len() / 2 + 1;
        out.magnitudes.clear();
        out.magnitudes
            .extend(self.buffer[..bins].iter().map(|c| c.norm()));
        out.bin_hz = self.sample_rate / self.window.len() as f64;
    }
}
