use super::spectrum::Spectrum;

pub const DEFAULT_MAX_PEAKS: usize = 20;
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPeak {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Local maxima above `threshold · max|X|`, refined by fitting a parabola to
/// the log magnitudes of the peak bin and its neighbours. Returns the
/// `max_peaks` strongest, sorted by frequency.
pub fn pick_peaks(spectrum: &Spectrum, max_peaks: usize, threshold: f64) -> Vec<SpectralPeak> {
    let mags = &spectrum.magnitudes;
    let peak_max = mags.iter().copied().fold(0.0, f64::max);
    if mags.len() < 3 || peak_max <= 0.0 || max_peaks == 0 {
        return Vec::new();
    }
    let floor = threshold * peak_max;
    let nyquist = spectrum.nyquist();
    let ln = |m: f64| m.max(f64::MIN_POSITIVE).ln();

    let mut peaks: Vec<SpectralPeak> = (1..mags.len() - 1)
        .filter(|&k| mags[k] > floor && mags[k] > mags[k - 1] && mags[k] >= mags[k + 1])
        .filter_map(|k| {
            let (a, b, c) = (ln(mags[k - 1]), ln(mags[k]), ln(mags[k + 1]));
            let denom = a - 2.0 * b + c;
            let offset = if denom < 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let frequency = (k as f64 + offset) * spectrum.bin_hz;
            let amplitude = (b - 0.25 * (a - c) * offset).exp();
            (frequency > 0.0 && frequency < nyquist && amplitude > 0.0).then_some(SpectralPeak {
                frequency,
                amplitude,
            })
        })
        .collect();

    peaks.sort_by(|x, y| y.amplitude.total_cmp(&x.amplitude));
    peaks.truncate(max_peaks);
    peaks.sort_by(|x, y| x.frequency.total_cmp(&y.frequency));
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::spectrum::SpectrumAnalyzer;
    use std::f64::consts::PI;

    const FS: f64 = 44100.0;

    fn tone(freqs: &[f64], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                freqs
                    .iter()
                    .map(|f| 0.4 * (2.0 * PI * f * i as f64 / FS).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn zero_spectrum_has_no_peaks() {
        assert!(pick_peaks(&Spectrum::zeros(2048, FS), 20, 0.005).is_empty());
    }

    #[test]
    fn two_sines_two_peaks() {
        let mut an = SpectrumAnalyzer::new(2048, FS);
        let bin = FS / 2048.0;
        let (f1, f2) = ((1000.0 / bin).round() * bin, (3000.0 / bin).round() * bin);
        let peaks = pick_peaks(&an.analyze(&tone(&[f1, f2], 2048)), 20, 0.005);
        let strong: Vec<_> = peaks.iter().filter(|p| p.amplitude > 10.0).collect();
        assert_eq!(strong.len(), 2, "{peaks:?}");
        assert!((strong[0].frequency - 1000.0).abs() <= bin);
        assert!((strong[1].frequency - 3000.0).abs() <= bin);
    }

    #[test]
    fn off_bin_sine_is_interpolated() {
        let mut an = SpectrumAnalyzer::new(2048, FS);
        let peaks = pick_peaks(&an.analyze(&tone(&[442.0], 2048)), 20, 0.005);
        let top = peaks
            .iter()
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .unwrap();
        assert!((top.frequency - 442.0).abs() < 2.0, "{top:?}");
        // The raw bin would be off by almost half a bin.
        let raw = (442.0 / (FS / 2048.0)).round() * FS / 2048.0;
        assert!((raw - 442.0).abs() > 5.0);
    }

    #[test]
    fn respects_max_peaks_and_order() {
        let mut an = SpectrumAnalyzer::new(2048, FS);
        let spec = an.analyze(&tone(&[300.0, 900.0, 1700.0, 4000.0], 2048));
        let peaks = pick_peaks(&spec, 2, 0.005);
        assert_eq!(peaks.len(), 2);
        assert!(peaks[0].frequency < peaks[1].frequency);
    }
}
