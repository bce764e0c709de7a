//! Sensory dissonance from pairwise spectral-peak roughness (Plomp–Levelt
//! curve in Sethares' parameterization).

use super::peaks::SpectralPeak;

const SCALE_NUM: f64 = 0.24;
const SCALE_SLOPE: f64 = 0.021;
const SCALE_OFFSET: f64 = 19.0;
const DECAY_SLOW: f64 = 3.5;
const DECAY_FAST: f64 = 5.75;

/// Maximum of e^(−3.5x) − e^(−5.75x), at x* = ln(5.75/3.5)/(5.75 − 3.5).
pub fn curve_maximum() -> f64 {
    let x = (DECAY_FAST / DECAY_SLOW).ln() / (DECAY_FAST - DECAY_SLOW);
    (-DECAY_SLOW * x).exp() - (-DECAY_FAST * x).exp()
}

/// Roughness of two unit partials, normalized so the curve peaks at 1.
pub fn pair_roughness(f_low: f64, f_high: f64) -> f64 {
    let s = SCALE_NUM / (SCALE_SLOPE * f_low + SCALE_OFFSET);
    let df = (f_high - f_low).abs();
    ((-DECAY_SLOW * s * df).exp() - (-DECAY_FAST * s * df).exp()) / curve_maximum()
}

/// Amplitude-weighted mean pair roughness in [0, 1]; peaks must be sorted by
/// frequency.
pub fn sensory_dissonance(peaks: &[SpectralPeak]) -> f64 {
    if peaks.len() < 2 {
        return 0.0;
    }
    let mut weighted = 0.0;
    let mut weights = 0.0;
    for (i, lo) in peaks.iter().enumerate() {
        for hi in &peaks[i + 1..] {
            let w = lo.amplitude * hi.amplitude;
            weighted += w * pair_roughness(lo.frequency, hi.frequency);
            weights += w;
        }
    }
    if weights > 0.0 {
        (weighted / weights).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
