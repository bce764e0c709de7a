//! High-frequency-content onset detection with adaptive median thresholding.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnsetParams {
    /// Fixed threshold offset on the normalized detection function.
    pub delta: f64,
    /// Weight of the moving median in the threshold.
    pub lambda: f64,
    pub median_window: usize,
    pub refractory_ms: f64,
}

impl Default for OnsetParams {
    fn default() -> Self {
        OnsetParams {
            delta: 0.01,
            lambda: 1.5,
            median_window: 21,
            refractory_ms: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnsetOutput {
    /// Normalized detection function value in [0, 1].
    pub odf: f64,
    pub onset: bool,
}

/// Streaming detector fed one HFC value per frame.
///
/// The detection function is the positive HFC rise, divided by the largest
/// HFC seen so far. No onset is reported until the median window is full.
#[derive(Clone, Debug)]
pub struct OnsetDetector {
    params: OnsetParams,
    hop_seconds: f64,
    previous: Option<f64>,
    running_max: f64,
    history: VecDeque<f64>,
    frame: u64,
    last_onset: Option<u64>,
    sorted: Vec<f64>,
}

impl OnsetDetector {
    pub fn new(params: OnsetParams, hop_seconds: f64) -> Self {
        OnsetDetector {
            params,
            hop_seconds,
            previous: None,
            running_max: 0.0,
            history: VecDeque::with_capacity(params.median_window.max(1)),
            frame: 0,
            last_onset: None,
            sorted: Vec::with_capacity(params.median_window.max(1)),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.params, self.hop_seconds);
    }

    pub fn process(&mut self, hfc: f64) -> OnsetOutput {
        let frame = self.frame;
        self.frame += 1;
        let hfc = if hfc.is_finite() && hfc > 0.0 { hfc } else { 0.0 };
        self.running_max = self.running_max.max(hfc);

        let odf = match self.previous.replace(hfc) {
            Some(prev) if self.running_max > 0.0 => (hfc - prev).max(0.0) / self.running_max,
            _ => 0.0,
        };

        let window = self.params.median_window.max(1);
        if self.history.len() == window {
            self.history.pop_front();
        }
        self.history.push_back(odf);
        if self.history.len() < window {
            return OnsetOutput { odf, onset: false };
        }

        self.sorted.clear();
        self.sorted.extend(self.history.iter().copied());
        self.sorted.sort_by(f64::total_cmp);
        let median = self.sorted[self.sorted.len() / 2];
        let threshold = self.params.delta + self.params.lambda * median;

        let refractory = self.last_onset.is_some_and(|last| {
            (frame - last) as f64 * self.hop_seconds < self.params.refractory_ms / 1000.0
        });
        let onset = odf > threshold && !refractory;
        if onset {
            self.last_onset = Some(frame);
        }
        OnsetOutput { odf, onset }
    }
}
