//! Regenerates `testdata/`: a 10 s test signal, a session using it, and the
//! golden CSV rendered from both.
//!
//!     cargo run -p sonomap --example make_testdata

use std::f64::consts::PI;
use std::path::Path;

use sonomap::engine::Engine;
use sonomap::ingest::{decode_wav, encode_wav, WavEncoding};
use sonomap::mapping::MappingRequest;
use sonomap::render::render_csv;
use sonomap::session::{save_session, SessionConfig};

const SAMPLE_RATE: u32 = 44100;
const SECONDS: usize = 10;

/// Deterministic noise from a 64-bit LCG.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

/// Melody of harmonic tones, a bass line, clicks at 4 per second and noise.
fn signal() -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let melody = [220.0, 277.18, 329.63, 440.0, 392.0, 329.63, 293.66, 246.94];
    let bass = [55.0, 73.42, 82.41, 61.74];
    let mut rng = Lcg(0x5eed);
    let mut out = vec![0.0; SAMPLE_RATE as usize * SECONDS];
    for (i, x) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let note = melody[(t * 2.0) as usize % melody.len()];
        let env = (-(t * 2.0).fract() * 3.0).exp();
        let tone: f64 = (1..=4)
            .map(|h| (2.0 * PI * note * h as f64 * t).sin() / h as f64)
            .sum();
        let low = bass[(t / 2.5) as usize % bass.len()];
        *x = 0.25 * env * tone + 0.2 * (2.0 * PI * low * t).sin() + 0.003 * rng.next();
    }
    let burst = (0.01 * fs) as usize;
    for k in 0..SECONDS * 4 {
        let start = (k as f64 * 0.25 * fs) as usize + (0.125 * fs) as usize;
        for j in 0..burst {
            if let Some(x) = out.get_mut(start + j) {
                *x += 0.5 * rng.next() * (-(j as f64) / (0.002 * fs)).exp();
            }
        }
    }
    out
}

fn session() -> SessionConfig {
    let mut config = SessionConfig::default();
    let mut smooth = MappingRequest::new(&["backend0/band1/loudness"], "scene/camera.fov", "y = 0.02*x");
    smooth.smoothing_ms = 120.0;
    config.mappings = vec![
        MappingRequest::new(&["backend0/global/loudness"], "scene/particles.size", "y = 0.01*x"),
        MappingRequest::new(&["backend0/global/pitch"], "scene/light.hue", "y = x/2000"),
        MappingRequest::new(
            &["backend0/global/centroid"],
            "scene/particles.hue",
            "y = clamp(x/4000, 0, 1)",
        ),
        MappingRequest::new(&["backend0/global/onset"], "scene/stars.brightness", "y = 0.3 + 0.7*x"),
        MappingRequest::new(
            &["backend0/band3/loudness", "auto/fader1"],
            "scene/fog.density",
            "y = x1 + 0.05*x0",
        ),
        smooth,
    ];
    config.automatables[0].value = 0.25;
    config
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    std::fs::create_dir_all(&dir).unwrap();
    let wav = encode_wav(&signal(), SAMPLE_RATE, 1, WavEncoding::Pcm16);
    std::fs::write(dir.join("mix.wav"), &wav).unwrap();
    let config = session();
    save_session(&config, dir.join("session.json")).unwrap();

    let audio = decode_wav(&wav).unwrap();
    let mut engine = Engine::new(&config).unwrap();
    let mut csv = Vec::new();
    let rows = render_csv(&mut engine, &audio.samples, &mut csv).unwrap();
    std::fs::write(dir.join("mix.golden.csv"), csv).unwrap();
    println!("wrote {} ({rows} frames)", dir.display());
}
