//! Headless rendering of a whole input to CSV.

use std::io::{self, Write};

use crate::engine::Engine;
use crate::ingest::frame_stream;
use crate::model::Catalog;

/// Formats like C's `%.6g`.
pub fn format_g6(value: f64) -> String {
    const PRECISION: i32 = 6;
    if value == 0.0 {
        return if value.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round to the target precision first; the exponent can move (9.999995 → 10).
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= PRECISION {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_header(catalog: &Catalog) -> String {
    let mut line = String::from("frame_index,time_s");
    for d in catalog.descriptors() {
        line.push(',');
        line.push_str(d.id.as_str());
    }
    line
}

/// Runs every frame of `samples` through `engine`, writing one CSV row per
/// frame. Returns the number of data rows.
pub fn render_csv(engine: &mut Engine, samples: &[f64], out: &mut impl Write) -> io::Result<usize> {
    let stream = *engine.stream();
    let frames = frame_stream(samples, &stream)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    writeln!(out, "{}", csv_header(engine.registry().catalog()))?;
    let mut rows = 0;
    let mut line = String::new();
    for frame in frames {
        let output = engine.process_frame(&frame);
        line.clear();
        line.push_str(&output.snapshot.frame_index.to_string());
        line.push(',');
        line.push_str(&format_g6(output.snapshot.time_s));
        for v in &output.snapshot.values {
            line.push(',');
            line.push_str(&format_g6(*v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        rows += 1;
    }
    out.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::SessionConfig;
    use proptest::prelude::*;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (440.0, "440"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.999995, "10"),
            (999999.5, "1e+06"),
            (-3.25, "-3.25"),
            (0.011609977324263039, "0.01161"),
            (1.0 / 3.0, "0.333333"),
            (1e-300, "1e-300"),
        ];
        for (v, expected) in cases {
            assert_eq!(format_g6(v), expected, "{v}");
        }
    }

    proptest! {
        #[test]
        fn g6_keeps_six_digits(v in -1e12f64..1e12) {
            let text = format_g6(v);
            let back: f64 = text.parse().unwrap();
            let tolerance = v.abs() * 5e-6 + 1e-300;
            prop_assert!((back - v).abs() <= tolerance, "{} -> {}", v, text);
        }
    }

    #[test]
    fn silence_renders_expected_rows() {
        let mut config = SessionConfig::default();
        config.override_stream(None, Some(1024), None);
        let mut engine = Engine::new(&config).unwrap();
        let mut out = Vec::new();
        let rows = render_csv(&mut engine, &vec![0.0; 44100], &mut out).unwrap();
        assert_eq!(rows, 85);
        let text = String::from_utf8(out).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "backend0/global/loudness").unwrap();
        assert_eq!(lines.clone().count(), 85);
        for line in lines {
            let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
            assert_eq!(v, 0.0);
        }
    }
}
