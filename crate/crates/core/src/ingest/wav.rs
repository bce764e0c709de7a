//! Minimal RIFF/WAVE reader and writer for PCM16 and IEEE float32 audio.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WavError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAudio {
    pub sample_rate: u32,
    /// Mono samples in [-1, 1].
    pub samples: Vec<f64>,
}

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, WavError> {
    if body.len() < 16 {
        return Err(WavError::CorruptHeader("fmt chunk shorter than 16 bytes".into()));
    }
    let mut code = u16_at(body, 0);
    if code == FORMAT_EXTENSIBLE {
        // The sub-format GUID starts with the plain format code.
        if body.len() < 26 {
            return Err(WavError::CorruptHeader("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        code = u16_at(body, 24);
    }
    Ok(Format {
        code,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits: u16_at(body, 14),
    })
}

/// Decodes a WAV file into mono samples. Stereo is downmixed by averaging.
pub fn decode_wav(bytes: &[u8]) -> Result<DecodedAudio, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::CorruptHeader("missing RIFF/WAVE signature".into()));
    }
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .ok_or_else(|| WavError::CorruptHeader("chunk size overflow".into()))?;
        match id {
            b"fmt " => {
                if end > bytes.len() {
                    return Err(WavError::CorruptHeader("truncated fmt chunk".into()));
                }
                format = Some(parse_fmt(&bytes[start..end])?);
            }
            b"data" => {
                // Streaming writers sometimes leave the size unset; take what is there.
                data = Some(&bytes[start..end.min(bytes.len())]);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    let format = format.ok_or_else(|| WavError::CorruptHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::CorruptHeader("no data chunk".into()))?;

    let width = match (format.code, format.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (FORMAT_PCM, bits) | (FORMAT_IEEE_FLOAT, bits) => {
            return Err(WavError::UnsupportedFormat(format!(
                "format code {} with {bits} bits per sample",
                format.code
            )))
        }
        (code, _) => {
            return Err(WavError::UnsupportedFormat(format!("compression code {code}")));
        }
    };
    if !(1..=2).contains(&format.channels) {
        return Err(WavError::UnsupportedFormat(format!(
            "{} channels",
            format.channels
        )));
    }
    if format.sample_rate == 0 {
        return Err(WavError::CorruptHeader("sample rate is zero".into()));
    }
    let channels = format.channels as usize;
    let block = width * channels;
    if format.block_align as usize != block {
        return Err(WavError::CorruptHeader(format!(
            "block align {} does not match {} channels of {} bytes",
            format.block_align, channels, width
        )));
    }

    let read = |b: &[u8]| -> f64 {
        match width {
            2 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            _ => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        }
    };
    let samples = data
        .chunks_exact(block)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(width).map(read).sum();
            let mono = sum / channels as f64;
            if mono.is_finite() {
                mono.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(DecodedAudio {
        sample_rate: format.sample_rate,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Writes interleaved samples as a canonical 44-byte-header WAV file.
pub fn encode_wav(samples: &[f64], sample_rate: u32, channels: u16, encoding: WavEncoding) -> Vec<u8> {
    let (code, width) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 2u16),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 4u16),
    };
    let data_len = samples.len() * width as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&code.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    let block = channels * width;
    out.extend_from_slice(&(sample_rate * block as u32).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
            WavEncoding::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_raw(values: &[i16], channels: u16) -> Vec<u8> {
        let samples: Vec<f64> = values.iter().map(|&v| v as f64 / 32768.0).collect();
        encode_wav(&samples, 44100, channels, WavEncoding::Pcm16)
    }

    #[test]
    fn pcm16_scaling() {
        let decoded = decode_wav(&pcm16_raw(&[16384, -32768, 0], 1)).unwrap();
        assert_eq!(decoded.sample_rate, 44100);
        assert_eq!(decoded.samples, vec![0.5, -1.0, 0.0]);
    }

    #[test]
    fn stereo_is_averaged() {
        let bytes = encode_wav(&[1.0, 0.0, -0.5, -0.5], 48000, 2, WavEncoding::Float32);
        let decoded = decode_wav(&bytes).unwrap();
        assert_eq!(decoded.samples, vec![0.5, -0.5]);
    }

    #[test]
    fn float_values_are_clamped() {
        let bytes = encode_wav(&[1.5, -2.0, 0.25], 8000, 1, WavEncoding::Float32);
        assert_eq!(decode_wav(&bytes).unwrap().samples, vec![1.0, -1.0, 0.25]);
    }

    #[test]
    fn mp3_code_is_unsupported() {
        let mut bytes = pcm16_raw(&[0, 0], 1);
        bytes[20..22].copy_from_slice(&85u16.to_le_bytes());
        assert!(matches!(decode_wav(&bytes), Err(WavError::UnsupportedFormat(_))));
    }

    #[test]
    fn pcm24_is_unsupported() {
        let mut bytes = pcm16_raw(&[0, 0], 1);
        bytes[34..36].copy_from_slice(&24u16.to_le_bytes());
        assert!(matches!(decode_wav(&bytes), Err(WavError::UnsupportedFormat(_))));
    }

    #[test]
    fn corrupt_headers() {
        assert!(matches!(decode_wav(b"RIFX"), Err(WavError::CorruptHeader(_))));
        let bytes = pcm16_raw(&[1, 2, 3], 1);
        // Cut inside the fmt chunk.
        assert!(matches!(decode_wav(&bytes[..30]), Err(WavError::CorruptHeader(_))));
        // No data chunk at all.
        let mut no_data = bytes[..36].to_vec();
        no_data[4..8].copy_from_slice(&28u32.to_le_bytes());
        assert!(matches!(decode_wav(&no_data), Err(WavError::CorruptHeader(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = pcm16_raw(&[16384], 1);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]); // odd size, padded
        bytes.extend_from_slice(&plain[36..]);
        assert_eq!(decode_wav(&bytes).unwrap().samples, vec![0.5]);
    }
}
