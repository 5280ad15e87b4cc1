//! 24-bit PCM WAV encoding and a small reference reader.
//!
//! Output is RIFF/WAVE, PCM, mono, 24-bit little-endian. Samples quantize as
//! `clamp(round(s * 2^23), -2^23, 2^23 - 1)`, so -1.0 maps to 0x800000 and
//! +1.0 saturates at 0x7FFFFF. The reader walks chunks independently of the
//! writer so round-trip tests exercise a second code path.

use std::io::Write;
use std::path::Path;

use super::{AudioBuffer, SynthError};

const I24_MIN: i32 = -(1 << 23);
const I24_MAX: i32 = (1 << 23) - 1;
const SCALE: f64 = (1 << 23) as f64;

/// Encode a buffer as a complete WAV byte stream.
pub fn wav_bytes(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.len() * 3;
    let pad = data_len % 2; // RIFF chunks are word-aligned
    let riff_len = 4 + 8 + 16 + 8 + data_len + pad;

    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");

    let sr = buf.sample_rate_hz();
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sr.to_le_bytes());
    out.extend_from_slice(&(sr * 3).to_le_bytes()); // byte rate
    out.extend_from_slice(&3u16.to_le_bytes()); // block align
    out.extend_from_slice(&24u16.to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in buf.samples() {
        let q = quantize(s);
        let b = q.to_le_bytes();
        out.extend_from_slice(&b[..3]);
    }
    if pad == 1 {
        out.push(0);
    }
    out
}

#[inline]
pub fn quantize(sample: f64) -> i32 {
    let v = (sample * SCALE).round();
    if v <= I24_MIN as f64 {
        I24_MIN
    } else if v >= I24_MAX as f64 {
        I24_MAX
    } else {
        v as i32
    }
}

/// Write a buffer to disk as 24-bit PCM WAV.
pub fn write_wav(buf: &AudioBuffer, path: &Path) -> Result<(), SynthError> {
    let bytes = wav_bytes(buf);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Reference reader for 24-bit mono PCM WAV files.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, SynthError> {
    let err = |m: &str| SynthError::Wav(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(err("missing RIFF/WAVE signature"));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(err("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(err("fmt chunk too small"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + size % 2;
    }

    let (tag, channels, rate, bits) = fmt.ok_or_else(|| err("missing fmt chunk"))?;
    if tag != 1 {
        return Err(err("not PCM"));
    }
    if channels != 1 {
        return Err(err("only mono supported"));
    }
    if bits != 24 {
        return Err(err("only 24-bit supported"));
    }
    let data = data.ok_or_else(|| err("missing data chunk"))?;
    if data.len() % 3 != 0 {
        return Err(err("data chunk not a multiple of 3 bytes"));
    }

    let samples: Vec<f64> = data
        .chunks_exact(3)
        .map(|c| {
            let raw = (c[0] as i32) | ((c[1] as i32) << 8) | ((c[2] as i32) << 16);
            let signed = (raw << 8) >> 8; // sign-extend 24 -> 32
            signed as f64 / SCALE
        })
        .collect();
    Ok(AudioBuffer::new(samples, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_chunk_size_is_three_bytes_per_sample() {
        let buf = AudioBuffer::silence(22050, 22050);
        let bytes = wav_bytes(&buf);
        let data_len = u32::from_le_bytes(bytes[40..44].try_into().unwrap());
        assert_eq!(data_len, 66150);
        assert_eq!(bytes.len(), 44 + 66150);
    }

    #[test]
    fn full_scale_negative_is_two_complement_min() {
        assert_eq!(quantize(-1.0), -(1 << 23));
        assert_eq!(quantize(-1.0) as u32 & 0xff_ffff, 0x80_0000);
        assert_eq!(quantize(1.0), (1 << 23) - 1);
        assert_eq!(quantize(0.0), 0);
    }

    #[test]
    fn header_fields() {
        let buf = AudioBuffer::silence(100, 22050);
        let b = wav_bytes(&buf);
        assert_eq!(&b[0..4], b"RIFF");
        assert_eq!(&b[8..12], b"WAVE");
        assert_eq!(u16::from_le_bytes(b[20..22].try_into().unwrap()), 1); // PCM
        assert_eq!(u16::from_le_bytes(b[22..24].try_into().unwrap()), 1); // mono
        assert_eq!(u32::from_le_bytes(b[24..28].try_into().unwrap()), 22050);
        assert_eq!(u32::from_le_bytes(b[28..32].try_into().unwrap()), 66150); // byte rate
        assert_eq!(u16::from_le_bytes(b[32..34].try_into().unwrap()), 3); // block align
        assert_eq!(u16::from_le_bytes(b[34..36].try_into().unwrap()), 24);
    }

    #[test]
    fn write_then_read_recovers_samples_within_one_lsb() {
        let samples: Vec<f64> = (0..997)
            .map(|i| ((i as f64) * 0.031).sin() * 0.77)
            .collect();
        let buf = AudioBuffer::new(samples, 22050);
        let restored = read_wav(&wav_bytes(&buf)).unwrap();
        assert_eq!(restored.sample_rate_hz(), 22050);
        assert_eq!(restored.len(), buf.len());
        for (a, b) in buf.samples().iter().zip(restored.samples()) {
            assert!((a - b).abs() <= 1.0 / SCALE, "{a} vs {b}");
        }
    }

    #[test]
    fn odd_sample_count_pads_to_word_boundary() {
        let buf = AudioBuffer::silence(3, 22050); // 9 data bytes
        let bytes = wav_bytes(&buf);
        assert_eq!(bytes.len() % 2, 0);
        let restored = read_wav(&bytes).unwrap();
        assert_eq!(restored.len(), 3);
    }

    #[test]
    fn reader_rejects_garbage() {
        assert!(read_wav(b"not a wav").is_err());
        let buf = AudioBuffer::silence(4, 22050);
        let mut bytes = wav_bytes(&buf);
        bytes[20] = 3; // IEEE float tag
        assert!(read_wav(&bytes).is_err());
    }
}
