//! Frame-aligned binary string/fret targets.
//!
//! A label matrix holds `frames x 6 strings x 20 fret bins`. Bin
//! `(t, s, f)` is set when a note on string `s` fretted at `f` sounds at the
//! frame-center time `(t + 0.5) * hop_s`. Each frame stores its 120 bins in
//! one `u128`, bit `(s-1) * 20 + f`, which makes counting and comparing
//! matrices a handful of popcounts.
//!
//! On disk a matrix is a packed little-endian bit tensor (15 bytes per
//! frame) with a JSON sidecar describing the framing
//! (`synthtab-labels/1`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::PerformanceScore;
use crate::synth::AudioBuffer;

pub const STRINGS: usize = 6;
pub const FRET_BINS: usize = 20;
pub const BINS_PER_FRAME: usize = STRINGS * FRET_BINS;
pub const BYTES_PER_FRAME: usize = BINS_PER_FRAME / 8;

/// Mask of all 120 label bits.
pub const FRAME_MASK: u128 = (1u128 << BINS_PER_FRAME) - 1;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("fret {fret} outside 0..{FRET_BINS} (frame {frame}, string {string})")]
    FretOutOfRange { frame: usize, string: u8, fret: u8 },
    #[error("string {0} outside 1..={STRINGS}")]
    StringOutOfRange(u8),
    #[error("frame {frame}, string {string}: second fret {fret} would break per-string monophony")]
    Monophony { frame: usize, string: u8, fret: u8 },
    #[error("matrix covers {covered:.3} s but the score runs {needed:.3} s")]
    TooFewFrames { covered: f64, needed: f64 },
    #[error("hop must be positive, got {0}")]
    BadHop(f64),
    #[error("packed tensor is {got} bytes; {want} expected for {frames} frames")]
    BadTensorSize { got: usize, want: usize, frames: usize },
}

/// Sidecar metadata stored next to the packed tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub schema: String,
    pub hop_s: f64,
    pub n_frames: usize,
    pub strings: usize,
    pub frets: usize,
}

pub const LABEL_SCHEMA_VERSION: &str = "synthtab-labels/1";

impl LabelSidecar {
    pub fn for_matrix(m: &FrameLabelMatrix) -> Self {
        Self {
            schema: LABEL_SCHEMA_VERSION.to_string(),
            hop_s: m.hop_s(),
            n_frames: m.n_frames(),
            strings: STRINGS,
            frets: FRET_BINS,
        }
    }
}

/// Binary string/fret activations per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelMatrix {
    frames: Vec<u128>,
    hop_s: f64,
}

#[inline]
fn bit(string: u8, fret: u8) -> u128 {
    1u128 << ((string as usize - 1) * FRET_BINS + fret as usize)
}

/// Per-string mask of 20 fret bits.
#[inline]
pub fn string_mask(string: u8) -> u128 {
    ((1u128 << FRET_BINS) - 1) << ((string as usize - 1) * FRET_BINS)
}

impl FrameLabelMatrix {
    pub fn zeros(n_frames: usize, hop_s: f64) -> Result<Self, LabelError> {
        if !(hop_s > 0.0 && hop_s.is_finite()) {
            return Err(LabelError::BadHop(hop_s));
        }
        Ok(Self { frames: vec![0; n_frames], hop_s })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_s
    }

    pub fn frame_bits(&self, frame: usize) -> u128 {
        self.frames[frame]
    }

    pub fn get(&self, frame: usize, string: u8, fret: u8) -> bool {
        self.frames[frame] & bit(string, fret) != 0
    }

    /// Set one bin; rejects a second fret on the same (frame, string).
    pub fn set(&mut self, frame: usize, string: u8, fret: u8) -> Result<(), LabelError> {
        if string == 0 || string as usize > STRINGS {
            return Err(LabelError::StringOutOfRange(string));
        }
        if fret as usize >= FRET_BINS {
            return Err(LabelError::FretOutOfRange { frame, string, fret });
        }
        let b = bit(string, fret);
        let lane = self.frames[frame] & string_mask(string);
        if lane != 0 && lane != b {
            return Err(LabelError::Monophony { frame, string, fret });
        }
        self.frames[frame] |= b;
        Ok(())
    }

    /// Number of active bins across the whole matrix.
    pub fn count_ones(&self) -> u64 {
        self.frames.iter().map(|f| f.count_ones() as u64).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.frames.iter().all(|&f| f == 0)
    }

    /// Active `(string, fret)` pairs of one frame.
    pub fn active(&self, frame: usize) -> Vec<(u8, u8)> {
        let mut out = Vec::new();
        let bits = self.frames[frame];
        for s in 1..=STRINGS as u8 {
            for f in 0..FRET_BINS as u8 {
                if bits & bit(s, f) != 0 {
                    out.push((s, f));
                }
            }
        }
        out
    }

    /// Pack into the on-disk tensor: 15 bytes per frame, little-endian bits.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frames.len() * BYTES_PER_FRAME);
        for &f in &self.frames {
            out.extend_from_slice(&f.to_le_bytes()[..BYTES_PER_FRAME]);
        }
        out
    }

    pub fn from_packed_bytes(bytes: &[u8], n_frames: usize, hop_s: f64) -> Result<Self, LabelError> {
        let want = n_frames * BYTES_PER_FRAME;
        if bytes.len() != want {
            return Err(LabelError::BadTensorSize { got: bytes.len(), want, frames: n_frames });
        }
        let mut m = Self::zeros(n_frames, hop_s)?;
        for (i, chunk) in bytes.chunks_exact(BYTES_PER_FRAME).enumerate() {
            let mut raw = [0u8; 16];
            raw[..BYTES_PER_FRAME].copy_from_slice(chunk);
            let frame = u128::from_le_bytes(raw);
            if frame & !FRAME_MASK != 0 {
                return Err(LabelError::BadTensorSize { got: bytes.len(), want, frames: n_frames });
            }
            // Enforce monophony on ingest as well.
            for s in 1..=STRINGS as u8 {
                if (frame & string_mask(s)).count_ones() > 1 {
                    return Err(LabelError::Monophony { frame: i, string: s, fret: 0 });
                }
            }
            m.frames[i] = frame;
        }
        Ok(m)
    }

    /// CSV rows `frame,string,fret`, one per active bin.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,string,fret")?;
        for t in 0..self.n_frames() {
            for (s, f) in self.active(t) {
                writeln!(w, "{t},{s},{f}")?;
            }
        }
        Ok(())
    }
}

/// Number of frames needed to cover `duration_s` at `hop_s` per frame.
pub fn frames_for_duration(duration_s: f64, hop_s: f64) -> usize {
    (duration_s / hop_s).ceil() as usize
}

/// Project a compiled score onto the frame grid.
///
/// Uses the score's (post-humanization) onsets so labels align with the
/// rendered audio. Bent and slid notes keep their fretted position: the
/// label describes where the finger is, not the sounding pitch.
pub fn labels_from_score(
    score: &PerformanceScore,
    hop_s: f64,
    n_frames: usize,
) -> Result<FrameLabelMatrix, LabelError> {
    let mut m = FrameLabelMatrix::zeros(n_frames, hop_s)?;
    let covered = n_frames as f64 * hop_s;
    // Frame centers only matter up to the last center, hence the half hop.
    if score.total_duration_s() > covered + hop_s * 0.5 {
        return Err(LabelError::TooFewFrames { covered, needed: score.total_duration_s() });
    }
    for ev in score.iter_events() {
        if ev.fret as usize >= FRET_BINS {
            return Err(LabelError::FretOutOfRange { frame: 0, string: ev.string, fret: ev.fret });
        }
        let first = ((ev.onset_s / hop_s - 0.5).ceil().max(0.0)) as usize;
        for frame in first..n_frames {
            let center = (frame as f64 + 0.5) * hop_s;
            if center < ev.onset_s {
                continue;
            }
            if center >= ev.end_s() {
                break;
            }
            m.set(frame, ev.string, ev.fret)?;
        }
    }
    Ok(m)
}

/// Frames whose RMS level clears `threshold_dbfs`, on the same grid as
/// [`labels_from_score`]. Ties the label timeline to the audio timeline.
pub fn energy_active_frames(buf: &AudioBuffer, hop_samples: usize, threshold_dbfs: f64) -> Vec<bool> {
    let threshold = 10f64.powf(threshold_dbfs / 20.0);
    buf.samples()
        .chunks(hop_samples)
        .map(|c| {
            let rms = (c.iter().map(|s| s * s).sum::<f64>() / c.len() as f64).sqrt();
            rms > threshold
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile, HumanizeConfig};
    use crate::tab::{NoteEvent, Track, Tuning};

    fn score_of(notes: Vec<NoteEvent>) -> PerformanceScore {
        let track = Track::new("t", 24, Tuning::standard(), notes).unwrap();
        compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap()
    }

    #[test]
    fn one_second_note_fills_the_expected_frames() {
        // 1 s note at hop 512/22050 ≈ 23.2 ms: centers 0..=42 lie inside.
        let hop = 512.0 / 22050.0;
        let score = score_of(vec![NoteEvent::new(1, 0, 96, 0, 1920, vec![]).unwrap()]);
        let n = frames_for_duration(score.total_duration_s() + 0.5, hop);
        let m = labels_from_score(&score, hop, n).unwrap();
        // Oracle: direct interval membership per frame center.
        for t in 0..n {
            let center = (t as f64 + 0.5) * hop;
            let want = center < 1.0;
            assert_eq!(m.get(t, 1, 0), want, "frame {t}");
            for s in 2..=6u8 {
                assert_eq!(m.frame_bits(t) & string_mask(s), 0);
            }
        }
        assert!(m.get(42, 1, 0));
        assert!(!m.get(43, 1, 0));
    }

    #[test]
    fn empty_score_is_all_zero() {
        let score = score_of(vec![]);
        let m = labels_from_score(&score, 0.0232, 100).unwrap();
        assert!(m.is_all_zero());
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn simultaneous_notes_on_two_strings_yield_two_bins() {
        let hop = 512.0 / 22050.0;
        let score = score_of(vec![
            NoteEvent::new(2, 3, 96, 0, 960, vec![]).unwrap(),
            NoteEvent::new(3, 7, 96, 0, 960, vec![]).unwrap(),
        ]);
        let n = frames_for_duration(score.total_duration_s(), hop);
        let m = labels_from_score(&score, hop, n).unwrap();
        // Brute-force frame scan.
        for t in 0..n {
            let center = (t as f64 + 0.5) * hop;
            let inside = center < 0.5;
            let count = m.frame_bits(t).count_ones();
            assert_eq!(count, if inside { 2 } else { 0 }, "frame {t}");
            if inside {
                assert!(m.get(t, 2, 3) && m.get(t, 3, 7));
            }
        }
    }

    #[test]
    fn monophony_is_enforced() {
        let mut m = FrameLabelMatrix::zeros(4, 0.02).unwrap();
        m.set(1, 3, 5).unwrap();
        m.set(1, 3, 5).unwrap(); // same bin is idempotent
        assert!(matches!(m.set(1, 3, 6), Err(LabelError::Monophony { .. })));
        assert!(m.set(1, 4, 6).is_ok());
    }

    #[test]
    fn packed_round_trip() {
        let hop = 0.0232;
        let score = score_of(vec![
            NoteEvent::new(1, 12, 96, 0, 960, vec![]).unwrap(),
            NoteEvent::new(6, 0, 96, 480, 960, vec![]).unwrap(),
        ]);
        let n = frames_for_duration(score.total_duration_s(), hop);
        let m = labels_from_score(&score, hop, n).unwrap();
        let bytes = m.to_packed_bytes();
        assert_eq!(bytes.len(), n * BYTES_PER_FRAME);
        let back = FrameLabelMatrix::from_packed_bytes(&bytes, n, hop).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_lists_active_bins() {
        let mut m = FrameLabelMatrix::zeros(2, 0.02).unwrap();
        m.set(0, 1, 0).unwrap();
        m.set(1, 6, 19).unwrap();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "frame,string,fret\n0,1,0\n1,6,19\n");
    }

    #[test]
    fn too_short_matrix_is_rejected() {
        let score = score_of(vec![NoteEvent::new(1, 0, 96, 0, 9600, vec![]).unwrap()]);
        assert!(matches!(
            labels_from_score(&score, 0.0232, 10),
            Err(LabelError::TooFewFrames { .. })
        ));
    }
}
