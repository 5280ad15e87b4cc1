//! Standard MIDI File export for external samplers.
//!
//! A [`PerformanceScore`] becomes an SMF format-1 file with a conductor
//! track plus six string tracks, string k on channel k-1. Technique tags are
//! announced with keyswitch notes below pitch 36, following the common
//! sampler convention; pitch curves are quantized into 14-bit pitch-wheel
//! messages at a 100 Hz+ message rate. A small reader is included so emitted
//! files can be verified by re-import.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::compile::PerformanceScore;
use crate::tab::{TechniqueKind, RENDER_STRINGS};

/// Keyswitch space is [0, 36): sounding pitches must stay at or above 36.
pub const KEYSWITCH_CEILING: u8 = 36;
/// Pitch-wheel center (no detune).
pub const WHEEL_CENTER: i32 = 8192;
const WHEEL_MAX: i32 = 16383;
/// Minimum message rate while a pitch curve is in motion.
const WHEEL_RATE_HZ: f64 = 200.0;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("ppq {0} too small; need at least 96")]
    PpqTooSmall(u16),
    #[error("tempo {0} BPM out of range")]
    BadTempo(f64),
    #[error("event pitch {pitch} on string {string} collides with keyswitch space (< {KEYSWITCH_CEILING})")]
    PitchInKeyswitchRange { string: u8, pitch: u8 },
    #[error("keyswitch pitch {0} not below {KEYSWITCH_CEILING}")]
    KeyswitchOutOfRange(u8),
    #[error("keyswitch map not injective: pitch {0} assigned twice")]
    KeyswitchCollision(u8),
    #[error("malformed SMF: {0}")]
    Malformed(String),
}

/// Technique-to-keyswitch assignment plus pitch-wheel scaling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyswitchMap {
    map: BTreeMap<TechniqueKind, u8>,
    default_pitch: u8,
    bend_range_semitones: u8,
}

impl Default for KeyswitchMap {
    /// Keyswitches 24–31, 32 for unmapped techniques, wheel range ±2
    /// semitones.
    fn default() -> Self {
        let map = [
            (TechniqueKind::HammerOn, 24u8),
            (TechniqueKind::PullOff, 25),
            (TechniqueKind::Slide, 26),
            (TechniqueKind::Bend, 27),
            (TechniqueKind::PalmMute, 28),
            (TechniqueKind::Harmonic, 29),
            (TechniqueKind::Vibrato, 30),
            (TechniqueKind::DeadNote, 31),
        ]
        .into_iter()
        .collect::<BTreeMap<_, _>>();
        Self { map, default_pitch: 32, bend_range_semitones: 2 }
    }
}

impl KeyswitchMap {
    pub fn new(
        map: BTreeMap<TechniqueKind, u8>,
        default_pitch: u8,
        bend_range_semitones: u8,
    ) -> Result<Self, MidiError> {
        let mut seen = [false; 128];
        for &p in map.values().chain(std::iter::once(&default_pitch)) {
            if p >= KEYSWITCH_CEILING {
                return Err(MidiError::KeyswitchOutOfRange(p));
            }
            if seen[p as usize] {
                return Err(MidiError::KeyswitchCollision(p));
            }
            seen[p as usize] = true;
        }
        if bend_range_semitones == 0 {
            return Err(MidiError::Malformed("bend range must be positive".into()));
        }
        Ok(Self { map, default_pitch, bend_range_semitones })
    }

    pub fn pitch_for(&self, kind: TechniqueKind) -> u8 {
        self.map.get(&kind).copied().unwrap_or(self.default_pitch)
    }

    pub fn bend_range_semitones(&self) -> u8 {
        self.bend_range_semitones
    }

    /// 14-bit wheel value for a cents offset under this map's bend range.
    pub fn wheel_value(&self, cents: f64) -> u16 {
        let span = self.bend_range_semitones as f64 * 100.0;
        let v = WHEEL_CENTER + (8191.0 * cents / span).round() as i32;
        v.clamp(0, WHEEL_MAX) as u16
    }

    /// Inverse of [`Self::wheel_value`], up to quantization.
    pub fn wheel_to_cents(&self, value: u16) -> f64 {
        let span = self.bend_range_semitones as f64 * 100.0;
        (value as i32 - WHEEL_CENTER) as f64 * span / 8191.0
    }
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    while n > 1 {
        n -= 1;
        out.push(stack[n] | 0x80);
    }
    out.push(stack[0]);
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventRank {
    KeyswitchOn,
    KeyswitchOff,
    Wheel,
    NoteOff,
    NoteOn,
}

struct TrackEventBuf {
    events: Vec<(u64, EventRank, [u8; 3], u8)>, // tick, rank, bytes, len
}

impl TrackEventBuf {
    fn new() -> Self {
        Self { events: Vec::new() }
    }

    fn push(&mut self, tick: u64, rank: EventRank, bytes: &[u8]) {
        let mut buf = [0u8; 3];
        buf[..bytes.len()].copy_from_slice(bytes);
        self.events.push((tick, rank, buf, bytes.len() as u8));
    }

    fn into_chunk(mut self) -> Vec<u8> {
        self.events.sort_by_key(|&(tick, rank, ..)| (tick, rank));
        let mut body = Vec::new();
        let mut cursor = 0u64;
        for (tick, _, bytes, len) in self.events {
            push_vlq(&mut body, (tick - cursor) as u32);
            body.extend_from_slice(&bytes[..len as usize]);
            cursor = tick;
        }
        push_vlq(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x2f, 0x00]); // end of track
        chunk(b"MTrk", &body)
    }
}

fn chunk(tag: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Encode a score as SMF format 1.
///
/// Track 0 carries the tempo; tracks 1–6 carry strings 1–6 on channels 0–5.
/// Every event with techniques is preceded by the corresponding keyswitch
/// notes (one tick long, two ticks before the onset where possible). Pitch
/// curves are emitted as wheel messages: an initial value at the onset, then
/// changes sampled at breakpoints and a 200 Hz grid, duplicates skipped.
pub fn export_smf(
    score: &PerformanceScore,
    ks: &KeyswitchMap,
    ppq: u16,
    tempo_bpm: f64,
) -> Result<Vec<u8>, MidiError> {
    if ppq < 96 {
        return Err(MidiError::PpqTooSmall(ppq));
    }
    if !(1.0..=1000.0).contains(&tempo_bpm) {
        return Err(MidiError::BadTempo(tempo_bpm));
    }
    for ev in score.iter_events() {
        if ev.pitch < KEYSWITCH_CEILING {
            return Err(MidiError::PitchInKeyswitchRange { string: ev.string, pitch: ev.pitch });
        }
    }

    let ticks_per_second = ppq as f64 * tempo_bpm / 60.0;
    let to_tick = |seconds: f64| -> u64 { (seconds * ticks_per_second).round().max(0.0) as u64 };

    let mut out = Vec::new();
    // Header: format 1, 1 conductor + 6 string tracks, metrical division.
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(1 + RENDER_STRINGS as u16).to_be_bytes());
    out.extend_from_slice(&ppq.to_be_bytes());

    let us_per_beat = (60_000_000.0 / tempo_bpm).round() as u32;
    let mut conductor = Vec::new();
    push_vlq(&mut conductor, 0);
    conductor.extend_from_slice(&[0xff, 0x51, 0x03]);
    conductor.extend_from_slice(&us_per_beat.to_be_bytes()[1..4]);
    push_vlq(&mut conductor, 0);
    conductor.extend_from_slice(&[0xff, 0x2f, 0x00]);
    out.extend_from_slice(&chunk(b"MTrk", &conductor));

    for string in 1..=RENDER_STRINGS as u8 {
        let ch = string - 1;
        let mut buf = TrackEventBuf::new();
        let mut last_wheel: Option<u16> = None;

        for ev in score.string_events(string) {
            let onset_tick = to_tick(ev.onset_s);
            let end_tick = to_tick(ev.end_s()).max(onset_tick + 1);

            for &kind in &ev.techniques {
                let pitch = ks.pitch_for(kind);
                let ks_on = onset_tick.saturating_sub(2);
                buf.push(ks_on, EventRank::KeyswitchOn, &[0x90 | ch, pitch, 0x40]);
                buf.push(ks_on + 1, EventRank::KeyswitchOff, &[0x80 | ch, pitch, 0x00]);
            }

            // Wheel stream: breakpoints plus a fixed grid, deduplicated.
            let dur = ev.duration_s;
            let mut times: Vec<f64> = ev.pitch_curve.points().iter().map(|p| p.0).collect();
            let grid = (dur * WHEEL_RATE_HZ).ceil() as usize;
            if !ev.pitch_curve.is_flat(1e-9) {
                for i in 1..grid {
                    times.push(dur * i as f64 / grid as f64);
                }
            }
            times.sort_by(f64::total_cmp);
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            for t in times {
                let value = ks.wheel_value(ev.pitch_curve.value_at(t));
                if last_wheel == Some(value) {
                    continue;
                }
                last_wheel = Some(value);
                let tick = to_tick(ev.onset_s + t).min(end_tick - 1);
                buf.push(
                    tick,
                    EventRank::Wheel,
                    &[0xe0 | ch, (value & 0x7f) as u8, (value >> 7) as u8],
                );
            }

            buf.push(onset_tick, EventRank::NoteOn, &[0x90 | ch, ev.pitch, ev.velocity]);
            buf.push(end_tick, EventRank::NoteOff, &[0x80 | ch, ev.pitch, 0x00]);
        }
        out.extend_from_slice(&buf.into_chunk());
    }

    Ok(out)
}

// ---------------------------------------------------------------------------
// Reader (re-import verification and tooling)
// ---------------------------------------------------------------------------

/// One decoded channel event at an absolute tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmfEvent {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    PitchWheel { channel: u8, value: u16 },
    Tempo { us_per_beat: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmfDocument {
    pub format: u16,
    pub ppq: u16,
    /// Per MTrk chunk: (absolute tick, event), file order.
    pub tracks: Vec<Vec<(u64, SmfEvent)>>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.pos + n > self.data.len() {
            return Err(MidiError::Malformed("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Malformed("variable-length quantity too long".into()))
    }
}

/// Parse an SMF byte stream. Notes, pitch wheel and tempo are decoded;
/// other events are skipped but must be well-formed.
pub fn read_smf(bytes: &[u8]) -> Result<SmfDocument, MidiError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(MidiError::Malformed("missing MThd".into()));
    }
    let hlen = r.u32()? as usize;
    if hlen < 6 {
        return Err(MidiError::Malformed("short header".into()));
    }
    let format = r.u16()?;
    let ntrks = r.u16()?;
    let division = r.u16()?;
    if division & 0x8000 != 0 {
        return Err(MidiError::Malformed("SMPTE division unsupported".into()));
    }
    r.take(hlen - 6)?;

    let mut tracks = Vec::with_capacity(ntrks as usize);
    for _ in 0..ntrks {
        if r.take(4)? != b"MTrk" {
            return Err(MidiError::Malformed("missing MTrk".into()));
        }
        let len = r.u32()? as usize;
        let end = r.pos + len;
        let mut events = Vec::new();
        let mut tick = 0u64;
        let mut running: Option<u8> = None;
        while r.pos < end {
            tick += r.vlq()? as u64;
            let mut status = r.u8()?;
            if status < 0x80 {
                status = running.ok_or_else(|| MidiError::Malformed("data byte without status".into()))?;
                r.pos -= 1;
            }
            match status {
                0xff => {
                    let meta = r.u8()?;
                    let len = r.vlq()? as usize;
                    let body = r.take(len)?;
                    if meta == 0x51 && len == 3 {
                        let us = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        events.push((tick, SmfEvent::Tempo { us_per_beat: us }));
                    }
                    running = None;
                }
                0xf0 | 0xf7 => {
                    let len = r.vlq()? as usize;
                    r.take(len)?;
                    running = None;
                }
                _ => {
                    running = Some(status);
                    let channel = status & 0x0f;
                    match status & 0xf0 {
                        0x90 => {
                            let pitch = r.u8()?;
                            let velocity = r.u8()?;
                            events.push((
                                tick,
                                if velocity == 0 {
                                    SmfEvent::NoteOff { channel, pitch }
                                } else {
                                    SmfEvent::NoteOn { channel, pitch, velocity }
                                },
                            ));
                        }
                        0x80 => {
                            let pitch = r.u8()?;
                            let _vel = r.u8()?;
                            events.push((tick, SmfEvent::NoteOff { channel, pitch }));
                        }
                        0xe0 => {
                            let lsb = r.u8()? as u16;
                            let msb = r.u8()? as u16;
                            events.push((tick, SmfEvent::PitchWheel { channel, value: (msb << 7) | lsb }));
                        }
                        0xa0 | 0xb0 => {
                            r.take(2)?;
                        }
                        0xc0 | 0xd0 => {
                            r.take(1)?;
                        }
                        _ => return Err(MidiError::Malformed(format!("unknown status {status:#x}"))),
                    }
                }
            }
        }
        if r.pos != end {
            return Err(MidiError::Malformed("track length mismatch".into()));
        }
        tracks.push(events);
    }

    Ok(SmfDocument { format, ppq: division, tracks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile, HumanizeConfig};
    use crate::tab::{NoteEvent, Technique, Track, Tuning};

    fn score_of(notes: Vec<NoteEvent>) -> PerformanceScore {
        let track = Track::new("t", 24, Tuning::standard(), notes).unwrap();
        compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap()
    }

    fn note_ons(doc: &SmfDocument, track: usize) -> Vec<(u64, u8, u8)> {
        doc.tracks[track]
            .iter()
            .filter_map(|&(tick, ev)| match ev {
                SmfEvent::NoteOn { channel, pitch, .. } => Some((tick, channel, pitch)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn flat_note_emits_single_centered_wheel() {
        let score = score_of(vec![NoteEvent::new(1, 0, 96, 0, 960, vec![]).unwrap()]);
        let smf = export_smf(&score, &KeyswitchMap::default(), 960, 120.0).unwrap();
        let doc = read_smf(&smf).unwrap();
        assert_eq!(doc.format, 1);
        assert_eq!(doc.tracks.len(), 7);
        let wheels: Vec<u16> = doc.tracks[1]
            .iter()
            .filter_map(|&(_, ev)| match ev {
                SmfEvent::PitchWheel { value, .. } => Some(value),
                _ => None,
            })
            .collect();
        assert_eq!(wheels, vec![8192]);
        let ons = note_ons(&doc, 1);
        assert_eq!(ons, vec![(0, 0, 64)]);
    }

    #[test]
    fn full_bend_saturates_wheel_at_16383() {
        // +200 cents against a ±2 semitone wheel range pegs the wheel.
        let score = score_of(vec![NoteEvent::new(
            1,
            5,
            96,
            0,
            960,
            vec![Technique::Bend { semitones: 2.0 }],
        )
        .unwrap()]);
        let ks = KeyswitchMap::default();
        let smf = export_smf(&score, &ks, 960, 120.0).unwrap();
        let doc = read_smf(&smf).unwrap();
        let last = doc.tracks[1]
            .iter()
            .filter_map(|&(_, ev)| match ev {
                SmfEvent::PitchWheel { value, .. } => Some(value),
                _ => None,
            })
            .last()
            .unwrap();
        assert_eq!(last, 16383);
        assert_eq!(ks.wheel_value(200.0), 16383);
        assert_eq!(ks.wheel_value(0.0), 8192);
    }

    #[test]
    fn vibrato_keyswitch_precedes_note_on() {
        let score = score_of(vec![NoteEvent::new(
            2,
            3,
            96,
            960,
            960,
            vec![Technique::Vibrato { depth_cents: 40.0, rate_hz: 5.0 }],
        )
        .unwrap()]);
        let ks = KeyswitchMap::default();
        assert_eq!(ks.pitch_for(TechniqueKind::Vibrato), 30);
        let smf = export_smf(&score, &ks, 960, 120.0).unwrap();
        let doc = read_smf(&smf).unwrap();
        let events = &doc.tracks[2];
        let ks_pos = events
            .iter()
            .position(|&(_, ev)| matches!(ev, SmfEvent::NoteOn { pitch: 30, .. }))
            .expect("keyswitch note present");
        let note_pos = events
            .iter()
            .position(|&(_, ev)| matches!(ev, SmfEvent::NoteOn { pitch, .. } if pitch >= KEYSWITCH_CEILING))
            .expect("main note present");
        assert!(ks_pos < note_pos);
        assert!(events[ks_pos].0 < events[note_pos].0);
    }

    #[test]
    fn low_pitch_collides_with_keyswitch_space() {
        // Tuning down to E1 (28): open string sounds inside keyswitch range.
        let tuning = Tuning::new(vec![40, 35, 28]).unwrap();
        let track = Track::new(
            "low",
            24,
            tuning,
            vec![NoteEvent::new(3, 0, 96, 0, 960, vec![]).unwrap()],
        )
        .unwrap();
        let score = compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap();
        assert!(matches!(
            export_smf(&score, &KeyswitchMap::default(), 960, 120.0),
            Err(MidiError::PitchInKeyswitchRange { pitch: 28, .. })
        ));
    }

    #[test]
    fn ppq_floor_enforced() {
        let score = score_of(vec![]);
        assert!(matches!(
            export_smf(&score, &KeyswitchMap::default(), 48, 120.0),
            Err(MidiError::PpqTooSmall(48))
        ));
    }

    #[test]
    fn keyswitch_map_validation() {
        let mut m = BTreeMap::new();
        m.insert(TechniqueKind::Bend, 40u8);
        assert!(matches!(KeyswitchMap::new(m, 32, 2), Err(MidiError::KeyswitchOutOfRange(40))));
        let mut m = BTreeMap::new();
        m.insert(TechniqueKind::Bend, 30u8);
        m.insert(TechniqueKind::Slide, 30u8);
        assert!(matches!(KeyswitchMap::new(m, 32, 2), Err(MidiError::KeyswitchCollision(30))));
    }

    #[test]
    fn vlq_encoding_matches_reference_values() {
        let cases: [(u32, &[u8]); 5] = [
            (0x00, &[0x00]),
            (0x7f, &[0x7f]),
            (0x80, &[0x81, 0x00]),
            (0x2000, &[0xc0, 0x00]),
            (0x0fff_ffff, &[0xff, 0xff, 0xff, 0x7f]),
        ];
        for (value, want) in cases {
            let mut out = Vec::new();
            push_vlq(&mut out, value);
            assert_eq!(out, want, "value {value:#x}");
            let mut r = Reader { data: want, pos: 0 };
            assert_eq!(r.vlq().unwrap(), value);
        }
    }
}
