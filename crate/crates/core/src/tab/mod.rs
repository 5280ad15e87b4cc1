//! Canonical in-memory tablature model.
//!
//! Types are immutable after construction and every constructor validates, so
//! no invalid score is reachable through the public API. Two parsers build
//! them: the JSON interchange schema ([`parse_interchange`]) and a compact
//! line-oriented DSL for fixtures ([`parse_tab_dsl`]).
//!
//! Tunings with up to [`MAX_STRINGS`] strings are representable so that
//! over-strung corpus tracks survive parsing long enough for the track filter
//! to reject them with a recorded reason; [`RENDER_STRINGS`] is the ceiling
//! for compilation and rendering.

mod dsl;
mod interchange;

pub use dsl::parse_tab_dsl;
pub use interchange::{parse_interchange, serialize_interchange, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Structural ceiling for tunings held by the model.
pub const MAX_STRINGS: usize = 12;
/// Number of strings the downstream per-string pipeline supports.
pub const RENDER_STRINGS: usize = 6;
/// Fret positions 0 (open) through 19.
pub const MAX_FRET: u8 = 19;
/// Open-string pitch bounds, MIDI note numbers.
pub const MIN_OPEN_PITCH: u8 = 28;
pub const MAX_OPEN_PITCH: u8 = 76;
/// Largest bend target, in semitones.
pub const MAX_BEND_SEMITONES: f64 = 4.0;

/// Standard tuning E4 B3 G3 D3 A2 E2, string 1 (highest) first.
pub const STANDARD_TUNING: [u8; 6] = [64, 59, 55, 50, 45, 40];

#[derive(Debug, Error)]
pub enum TabError {
    /// Malformed document: bad syntax, wrong schema, missing or mistyped field.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    /// Well-formed document that violates a model invariant.
    #[error("invariant violation at {}: {message}", fmt_site(.track, .note))]
    Invariant {
        track: Option<usize>,
        note: Option<usize>,
        message: String,
    },
    /// Tab DSL parse failure.
    #[error("DSL error at line {line}: {message}")]
    Dsl { line: usize, message: String },
}

impl TabError {
    pub(crate) fn invariant(track: Option<usize>, note: Option<usize>, message: impl Into<String>) -> Self {
        TabError::Invariant { track, note, message: message.into() }
    }
}

fn fmt_site(track: &Option<usize>, note: &Option<usize>) -> String {
    match (track, note) {
        (Some(t), Some(n)) => format!("track {t}, note {n}"),
        (Some(t), None) => format!("track {t}"),
        _ => "tablature".to_string(),
    }
}

/// Playing-technique tag attached to a note. `techniques: []` means a plain
/// picked note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    HammerOn,
    PullOff,
    Slide,
    Bend { semitones: f64 },
    Vibrato { depth_cents: f64, rate_hz: f64 },
    PalmMute,
    Harmonic,
    DeadNote,
}

/// Parameter-free discriminant of [`Technique`], used for keyswitch lookup
/// and duplicate detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueKind {
    HammerOn,
    PullOff,
    Slide,
    Bend,
    Vibrato,
    PalmMute,
    Harmonic,
    DeadNote,
}

impl TechniqueKind {
    pub const ALL: [TechniqueKind; 8] = [
        TechniqueKind::HammerOn,
        TechniqueKind::PullOff,
        TechniqueKind::Slide,
        TechniqueKind::Bend,
        TechniqueKind::Vibrato,
        TechniqueKind::PalmMute,
        TechniqueKind::Harmonic,
        TechniqueKind::DeadNote,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TechniqueKind::HammerOn => "hammer_on",
            TechniqueKind::PullOff => "pull_off",
            TechniqueKind::Slide => "slide",
            TechniqueKind::Bend => "bend",
            TechniqueKind::Vibrato => "vibrato",
            TechniqueKind::PalmMute => "palm_mute",
            TechniqueKind::Harmonic => "harmonic",
            TechniqueKind::DeadNote => "dead_note",
        }
    }
}

impl Technique {
    pub fn kind(&self) -> TechniqueKind {
        match self {
            Technique::HammerOn => TechniqueKind::HammerOn,
            Technique::PullOff => TechniqueKind::PullOff,
            Technique::Slide => TechniqueKind::Slide,
            Technique::Bend { .. } => TechniqueKind::Bend,
            Technique::Vibrato { .. } => TechniqueKind::Vibrato,
            Technique::PalmMute => TechniqueKind::PalmMute,
            Technique::Harmonic => TechniqueKind::Harmonic,
            Technique::DeadNote => TechniqueKind::DeadNote,
        }
    }
}

/// Per-string open pitches, ordered string 1 (highest) down to string N.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Tuning {
    pitches: Vec<u8>,
}

impl Tuning {
    pub fn new(pitches: Vec<u8>) -> Result<Self, TabError> {
        if pitches.is_empty() || pitches.len() > MAX_STRINGS {
            return Err(TabError::invariant(
                None,
                None,
                format!("tuning must have 1..={MAX_STRINGS} strings, got {}", pitches.len()),
            ));
        }
        for (i, &p) in pitches.iter().enumerate() {
            if !(MIN_OPEN_PITCH..=MAX_OPEN_PITCH).contains(&p) {
                return Err(TabError::invariant(
                    None,
                    None,
                    format!(
                        "string {} open pitch {p} outside [{MIN_OPEN_PITCH}, {MAX_OPEN_PITCH}]",
                        i + 1
                    ),
                ));
            }
        }
        if !pitches.windows(2).all(|w| w[0] > w[1]) {
            return Err(TabError::invariant(
                None,
                None,
                "open pitches must strictly decrease from string 1 downwards".to_string(),
            ));
        }
        Ok(Self { pitches })
    }

    pub fn standard() -> Self {
        Self { pitches: STANDARD_TUNING.to_vec() }
    }

    pub fn string_count(&self) -> usize {
        self.pitches.len()
    }

    /// Open pitch of a 1-based string index.
    pub fn open_pitch(&self, string: u8) -> Option<u8> {
        self.pitches.get(string as usize - 1).copied()
    }

    pub fn pitches(&self) -> &[u8] {
        &self.pitches
    }
}

/// One tablature note: where it is played and how.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteEvent {
    string: u8,
    fret: u8,
    velocity: u8,
    onset_tick: u64,
    duration_tick: u64,
    techniques: Vec<Technique>,
}

impl NoteEvent {
    pub fn new(
        string: u8,
        fret: u8,
        velocity: u8,
        onset_tick: u64,
        duration_tick: u64,
        mut techniques: Vec<Technique>,
    ) -> Result<Self, TabError> {
        let err = |msg: String| TabError::invariant(None, None, msg);
        if string == 0 || string as usize > MAX_STRINGS {
            return Err(err(format!("string index {string} outside 1..={MAX_STRINGS}")));
        }
        if fret > MAX_FRET {
            return Err(err(format!("fret {fret} outside 0..={MAX_FRET}")));
        }
        if !(1..=127).contains(&velocity) {
            return Err(err(format!("velocity {velocity} outside 1..=127")));
        }
        if duration_tick == 0 {
            return Err(err("duration_tick must be positive".to_string()));
        }
        for t in &techniques {
            match *t {
                Technique::Bend { semitones } => {
                    if !semitones.is_finite() || semitones <= 0.0 || semitones > MAX_BEND_SEMITONES {
                        return Err(err(format!(
                            "bend target {semitones} semitones outside (0, {MAX_BEND_SEMITONES}]"
                        )));
                    }
                }
                Technique::Vibrato { depth_cents, rate_hz } => {
                    if !depth_cents.is_finite() || !(0.0..=crate::curve::MAX_ABS_CENTS).contains(&depth_cents) {
                        return Err(err(format!("vibrato depth {depth_cents} cents out of range")));
                    }
                    if !rate_hz.is_finite() || rate_hz <= 0.0 || rate_hz > 20.0 {
                        return Err(err(format!("vibrato rate {rate_hz} Hz outside (0, 20]")));
                    }
                }
                _ => {}
            }
        }
        techniques.sort_by_key(|t| t.kind());
        for w in techniques.windows(2) {
            if w[0].kind() == w[1].kind() {
                return Err(err(format!("duplicate technique {}", w[0].kind().name())));
            }
        }
        Ok(Self { string, fret, velocity, onset_tick, duration_tick, techniques })
    }

    pub fn string(&self) -> u8 {
        self.string
    }
    pub fn fret(&self) -> u8 {
        self.fret
    }
    pub fn velocity(&self) -> u8 {
        self.velocity
    }
    pub fn onset_tick(&self) -> u64 {
        self.onset_tick
    }
    pub fn duration_tick(&self) -> u64 {
        self.duration_tick
    }
    pub fn end_tick(&self) -> u64 {
        self.onset_tick + self.duration_tick
    }
    pub fn techniques(&self) -> &[Technique] {
        &self.techniques
    }
    pub fn has(&self, kind: TechniqueKind) -> bool {
        self.techniques.iter().any(|t| t.kind() == kind)
    }
    pub fn technique(&self, kind: TechniqueKind) -> Option<&Technique> {
        self.techniques.iter().find(|t| t.kind() == kind)
    }
}

/// One instrument part: program, tuning and its notes.
///
/// Notes are kept sorted by `(onset_tick, string)`. Strings are monophonic:
/// when a later onset lands inside an earlier note on the same string, the
/// earlier note is truncated at the new onset. Two notes starting on the same
/// string at the same tick cannot be reconciled and are rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    name: String,
    midi_program: u8,
    tuning: Tuning,
    notes: Vec<NoteEvent>,
}

impl Track {
    pub fn new(
        name: impl Into<String>,
        midi_program: u8,
        tuning: Tuning,
        mut notes: Vec<NoteEvent>,
    ) -> Result<Self, TabError> {
        if midi_program > 127 {
            return Err(TabError::invariant(None, None, format!("midi_program {midi_program} outside 0..=127")));
        }
        for (i, n) in notes.iter().enumerate() {
            if n.string as usize > tuning.string_count() {
                return Err(TabError::invariant(
                    None,
                    Some(i),
                    format!(
                        "note on string {} but tuning has {} strings",
                        n.string,
                        tuning.string_count()
                    ),
                ));
            }
        }
        notes.sort_by_key(|n| (n.onset_tick, n.string));
        // Monophonic-per-string normalization.
        let mut last_on_string: [Option<usize>; MAX_STRINGS] = [None; MAX_STRINGS];
        for i in 0..notes.len() {
            let s = notes[i].string as usize - 1;
            if let Some(prev) = last_on_string[s] {
                if notes[prev].onset_tick == notes[i].onset_tick {
                    return Err(TabError::invariant(
                        None,
                        Some(i),
                        format!(
                            "two notes on string {} share onset tick {}",
                            notes[i].string, notes[i].onset_tick
                        ),
                    ));
                }
                if notes[prev].end_tick() > notes[i].onset_tick {
                    notes[prev].duration_tick = notes[i].onset_tick - notes[prev].onset_tick;
                }
            }
            last_on_string[s] = Some(i);
        }
        Ok(Self { name: name.into(), midi_program, tuning, notes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn midi_program(&self) -> u8 {
        self.midi_program
    }
    pub fn tuning(&self) -> &Tuning {
        &self.tuning
    }
    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }
}

/// A whole score: one global tempo, shared tick resolution, tracks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tablature {
    title: String,
    tempo_bpm: f64,
    ticks_per_beat: u32,
    tempo_changes: bool,
    tracks: Vec<Track>,
}

impl Tablature {
    pub fn new(
        title: impl Into<String>,
        tempo_bpm: f64,
        ticks_per_beat: u32,
        tracks: Vec<Track>,
    ) -> Result<Self, TabError> {
        if !tempo_bpm.is_finite() || tempo_bpm <= 0.0 {
            return Err(TabError::invariant(None, None, format!("tempo {tempo_bpm} BPM must be positive")));
        }
        if ticks_per_beat == 0 {
            return Err(TabError::invariant(None, None, "ticks_per_beat must be >= 1".to_string()));
        }
        Ok(Self {
            title: title.into(),
            tempo_bpm,
            ticks_per_beat,
            tempo_changes: false,
            tracks,
        })
    }

    /// Mark the score as having had tempo changes in its source notation.
    /// Upstream converters set this; the track filter rejects such scores.
    pub fn with_tempo_changes(mut self) -> Self {
        self.tempo_changes = true;
        self
    }

    pub fn title(&self) -> &str {
        &self.title
    }
    pub fn tempo_bpm(&self) -> f64 {
        self.tempo_bpm
    }
    pub fn ticks_per_beat(&self) -> u32 {
        self.ticks_per_beat
    }
    pub fn has_tempo_changes(&self) -> bool {
        self.tempo_changes
    }
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(s: u8, onset: u64, dur: u64) -> NoteEvent {
        NoteEvent::new(s, 3, 90, onset, dur, vec![]).unwrap()
    }

    #[test]
    fn tuning_bounds() {
        assert!(Tuning::new(STANDARD_TUNING.to_vec()).is_ok());
        assert!(Tuning::new(vec![]).is_err());
        assert!(Tuning::new(vec![64, 64]).is_err()); // not strictly decreasing
        assert!(Tuning::new(vec![100]).is_err()); // out of pitch range
        // 7-string tuning is representable; the track filter owns the 6-string cut.
        assert!(Tuning::new(vec![64, 59, 55, 50, 45, 40, 35]).is_ok());
    }

    #[test]
    fn note_event_bounds() {
        assert!(NoteEvent::new(1, 20, 90, 0, 10, vec![]).is_err());
        assert!(NoteEvent::new(1, 19, 0, 0, 10, vec![]).is_err());
        assert!(NoteEvent::new(1, 19, 128, 0, 10, vec![]).is_err());
        assert!(NoteEvent::new(0, 0, 90, 0, 10, vec![]).is_err());
        assert!(NoteEvent::new(1, 0, 90, 0, 0, vec![]).is_err());
        assert!(NoteEvent::new(1, 0, 90, 0, 1, vec![Technique::Bend { semitones: 5.0 }]).is_err());
        assert!(NoteEvent::new(
            1,
            0,
            90,
            0,
            1,
            vec![Technique::Bend { semitones: 2.0 }, Technique::Bend { semitones: 1.0 }]
        )
        .is_err());
    }

    #[test]
    fn overlap_truncates_earlier_note() {
        let t = Track::new(
            "t",
            24,
            Tuning::standard(),
            vec![note(1, 0, 1000), note(1, 600, 400)],
        )
        .unwrap();
        assert_eq!(t.notes()[0].duration_tick(), 600);
        assert_eq!(t.notes()[1].duration_tick(), 400);
    }

    #[test]
    fn same_onset_same_string_rejected() {
        let err = Track::new("t", 24, Tuning::standard(), vec![note(2, 5, 10), note(2, 5, 20)]);
        assert!(matches!(err, Err(TabError::Invariant { .. })));
    }

    #[test]
    fn different_strings_may_overlap() {
        let t = Track::new("t", 24, Tuning::standard(), vec![note(1, 0, 1000), note(2, 0, 1000)]);
        assert!(t.is_ok());
    }

    #[test]
    fn note_beyond_tuning_rejected() {
        let tuning = Tuning::new(vec![64, 59, 55, 50]).unwrap();
        let err = Track::new("t", 24, tuning, vec![note(5, 0, 10)]);
        assert!(matches!(err, Err(TabError::Invariant { note: Some(0), .. })));
    }

    #[test]
    fn tablature_rejects_bad_tempo() {
        assert!(Tablature::new("x", 0.0, 960, vec![]).is_err());
        assert!(Tablature::new("x", -10.0, 960, vec![]).is_err());
        assert!(Tablature::new("x", 120.0, 0, vec![]).is_err());
    }
}
