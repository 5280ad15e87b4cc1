//! JSON interchange schema, version `synthtab-ir/1`.
//!
//! Document shape:
//!
//! ```json
//! {
//!   "schema": "synthtab-ir/1",
//!   "title": "…",
//!   "tempo_bpm": 120.0,
//!   "ticks_per_beat": 960,
//!   "tempo_changes": false,
//!   "tracks": [
//!     {
//!       "name": "…",
//!       "midi_program": 24,
//!       "tuning": [64, 59, 55, 50, 45, 40],
//!       "notes": [
//!         {"string": 1, "fret": 0, "velocity": 96,
//!          "onset_tick": 0, "duration_tick": 960,
//!          "techniques": ["hammer_on", {"bend": {"semitones": 2.0}}]}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `tempo_changes` is optional (default false); upstream converters set it on
//! scores whose source notation contained tempo changes, and the track filter
//! then rejects the whole score. Serialization is canonical: keys sorted,
//! two-space indentation, shortest round-tripping float form. Serializing the
//! same score twice yields byte-identical output.

use serde::Deserialize;

use super::{NoteEvent, TabError, Tablature, Technique, Track, Tuning};

pub const SCHEMA_VERSION: &str = "synthtab-ir/1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    schema: String,
    title: String,
    tempo_bpm: f64,
    ticks_per_beat: u32,
    #[serde(default)]
    tempo_changes: bool,
    tracks: Vec<RawTrack>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrack {
    name: String,
    midi_program: u8,
    tuning: Vec<u8>,
    notes: Vec<RawNote>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNote {
    string: u8,
    fret: u8,
    velocity: u8,
    onset_tick: u64,
    duration_tick: u64,
    #[serde(default)]
    techniques: Vec<RawTechnique>,
}

/// Wire form of a technique tag. `"none"` is accepted and dropped.
#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawTechnique {
    None,
    HammerOn,
    PullOff,
    Slide,
    Bend { semitones: f64 },
    Vibrato { depth_cents: f64, rate_hz: f64 },
    PalmMute,
    Harmonic,
    DeadNote,
}

impl RawTechnique {
    fn into_technique(self) -> Option<Technique> {
        match self {
            RawTechnique::None => None,
            RawTechnique::HammerOn => Some(Technique::HammerOn),
            RawTechnique::PullOff => Some(Technique::PullOff),
            RawTechnique::Slide => Some(Technique::Slide),
            RawTechnique::Bend { semitones } => Some(Technique::Bend { semitones }),
            RawTechnique::Vibrato { depth_cents, rate_hz } => {
                Some(Technique::Vibrato { depth_cents, rate_hz })
            }
            RawTechnique::PalmMute => Some(Technique::PalmMute),
            RawTechnique::Harmonic => Some(Technique::Harmonic),
            RawTechnique::DeadNote => Some(Technique::DeadNote),
        }
    }
}

/// Parse an interchange document into a validated [`Tablature`].
pub fn parse_interchange(bytes: &[u8]) -> Result<Tablature, TabError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TabError::Schema {
        location: format!("byte {}", e.valid_up_to()),
        message: "document is not valid UTF-8".to_string(),
    })?;

    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        TabError::Schema {
            location: format!("{} (line {}, column {})", e.path(), inner.line(), inner.column()),
            message: inner.to_string(),
        }
    })?;

    if raw.schema != SCHEMA_VERSION {
        return Err(TabError::Schema {
            location: "schema".to_string(),
            message: format!("expected \"{SCHEMA_VERSION}\", got \"{}\"", raw.schema),
        });
    }

    let mut tracks = Vec::with_capacity(raw.tracks.len());
    for (ti, rt) in raw.tracks.into_iter().enumerate() {
        let tuning = Tuning::new(rt.tuning).map_err(|e| at_track(e, ti))?;
        let mut notes = Vec::with_capacity(rt.notes.len());
        for (ni, rn) in rt.notes.into_iter().enumerate() {
            let techniques = rn.techniques.into_iter().filter_map(RawTechnique::into_technique).collect();
            let note = NoteEvent::new(
                rn.string,
                rn.fret,
                rn.velocity,
                rn.onset_tick,
                rn.duration_tick,
                techniques,
            )
            .map_err(|e| at_note(e, ti, ni))?;
            notes.push(note);
        }
        let track = Track::new(rt.name, rt.midi_program, tuning, notes).map_err(|e| at_track(e, ti))?;
        tracks.push(track);
    }

    let tab = Tablature::new(raw.title, raw.tempo_bpm, raw.ticks_per_beat, tracks)?;
    Ok(if raw.tempo_changes { tab.with_tempo_changes() } else { tab })
}

fn at_track(e: TabError, track: usize) -> TabError {
    match e {
        TabError::Invariant { note, message, .. } => TabError::Invariant { track: Some(track), note, message },
        other => other,
    }
}

fn at_note(e: TabError, track: usize, note: usize) -> TabError {
    match e {
        TabError::Invariant { message, .. } => {
            TabError::Invariant { track: Some(track), note: Some(note), message }
        }
        other => other,
    }
}

/// Serialize to the canonical interchange form.
///
/// Canonical means: sorted keys (serde_json's default map is a BTreeMap),
/// 2-space pretty printing, and a trailing newline. Output depends only on
/// the score contents.
pub fn serialize_interchange(tab: &Tablature) -> Vec<u8> {
    let mut root = serde_json::Map::new();
    root.insert("schema".into(), SCHEMA_VERSION.into());
    root.insert("title".into(), tab.title().into());
    root.insert("tempo_bpm".into(), tab.tempo_bpm().into());
    root.insert("ticks_per_beat".into(), tab.ticks_per_beat().into());
    if tab.has_tempo_changes() {
        root.insert("tempo_changes".into(), true.into());
    }
    let tracks: Vec<serde_json::Value> = tab
        .tracks()
        .iter()
        .map(|t| {
            let mut m = serde_json::Map::new();
            m.insert("name".into(), t.name().into());
            m.insert("midi_program".into(), t.midi_program().into());
            m.insert("tuning".into(), t.tuning().pitches().into());
            let notes: Vec<serde_json::Value> = t
                .notes()
                .iter()
                .map(|n| {
                    let mut nm = serde_json::Map::new();
                    nm.insert("string".into(), n.string().into());
                    nm.insert("fret".into(), n.fret().into());
                    nm.insert("velocity".into(), n.velocity().into());
                    nm.insert("onset_tick".into(), n.onset_tick().into());
                    nm.insert("duration_tick".into(), n.duration_tick().into());
                    nm.insert(
                        "techniques".into(),
                        serde_json::Value::Array(
                            n.techniques()
                                .iter()
                                .map(|t| serde_json::to_value(t).expect("technique serializes"))
                                .collect(),
                        ),
                    );
                    serde_json::Value::Object(nm)
                })
                .collect();
            m.insert("notes".into(), notes.into());
            serde_json::Value::Object(m)
        })
        .collect();
    root.insert("tracks".into(), tracks.into());

    let mut out = serde_json::to_vec_pretty(&serde_json::Value::Object(root))
        .expect("canonical document serializes");
    out.push(b'\n');
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tab::STANDARD_TUNING;

    pub(crate) const MINIMAL_DOC: &str = r#"{
      "schema": "synthtab-ir/1",
      "title": "",
      "tempo_bpm": 120,
      "ticks_per_beat": 960,
      "tracks": [
        {
          "name": "",
          "midi_program": 24,
          "tuning": [64, 59, 55, 50, 45, 40],
          "notes": [
            {"string": 1, "fret": 0, "velocity": 96, "onset_tick": 0, "duration_tick": 960}
          ]
        }
      ]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let tab = parse_interchange(MINIMAL_DOC.as_bytes()).unwrap();
        assert_eq!(tab.tracks().len(), 1);
        let t = &tab.tracks()[0];
        assert_eq!(t.notes().len(), 1);
        let n = &t.notes()[0];
        assert_eq!((n.string(), n.fret(), n.velocity()), (1, 0, 96));
        assert_eq!((n.onset_tick(), n.duration_tick()), (0, 960));
        assert_eq!(t.tuning().pitches(), STANDARD_TUNING);
        assert_eq!(tab.tempo_bpm(), 120.0);
    }

    #[test]
    fn rejects_out_of_range_fret_naming_the_note() {
        let doc = MINIMAL_DOC.replace("\"fret\": 0", "\"fret\": 25");
        match parse_interchange(doc.as_bytes()) {
            Err(TabError::Invariant { track: Some(0), note: Some(0), message }) => {
                assert!(message.contains("25"), "{message}");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let doc = MINIMAL_DOC.replace("synthtab-ir/1", "synthtab-ir/2");
        assert!(matches!(parse_interchange(doc.as_bytes()), Err(TabError::Schema { .. })));
    }

    #[test]
    fn schema_error_carries_field_path() {
        let doc = MINIMAL_DOC.replace("\"fret\": 0", "\"fret\": \"zero\"");
        match parse_interchange(doc.as_bytes()) {
            Err(TabError::Schema { location, .. }) => {
                assert!(location.contains("fret"), "{location}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(parse_interchange(b"{not json"), Err(TabError::Schema { .. })));
        assert!(matches!(parse_interchange(&[0xff, 0xfe]), Err(TabError::Schema { .. })));
    }

    #[test]
    fn unknown_technique_token_is_a_parse_error() {
        let doc = MINIMAL_DOC.replace(
            "\"duration_tick\": 960}",
            "\"duration_tick\": 960, \"techniques\": [\"tapping\"]}",
        );
        assert!(matches!(parse_interchange(doc.as_bytes()), Err(TabError::Schema { .. })));
    }

    #[test]
    fn none_technique_token_is_dropped() {
        let doc = MINIMAL_DOC.replace(
            "\"duration_tick\": 960}",
            "\"duration_tick\": 960, \"techniques\": [\"none\"]}",
        );
        let tab = parse_interchange(doc.as_bytes()).unwrap();
        assert!(tab.tracks()[0].notes()[0].techniques().is_empty());
    }

    #[test]
    fn empty_track_serializes_canonically() {
        let tab = Tablature::new(
            "empty",
            100.0,
            480,
            vec![Track::new("t", 25, Tuning::standard(), vec![]).unwrap()],
        )
        .unwrap();
        let bytes = serialize_interchange(&tab);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"notes\": []"));
        let again = parse_interchange(&bytes).unwrap();
        assert_eq!(tab, again);
    }

    #[test]
    fn serialization_is_deterministic() {
        let tab = parse_interchange(MINIMAL_DOC.as_bytes()).unwrap();
        assert_eq!(serialize_interchange(&tab), serialize_interchange(&tab));
    }

    #[test]
    fn technique_wire_forms_round_trip() {
        let doc = MINIMAL_DOC.replace(
            "\"duration_tick\": 960}",
            "\"duration_tick\": 960, \"techniques\": [{\"bend\": {\"semitones\": 2.0}}, \"palm_mute\", {\"vibrato\": {\"depth_cents\": 40.0, \"rate_hz\": 5.5}}]}",
        );
        let tab = parse_interchange(doc.as_bytes()).unwrap();
        let n = &tab.tracks()[0].notes()[0];
        assert_eq!(n.techniques().len(), 3);
        let bytes = serialize_interchange(&tab);
        let again = parse_interchange(&bytes).unwrap();
        assert_eq!(tab, again);
    }
}
