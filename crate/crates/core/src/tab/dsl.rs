//! Line-oriented tab DSL for writing fixtures by hand.
//!
//! ```text
//! # comment
//! tempo 120
//! tpq 960
//! track 27 Lead
//! tuning 64 59 55 50 45 40
//! note s1 f0 v96 @0 d960
//! note s3 f5 v80 @960 d480 bend:2 palm_mute
//! ```
//!
//! One directive per line. `tempo` defaults to 120 and `tpq` to 960 when
//! omitted. A `note` before any `track` opens an implicit track with program
//! 24, standard tuning and an empty name. Technique tokens: `hammer_on`,
//! `pull_off`, `slide`, `palm_mute`, `harmonic`, `dead_note`, `none`,
//! `bend:<semitones>`, `vibrato:<depth_cents>:<rate_hz>`.

use super::{NoteEvent, TabError, Tablature, Technique, Track, Tuning};

#[derive(Default)]
struct PendingTrack {
    name: String,
    program: u8,
    tuning: Option<Tuning>,
    notes: Vec<NoteEvent>,
}

struct Parser {
    tempo_bpm: f64,
    ticks_per_beat: u32,
    title: String,
    tracks: Vec<Track>,
    current: Option<PendingTrack>,
}

fn dsl_err(line: usize, message: impl Into<String>) -> TabError {
    TabError::Dsl { line: line + 1, message: message.into() }
}

impl Parser {
    fn new() -> Self {
        Self {
            tempo_bpm: 120.0,
            ticks_per_beat: 960,
            title: String::new(),
            tracks: Vec::new(),
            current: None,
        }
    }

    fn flush(&mut self, line: usize) -> Result<(), TabError> {
        if let Some(p) = self.current.take() {
            let tuning = p.tuning.unwrap_or_else(Tuning::standard);
            let track = Track::new(p.name, p.program, tuning, p.notes)
                .map_err(|e| dsl_err(line, e.to_string()))?;
            self.tracks.push(track);
        }
        Ok(())
    }

    fn current_mut(&mut self) -> &mut PendingTrack {
        self.current.get_or_insert_with(|| PendingTrack {
            program: 24,
            ..PendingTrack::default()
        })
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T, TabError> {
    token.parse().map_err(|_| dsl_err(line, format!("invalid {what}: `{token}`")))
}

fn parse_tagged(line: usize, token: &str, tag: char, what: &str) -> Result<u64, TabError> {
    match token.strip_prefix(tag) {
        Some(rest) => parse_num(line, rest, what),
        None => Err(dsl_err(line, format!("expected `{tag}<{what}>`, got `{token}`"))),
    }
}

fn parse_technique(line: usize, token: &str) -> Result<Option<Technique>, TabError> {
    let mut parts = token.split(':');
    let head = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let fixed = |t: Technique| {
        if args.is_empty() {
            Ok(Some(t))
        } else {
            Err(dsl_err(line, format!("technique `{head}` takes no arguments")))
        }
    };
    match head {
        "none" => {
            if args.is_empty() {
                Ok(None)
            } else {
                Err(dsl_err(line, "`none` takes no arguments"))
            }
        }
        "hammer_on" => fixed(Technique::HammerOn),
        "pull_off" => fixed(Technique::PullOff),
        "slide" => fixed(Technique::Slide),
        "palm_mute" => fixed(Technique::PalmMute),
        "harmonic" => fixed(Technique::Harmonic),
        "dead_note" => fixed(Technique::DeadNote),
        "bend" => {
            if args.len() != 1 {
                return Err(dsl_err(line, "expected `bend:<semitones>`"));
            }
            Ok(Some(Technique::Bend { semitones: parse_num(line, args[0], "bend semitones")? }))
        }
        "vibrato" => {
            if args.len() != 2 {
                return Err(dsl_err(line, "expected `vibrato:<depth_cents>:<rate_hz>`"));
            }
            Ok(Some(Technique::Vibrato {
                depth_cents: parse_num(line, args[0], "vibrato depth")?,
                rate_hz: parse_num(line, args[1], "vibrato rate")?,
            }))
        }
        other => Err(dsl_err(line, format!("unknown technique `{other}`"))),
    }
}

/// Parse DSL text into a [`Tablature`]. Errors carry 1-based line numbers.
pub fn parse_tab_dsl(text: &str) -> Result<Tablature, TabError> {
    let mut p = Parser::new();
    let mut last_line = 0;

    for (line, raw) in text.lines().enumerate() {
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let directive = toks.next().unwrap();
        match directive {
            "title" => {
                p.title = content["title".len()..].trim().to_string();
            }
            "tempo" => {
                let v = toks.next().ok_or_else(|| dsl_err(line, "expected `tempo <bpm>`"))?;
                p.tempo_bpm = parse_num(line, v, "tempo")?;
                if toks.next().is_some() {
                    return Err(dsl_err(line, "trailing tokens after tempo"));
                }
            }
            "tpq" => {
                let v = toks.next().ok_or_else(|| dsl_err(line, "expected `tpq <ticks>`"))?;
                p.ticks_per_beat = parse_num(line, v, "ticks per beat")?;
                if toks.next().is_some() {
                    return Err(dsl_err(line, "trailing tokens after tpq"));
                }
            }
            "track" => {
                p.flush(line)?;
                let prog = toks.next().ok_or_else(|| dsl_err(line, "expected `track <program> [name]`"))?;
                let program: u8 = parse_num(line, prog, "midi program")?;
                let name = toks.collect::<Vec<_>>().join(" ");
                p.current = Some(PendingTrack { name, program, tuning: None, notes: Vec::new() });
            }
            "tuning" => {
                let pitches = toks
                    .map(|t| parse_num::<u8>(line, t, "tuning pitch"))
                    .collect::<Result<Vec<_>, _>>()?;
                let tuning = Tuning::new(pitches).map_err(|e| dsl_err(line, e.to_string()))?;
                let cur = p.current_mut();
                if !cur.notes.is_empty() {
                    return Err(dsl_err(line, "tuning must precede the track's notes"));
                }
                cur.tuning = Some(tuning);
            }
            "note" => {
                let mut fields = [None::<u64>; 5]; // s f v @ d
                let mut techniques = Vec::new();
                for tok in toks {
                    let slot = match tok.chars().next() {
                        Some('s') if tok[1..].chars().all(|c| c.is_ascii_digit()) && tok.len() > 1 => Some(0),
                        Some('f') if tok[1..].chars().all(|c| c.is_ascii_digit()) && tok.len() > 1 => Some(1),
                        Some('v') if tok[1..].chars().all(|c| c.is_ascii_digit()) && tok.len() > 1 => Some(2),
                        Some('@') => Some(3),
                        Some('d') if tok[1..].chars().all(|c| c.is_ascii_digit()) && tok.len() > 1 => Some(4),
                        _ => None,
                    };
                    match slot {
                        Some(i) => {
                            let tag = ['s', 'f', 'v', '@', 'd'][i];
                            let what = ["string", "fret", "velocity", "onset tick", "duration ticks"][i];
                            if fields[i].is_some() {
                                return Err(dsl_err(line, format!("duplicate `{tag}` field")));
                            }
                            fields[i] = Some(parse_tagged(line, tok, tag, what)?);
                        }
                        None => {
                            if let Some(t) = parse_technique(line, tok)? {
                                techniques.push(t);
                            }
                        }
                    }
                }
                let [s, f, v, onset, dur] = fields;
                let missing = |x: Option<u64>, name: &str| {
                    x.ok_or_else(|| dsl_err(line, format!("note is missing the {name} field")))
                };
                let note = NoteEvent::new(
                    missing(s, "string (s)")? as u8,
                    missing(f, "fret (f)")? as u8,
                    missing(v, "velocity (v)")? as u8,
                    missing(onset, "onset (@)")?,
                    missing(dur, "duration (d)")?,
                    techniques,
                )
                .map_err(|e| dsl_err(line, e.to_string()))?;
                p.current_mut().notes.push(note);
            }
            other => return Err(dsl_err(line, format!("unknown directive `{other}`"))),
        }
    }

    p.flush(last_line)?;
    Tablature::new(p.title, p.tempo_bpm, p.ticks_per_beat, p.tracks)
        .map_err(|e| dsl_err(last_line, e.to_string()))
}
