//! Track filtering and compilation of tablature notes into absolute-time
//! per-string performance events.
//!
//! Compilation never re-fingers: an event lands on exactly the string its
//! note declared. Bends, slides and vibrato are lowered to piecewise-linear
//! pitch curves; hammer-ons and pull-offs become legato events that retune a
//! ringing string instead of re-exciting it. Humanization applies bounded,
//! seeded jitter so that identical `(input, seed)` always compiles to an
//! identical score, independent of scheduling.

use std::collections::BTreeSet;

use num::{BigInt, BigRational, FromPrimitive, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{PitchCurve, MAX_ABS_CENTS};
use crate::rng::rng_for;
use crate::tab::{NoteEvent, Tablature, Technique, TechniqueKind, Track, RENDER_STRINGS};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("track has {count} strings; compilation supports at most {RENDER_STRINGS}")]
    TooManyStrings { count: usize },
    #[error("note {note}: contradictory techniques: {detail}")]
    ContradictoryTechniques { note: usize, detail: String },
    #[error("invalid performance score: {0}")]
    InvalidScore(String),
}

/// Why a track (or its whole score) was dropped by the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TempoChange,
    TooManyStrings,
    ProgramOutOfRange,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::TempoChange => "tempo_change",
            RejectReason::TooManyStrings => "too_many_strings",
            RejectReason::ProgramOutOfRange => "program_out_of_range",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of [`filter_tracks`]: every track index lands in exactly one list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<usize>,
    pub rejected: Vec<(usize, RejectReason)>,
}

/// MIDI programs 24–27: nylon/steel acoustic, clean/jazz electric.
pub fn default_programs() -> BTreeSet<u8> {
    [24, 25, 26, 27].into_iter().collect()
}

/// Decide which tracks of a score are renderable.
///
/// A score flagged with tempo changes is rejected wholesale; otherwise a
/// track is kept iff it has at most six strings and its program is in
/// `programs`.
pub fn filter_tracks(tab: &Tablature, programs: &BTreeSet<u8>) -> FilterReport {
    let mut report = FilterReport { kept: Vec::new(), rejected: Vec::new() };
    for (i, track) in tab.tracks().iter().enumerate() {
        if tab.has_tempo_changes() {
            report.rejected.push((i, RejectReason::TempoChange));
        } else if track.tuning().string_count() > RENDER_STRINGS {
            report.rejected.push((i, RejectReason::TooManyStrings));
        } else if !programs.contains(&track.midi_program()) {
            report.rejected.push((i, RejectReason::ProgramOutOfRange));
        } else {
            report.kept.push(i);
        }
    }
    report
}

/// Convert a tick count to seconds: `tick * 60 / (bpm * ticks_per_beat)`.
///
/// Evaluated in exact rational arithmetic (the BPM participates as the exact
/// rational value of its float representation) and rounded to the nearest
/// nanosecond at the boundary.
pub fn tick_to_seconds(tick: u64, tempo_bpm: f64, ticks_per_beat: u32) -> f64 {
    assert!(tempo_bpm > 0.0 && tempo_bpm.is_finite(), "tempo must be positive");
    assert!(ticks_per_beat > 0, "ticks_per_beat must be positive");
    let bpm = BigRational::from_f64(tempo_bpm).expect("finite tempo");
    let seconds = BigRational::from_integer(BigInt::from(tick)) * BigInt::from(60u32)
        / (bpm * BigInt::from(ticks_per_beat));
    round_to_nanos(&seconds)
}

fn round_to_nanos(seconds: &BigRational) -> f64 {
    let nanos = (seconds * BigInt::from(1_000_000_000u64)).round();
    nanos.to_f64().unwrap_or(f64::MAX) / 1e9
}

/// Bounded stochastic performance jitter. All ranges may be zero, in which
/// case compilation is the identity on timing and dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanizeConfig {
    /// Onset jitter bound, milliseconds either way.
    pub timing_ms: f64,
    /// Velocity jitter bound, MIDI velocity steps either way.
    pub velocity_range: u8,
    /// Vibrato depth/rate scale factors drawn from `[1 - v, 1 + v]`.
    pub vibrato_variation: f64,
}

impl Default for HumanizeConfig {
    fn default() -> Self {
        Self { timing_ms: 8.0, velocity_range: 6, vibrato_variation: 0.25 }
    }
}

impl HumanizeConfig {
    pub fn none() -> Self {
        Self { timing_ms: 0.0, velocity_range: 0, vibrato_variation: 0.0 }
    }
}

/// How a voice is set in motion for an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    /// Fresh pluck: inject an excitation burst.
    Pluck,
    /// Hammer-on / pull-off: retune the ringing string, no new burst.
    Legato,
}

/// How strongly the string is damped while the event sounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    Normal,
    /// Palm mute: roughly 10x the loop loss.
    Muted,
    /// Dead note: roughly 100x the loop loss.
    Dead,
}

/// One sounding note, in seconds, on one string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEvent {
    /// String 1–6, exactly as declared in the tablature.
    pub string: u8,
    /// Fretted position (labels use this, not the sounding pitch).
    pub fret: u8,
    /// Nominal MIDI pitch: open-string pitch + fret.
    pub pitch: u8,
    pub onset_s: f64,
    pub duration_s: f64,
    pub velocity: u8,
    /// Offset from `pitch` in cents over the life of the event.
    pub pitch_curve: PitchCurve,
    pub excitation: Excitation,
    pub damping: Damping,
    /// Source technique tags, kept for keyswitch emission on MIDI export.
    pub techniques: Vec<TechniqueKind>,
}

impl PerformanceEvent {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

/// Per-string event streams for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceScore {
    strings: Vec<Vec<PerformanceEvent>>,
    total_duration_s: f64,
}

impl PerformanceScore {
    pub fn new(strings: Vec<Vec<PerformanceEvent>>, total_duration_s: f64) -> Result<Self, CompileError> {
        if strings.len() != RENDER_STRINGS {
            return Err(CompileError::InvalidScore(format!(
                "expected {RENDER_STRINGS} string lanes, got {}",
                strings.len()
            )));
        }
        let mut max_end: f64 = 0.0;
        for (si, lane) in strings.iter().enumerate() {
            let mut prev_end = f64::NEG_INFINITY;
            for ev in lane {
                if ev.string as usize != si + 1 {
                    return Err(CompileError::InvalidScore(format!(
                        "event on lane {} declares string {}",
                        si + 1,
                        ev.string
                    )));
                }
                if ev.duration_s <= 0.0 || ev.onset_s < 0.0 {
                    return Err(CompileError::InvalidScore("event with non-positive duration or negative onset".into()));
                }
                if ev.onset_s < prev_end {
                    return Err(CompileError::InvalidScore(format!(
                        "overlapping events on string {}",
                        si + 1
                    )));
                }
                if ev.pitch_curve.max_abs_cents() > MAX_ABS_CENTS {
                    return Err(CompileError::InvalidScore("pitch curve exceeds ±400 cents".into()));
                }
                prev_end = ev.end_s();
                max_end = max_end.max(prev_end);
            }
        }
        if total_duration_s < max_end {
            return Err(CompileError::InvalidScore("total duration shorter than last event end".into()));
        }
        Ok(Self { strings, total_duration_s })
    }

    /// Events of a 1-based string, time-sorted and non-overlapping.
    pub fn string_events(&self, string: u8) -> &[PerformanceEvent] {
        &self.strings[string as usize - 1]
    }

    pub fn lanes(&self) -> &[Vec<PerformanceEvent>] {
        &self.strings
    }

    pub fn total_duration_s(&self) -> f64 {
        self.total_duration_s
    }

    pub fn event_count(&self) -> usize {
        self.strings.iter().map(Vec::len).sum()
    }

    pub fn iter_events(&self) -> impl Iterator<Item = &PerformanceEvent> {
        self.strings.iter().flatten()
    }
}

/// Breakpoint density for sampling vibrato into piecewise-linear segments.
const VIBRATO_POINTS_PER_CYCLE: f64 = 24.0;
const MAX_CURVE_POINTS: usize = 50_000;

fn contradiction(note: &NoteEvent) -> Option<String> {
    let pitchy = [TechniqueKind::Bend, TechniqueKind::Slide, TechniqueKind::Vibrato]
        .into_iter()
        .filter(|&k| note.has(k))
        .collect::<Vec<_>>();
    if note.has(TechniqueKind::DeadNote) && !pitchy.is_empty() {
        return Some(format!(
            "dead_note cannot combine with {}",
            pitchy.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
        ));
    }
    if note.has(TechniqueKind::HammerOn) && note.has(TechniqueKind::PullOff) {
        return Some("hammer_on and pull_off are mutually exclusive".to_string());
    }
    None
}

/// Pitch of the next note on the same string, for slide targets.
fn next_pitch_on_string(track: &Track, idx: usize) -> Option<u8> {
    let this = &track.notes()[idx];
    track.notes()[idx + 1..]
        .iter()
        .find(|n| n.string() == this.string())
        .and_then(|n| track.tuning().open_pitch(n.string()).map(|open| open + n.fret()))
}

struct CurveSpec {
    bend_cents: Option<f64>,
    slide_cents: Option<f64>,
    vibrato: Option<(f64, f64)>, // depth cents, rate hz
}

/// Lower techniques to breakpoints over `[0, dur]`.
///
/// Bend: linear rise over the first half of the note, hold after. Slide:
/// linear glide over the whole note toward the next note on the string.
/// Vibrato: sine at `rate_hz`, sampled densely. Components sum; the result
/// clamps to ±400 cents.
fn build_curve(spec: &CurveSpec, dur: f64) -> PitchCurve {
    let mut times: Vec<f64> = vec![0.0, dur];
    if spec.bend_cents.is_some() {
        times.push(dur * 0.5);
    }
    if let Some((_, rate)) = spec.vibrato {
        let n = ((dur * rate * VIBRATO_POINTS_PER_CYCLE).ceil() as usize)
            .clamp(8, MAX_CURVE_POINTS);
        for i in 1..n {
            times.push(dur * i as f64 / n as f64);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let value = |t: f64| -> f64 {
        let mut cents = 0.0;
        if let Some(b) = spec.bend_cents {
            cents += if t < dur * 0.5 { b * t / (dur * 0.5) } else { b };
        }
        if let Some(s) = spec.slide_cents {
            cents += s * t / dur;
        }
        if let Some((depth, rate)) = spec.vibrato {
            cents += depth * (std::f64::consts::TAU * rate * t).sin();
        }
        cents.clamp(-MAX_ABS_CENTS, MAX_ABS_CENTS)
    };

    let points: Vec<(f64, f64)> = times.into_iter().map(|t| (t, value(t))).collect();
    PitchCurve::from_points(points).expect("curve built from sorted times is valid")
}

/// Compile one filtered track into a [`PerformanceScore`].
///
/// Humanization draws per-note sub-seeds derived from `(seed, note index)`;
/// callers that process many tracks derive a per-track seed first so that
/// results do not depend on scheduling order. Onsets jitter by at most
/// `timing_ms`, velocities stay clamped to `[1, 127]`, and per-string event
/// order always matches note order (post-jitter onsets clamp to the previous
/// event's end).
pub fn compile(
    track: &Track,
    tempo_bpm: f64,
    ticks_per_beat: u32,
    humanize: &HumanizeConfig,
    seed: u64,
) -> Result<PerformanceScore, CompileError> {
    if track.tuning().string_count() > RENDER_STRINGS {
        return Err(CompileError::TooManyStrings { count: track.tuning().string_count() });
    }

    let mut lanes: Vec<Vec<PerformanceEvent>> = vec![Vec::new(); RENDER_STRINGS];
    let mut total: f64 = 0.0;

    for (idx, note) in track.notes().iter().enumerate() {
        if let Some(detail) = contradiction(note) {
            return Err(CompileError::ContradictoryTechniques { note: idx, detail });
        }

        let mut rng = rng_for(seed, &[idx as u64]);
        // Fixed draw order keeps streams aligned regardless of which
        // techniques are present.
        let t_jit = rng.random_range(-humanize.timing_ms..=humanize.timing_ms) / 1000.0;
        let v_jit = rng.random_range(-(humanize.velocity_range as i32)..=humanize.velocity_range as i32);
        let v = humanize.vibrato_variation;
        let depth_factor = rng.random_range(1.0 - v..=1.0 + v);
        let rate_factor = rng.random_range(1.0 - v..=1.0 + v);

        let nominal_onset = tick_to_seconds(note.onset_tick(), tempo_bpm, ticks_per_beat);
        let nominal_end = tick_to_seconds(note.end_tick(), tempo_bpm, ticks_per_beat);
        let duration = nominal_end - nominal_onset;
        let onset = (nominal_onset + t_jit).max(0.0);
        let velocity = (note.velocity() as i32 + v_jit).clamp(1, 127) as u8;

        let open = track
            .tuning()
            .open_pitch(note.string())
            .expect("track validation bounds string indices");
        let pitch = open + note.fret();

        let bend_cents = note.technique(TechniqueKind::Bend).map(|t| match t {
            Technique::Bend { semitones } => semitones * 100.0,
            _ => unreachable!(),
        });
        let slide_cents = if note.has(TechniqueKind::Slide) {
            next_pitch_on_string(track, idx).map(|next| {
                ((next as f64 - pitch as f64) * 100.0).clamp(-MAX_ABS_CENTS, MAX_ABS_CENTS)
            })
        } else {
            None
        };
        let vibrato = note.technique(TechniqueKind::Vibrato).map(|t| match t {
            Technique::Vibrato { depth_cents, rate_hz } => (
                (depth_cents * depth_factor).clamp(0.0, MAX_ABS_CENTS),
                (rate_hz * rate_factor).max(0.01),
            ),
            _ => unreachable!(),
        });

        let spec = CurveSpec { bend_cents, slide_cents, vibrato };
        let no_motion = spec.bend_cents.is_none() && spec.slide_cents.is_none() && spec.vibrato.is_none();

        let excitation = if note.has(TechniqueKind::HammerOn) || note.has(TechniqueKind::PullOff) {
            Excitation::Legato
        } else {
            Excitation::Pluck
        };
        let damping = if note.has(TechniqueKind::DeadNote) {
            Damping::Dead
        } else if note.has(TechniqueKind::PalmMute) {
            Damping::Muted
        } else {
            Damping::Normal
        };

        let lane = &mut lanes[note.string() as usize - 1];
        let onset = match lane.last() {
            Some(prev) => onset.max(prev.end_s()),
            None => onset,
        };

        let curve = if no_motion { PitchCurve::flat(duration) } else { build_curve(&spec, duration) };

        let ev = PerformanceEvent {
            string: note.string(),
            fret: note.fret(),
            pitch,
            onset_s: onset,
            duration_s: duration,
            velocity,
            pitch_curve: curve,
            excitation,
            damping,
            techniques: note.techniques().iter().map(Technique::kind).collect(),
        };
        total = total.max(ev.end_s());
        lane.push(ev);
    }

    PerformanceScore::new(lanes, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tab::{NoteEvent, Tablature, Tuning};

    fn plain_track(notes: Vec<NoteEvent>) -> Track {
        Track::new("t", 24, Tuning::standard(), notes).unwrap()
    }

    #[test]
    fn tick_zero_is_zero_seconds() {
        assert_eq!(tick_to_seconds(0, 120.0, 960), 0.0);
    }

    #[test]
    fn one_beat_at_120_bpm_is_half_a_second() {
        assert_eq!(tick_to_seconds(960, 120.0, 960), 0.5);
    }

    #[test]
    fn three_beats_at_90_bpm() {
        // 1440 ticks / 480 tpq = 3 beats; a beat at 90 BPM is 2/3 s.
        assert!((tick_to_seconds(1440, 90.0, 480) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn filter_keeps_guitar_programs() {
        let mk = |prog: u8, strings: usize| {
            let pitches = if strings <= 6 {
                crate::tab::STANDARD_TUNING[..strings].to_vec()
            } else {
                vec![64, 59, 55, 50, 45, 40, 35]
            };
            Track::new("t", prog, Tuning::new(pitches).unwrap(), vec![]).unwrap()
        };
        let tab = Tablature::new("x", 120.0, 960, vec![mk(24, 6), mk(30, 6), mk(27, 7)]).unwrap();
        let report = filter_tracks(&tab, &default_programs());
        assert_eq!(report.kept, vec![0]);
        assert_eq!(
            report.rejected,
            vec![(1, RejectReason::ProgramOutOfRange), (2, RejectReason::TooManyStrings)]
        );
    }

    #[test]
    fn tempo_change_rejects_whole_score() {
        let tab = Tablature::new(
            "x",
            120.0,
            960,
            vec![Track::new("t", 24, Tuning::standard(), vec![]).unwrap()],
        )
        .unwrap()
        .with_tempo_changes();
        let report = filter_tracks(&tab, &default_programs());
        assert!(report.kept.is_empty());
        assert_eq!(report.rejected, vec![(0, RejectReason::TempoChange)]);
    }

    #[test]
    fn plain_note_compiles_flat_on_declared_string() {
        // String 3 open is G3 (55); fret 5 sounds C4 (60).
        let track = plain_track(vec![NoteEvent::new(3, 5, 96, 0, 960, vec![]).unwrap()]);
        let score = compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap();
        let ev = &score.string_events(3)[0];
        assert_eq!(ev.pitch, 60);
        assert_eq!(ev.excitation, Excitation::Pluck);
        assert!(ev.pitch_curve.is_flat(1e-12));
        assert_eq!(ev.onset_s, 0.0);
        assert_eq!(ev.duration_s, 0.5);
    }

    #[test]
    fn bend_ramps_to_target_by_half_duration_then_holds() {
        let track = plain_track(vec![NoteEvent::new(
            2,
            5,
            96,
            0,
            960,
            vec![Technique::Bend { semitones: 2.0 }],
        )
        .unwrap()]);
        let score = compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap();
        let curve = &score.string_events(2)[0].pitch_curve;
        let dur = score.string_events(2)[0].duration_s;
        // Oracle: sample the documented template at ten points.
        for i in 0..=10 {
            let t = dur * i as f64 / 10.0;
            let expected = if t < dur * 0.5 { 200.0 * t / (dur * 0.5) } else { 200.0 };
            assert!(
                (curve.value_at(t) - expected).abs() < 1e-9,
                "t={t} got={} want={expected}",
                curve.value_at(t)
            );
        }
    }

    #[test]
    fn slide_glides_linearly_to_next_note_on_string() {
        let track = plain_track(vec![
            NoteEvent::new(1, 5, 96, 0, 960, vec![Technique::Slide]).unwrap(),
            NoteEvent::new(1, 9, 96, 960, 960, vec![]).unwrap(),
        ]);
        let score = compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap();
        let ev = &score.string_events(1)[0];
        assert!((ev.pitch_curve.value_at(0.0) - 0.0).abs() < 1e-9);
        assert!((ev.pitch_curve.value_at(ev.duration_s) - 400.0).abs() < 1e-9);
        assert!((ev.pitch_curve.value_at(ev.duration_s / 2.0) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn legato_and_damping_modes() {
        let track = plain_track(vec![
            NoteEvent::new(4, 2, 96, 0, 480, vec![Technique::HammerOn]).unwrap(),
            NoteEvent::new(4, 4, 96, 480, 480, vec![Technique::PalmMute]).unwrap(),
            NoteEvent::new(4, 0, 96, 960, 480, vec![Technique::DeadNote]).unwrap(),
        ]);
        let score = compile(&track, 120.0, 960, &HumanizeConfig::none(), 0).unwrap();
        let evs = score.string_events(4);
        assert_eq!(evs[0].excitation, Excitation::Legato);
        assert_eq!(evs[1].damping, Damping::Muted);
        assert_eq!(evs[2].damping, Damping::Dead);
    }

    #[test]
    fn dead_note_with_bend_is_contradictory() {
        let track = plain_track(vec![NoteEvent::new(
            1,
            1,
            96,
            0,
            480,
            vec![Technique::DeadNote, Technique::Bend { semitones: 1.0 }],
        )
        .unwrap()]);
        assert!(matches!(
            compile(&track, 120.0, 960, &HumanizeConfig::none(), 0),
            Err(CompileError::ContradictoryTechniques { note: 0, .. })
        ));
    }

    #[test]
    fn same_seed_compiles_identically() {
        let notes = (0..20)
            .map(|i| {
                NoteEvent::new(
                    (i % 6 + 1) as u8,
                    (i % 7) as u8,
                    80,
                    i as u64 * 240,
                    240,
                    if i % 3 == 0 {
                        vec![Technique::Vibrato { depth_cents: 30.0, rate_hz: 5.0 }]
                    } else {
                        vec![]
                    },
                )
                .unwrap()
            })
            .collect::<Vec<_>>();
        let track = plain_track(notes);
        let a = compile(&track, 120.0, 960, &HumanizeConfig::default(), 7).unwrap();
        let b = compile(&track, 120.0, 960, &HumanizeConfig::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = compile(&track, 120.0, 960, &HumanizeConfig::default(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn seven_string_track_does_not_compile() {
        let tuning = Tuning::new(vec![64, 59, 55, 50, 45, 40, 35]).unwrap();
        let track = Track::new("t", 27, tuning, vec![]).unwrap();
        assert!(matches!(
            compile(&track, 120.0, 960, &HumanizeConfig::none(), 0),
            Err(CompileError::TooManyStrings { count: 7 })
        ));
    }
}
