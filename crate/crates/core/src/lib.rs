//! String-accurate guitar tablature synthesis.
//!
//! The crate turns symbolic tablature into rendered audio and frame-level
//! training targets:
//!
//! - [`tab`] — the tablature model, JSON interchange schema and fixture DSL;
//! - [`compile`] — track filtering and compilation into per-string,
//!   absolute-time performance events with pitch curves and humanization;
//! - [`midi`] — Standard MIDI File export (six channels, keyswitches,
//!   pitch-wheel streams) for external samplers;
//! - [`synth`] — extended Karplus–Strong rendering, mixing and 24-bit WAV;
//! - [`labels`] — frame-aligned binary string/fret label matrices;
//! - [`metrics`] — tablature precision/recall/F1 over label matrices.

pub mod compile;
pub mod curve;
pub mod labels;
pub mod metrics;
pub mod midi;
pub mod rng;
pub mod synth;
pub mod tab;

pub use compile::{
    compile, default_programs, filter_tracks, tick_to_seconds, CompileError, Damping, Excitation,
    FilterReport, HumanizeConfig, PerformanceEvent, PerformanceScore, RejectReason,
};
pub use curve::PitchCurve;
pub use labels::{labels_from_score, FrameLabelMatrix, LabelError};
pub use metrics::{aggregate, tab_f1, AggregateMode, MetricReport, MetricsError};
pub use midi::{export_smf, read_smf, KeyswitchMap, MidiError};
pub use synth::{
    mix, render_score, render_string, AudioBuffer, GuitarFamily, SynthError, TimbreProfile,
};
pub use tab::{
    parse_interchange, parse_tab_dsl, serialize_interchange, NoteEvent, TabError, Tablature,
    Technique, TechniqueKind, Track, Tuning,
};
