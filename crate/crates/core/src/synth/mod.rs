//! Plucked-string rendering.
//!
//! Each string is an extended Karplus–Strong voice: a noise burst shaped by
//! brightness and pick-position filters excites a fractional-delay loop with
//! a two-point averaging filter. The averager's exact half-sample delay and
//! Catmull-Rom interpolation keep the loop tunable to within a few cents
//! across the guitar range; pitch curves retune the loop per sample, so
//! bends, slides and vibrato glide instead of stepping. Legato events retune
//! the ringing loop without a new burst. Per-string stems are rendered
//! independently and mixed afterwards.

pub mod wav;

pub use wav::{read_wav, wav_bytes, write_wav};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::{Damping, Excitation, PerformanceEvent, PerformanceScore};
use crate::rng::rng_for;
use crate::tab::RENDER_STRINGS;

/// Default output rate.
pub const DEFAULT_SAMPLE_RATE: u32 = 22050;
/// Silence appended after the last event so releases ring out.
pub const RELEASE_TAIL_S: f64 = 0.5;
/// Peak amplitude of a full-velocity excitation burst.
const EXCITE_PEAK: f64 = 0.85;
/// Loop gain once an event has released.
const RELEASE_GAIN: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid timbre profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("fundamental {freq_hz:.1} Hz exceeds sr/4 = {limit_hz:.1} Hz; delay line too short")]
    PitchTooHigh { freq_hz: f64, limit_hz: f64 },
    #[error("events must be time-sorted and non-overlapping (string {string})")]
    UnorderedEvents { string: u8 },
    #[error("sample rate mismatch: {a} vs {b}")]
    SampleRateMismatch { a: u32, b: u32 },
    #[error("mix called with {stems} stems but {gains} gains")]
    GainCountMismatch { stems: usize, gains: usize },
    #[error("mix needs at least one stem")]
    NoStems,
    #[error("wav: {0}")]
    Wav(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Instrument family, keyed to MIDI programs 24–27.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuitarFamily {
    AcousticNylon,
    AcousticSteel,
    ElectricClean,
    ElectricJazz,
}

impl GuitarFamily {
    pub fn from_program(program: u8) -> Option<Self> {
        match program {
            24 => Some(GuitarFamily::AcousticNylon),
            25 => Some(GuitarFamily::AcousticSteel),
            26 => Some(GuitarFamily::ElectricClean),
            27 => Some(GuitarFamily::ElectricJazz),
            _ => None,
        }
    }

    pub fn program(self) -> u8 {
        match self {
            GuitarFamily::AcousticNylon => 24,
            GuitarFamily::AcousticSteel => 25,
            GuitarFamily::ElectricClean => 26,
            GuitarFamily::ElectricJazz => 27,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GuitarFamily::AcousticNylon => "acoustic_nylon",
            GuitarFamily::AcousticSteel => "acoustic_steel",
            GuitarFamily::ElectricClean => "electric_clean",
            GuitarFamily::ElectricJazz => "electric_jazz",
        }
    }
}

impl std::fmt::Display for GuitarFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One body-resonance peaking filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyMode {
    pub freq_hz: f64,
    pub gain_db: f64,
    pub q: f64,
}

/// Synthesizer configuration standing in for a sampler preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreProfile {
    pub name: String,
    pub family: GuitarFamily,
    /// 0 = dark excitation, 1 = raw white noise.
    pub excitation_brightness: f64,
    /// Per-period loop gain; must stay below 1 for stability.
    pub loop_damping: f64,
    /// Pick position as a fraction of the string length.
    pub pick_position: f64,
    pub body_resonance: Vec<BodyMode>,
    pub output_gain_db: f64,
}

impl TimbreProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: &str| {
            Err(SynthError::InvalidProfile { name: self.name.clone(), reason: reason.to_string() })
        };
        if !(0.0..=1.0).contains(&self.excitation_brightness) {
            return fail("excitation_brightness outside [0, 1]");
        }
        if !(self.loop_damping > 0.0 && self.loop_damping < 1.0) {
            return fail("loop_damping outside (0, 1)");
        }
        if !(self.pick_position > 0.0 && self.pick_position < 1.0) {
            return fail("pick_position outside (0, 1)");
        }
        for m in &self.body_resonance {
            if !(m.freq_hz > 0.0 && m.freq_hz.is_finite() && m.q > 0.0 && m.gain_db.is_finite()) {
                return fail("body resonance mode with non-finite or non-positive parameters");
            }
        }
        if !self.output_gain_db.is_finite() {
            return fail("output_gain_db not finite");
        }
        Ok(())
    }

    /// Loop gain for a damping mode: muted ≈ 10x the loop loss, dead ≈ 100x.
    fn gain_for(&self, damping: Damping) -> f64 {
        let loss = 1.0 - self.loop_damping;
        match damping {
            Damping::Normal => self.loop_damping,
            Damping::Muted => (1.0 - 10.0 * loss).max(0.35),
            Damping::Dead => (1.0 - 100.0 * loss).max(0.1),
        }
    }
}

/// Mono audio at a fixed sample rate. Samples are stored as f64 and only
/// quantized to 24 bits when written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0);
        Self { samples, sample_rate_hz }
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

pub fn midi_pitch_to_hz(pitch: f64) -> f64 {
    440.0 * ((pitch - 69.0) / 12.0).exp2()
}

// ---------------------------------------------------------------------------
// Voice
// ---------------------------------------------------------------------------

#[inline]
fn catmull_rom(ym1: f64, y0: f64, y1: f64, y2: f64, mu: f64) -> f64 {
    let c0 = y0;
    let c1 = 0.5 * (y1 - ym1);
    let c2 = ym1 - 2.5 * y0 + 2.0 * y1 - 0.5 * y2;
    let c3 = 0.5 * (y2 - ym1) + 1.5 * (y0 - y1);
    ((c3 * mu + c2) * mu + c1) * mu + c0
}

struct StringVoice {
    buf: Vec<f64>,
    mask: usize,
    write: usize,
    avg_state: f64,
    /// Fractional read delay; total loop period is `delay + 0.5` samples.
    delay: f64,
    gain: f64,
}

impl StringVoice {
    fn new(sr: u32) -> Self {
        // Room for the lowest renderable fundamental (~25 Hz) plus slack.
        let min_len = (sr as f64 / 25.0) as usize + 8;
        let len = min_len.next_power_of_two();
        Self {
            buf: vec![0.0; len],
            mask: len - 1,
            write: 0,
            avg_state: 0.0,
            delay: 100.0,
            gain: RELEASE_GAIN,
        }
    }

    #[inline]
    fn read_fractional(&self) -> f64 {
        let pos = self.write as f64 - self.delay;
        let i0 = pos.floor();
        let mu = pos - i0;
        let i0 = i0 as isize;
        let len = self.buf.len() as isize;
        let idx = |i: isize| -> usize { (i.rem_euclid(len)) as usize & self.mask };
        catmull_rom(
            self.buf[idx(i0 - 1)],
            self.buf[idx(i0)],
            self.buf[idx(i0 + 1)],
            self.buf[idx(i0 + 2)],
            mu,
        )
    }

    #[inline]
    fn tick(&mut self, input: f64) -> f64 {
        let delayed = self.read_fractional();
        let filtered = 0.5 * (delayed + self.avg_state);
        self.avg_state = delayed;
        let mut sample = input + self.gain * filtered;
        // Flush denormals: a released loop decays toward 1e-308 territory,
        // where x86 arithmetic stalls.
        if sample.abs() < 1e-20 {
            sample = 0.0;
        }
        self.buf[self.write & self.mask] = sample;
        self.write = self.write.wrapping_add(1);
        sample
    }
}

/// Excitation burst: one period of noise, low-passed by brightness, combed
/// by pick position, normalized to the velocity's peak amplitude.
fn excitation_burst(
    period: usize,
    profile: &TimbreProfile,
    velocity: u8,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let len = period.max(2);
    let mut burst: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect();

    let a = 0.9 * (1.0 - profile.excitation_brightness);
    if a > 0.0 {
        let mut y = 0.0;
        for s in burst.iter_mut() {
            y = (1.0 - a) * *s + a * y;
            *s = y;
        }
    }

    let comb = (profile.pick_position * len as f64).round() as usize;
    if comb >= 1 && comb < len {
        let raw = burst.clone();
        for i in comb..len {
            burst[i] -= raw[i - comb];
        }
    }

    // Keep DC out of the loop; the averager passes it with unit gain.
    let mean = burst.iter().sum::<f64>() / len as f64;
    for s in burst.iter_mut() {
        *s -= mean;
    }

    let peak = burst.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let target = EXCITE_PEAK * velocity as f64 / 127.0;
        let scale = target / peak;
        for s in burst.iter_mut() {
            *s *= scale;
        }
    }
    burst
}

struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Biquad {
    /// RBJ peaking EQ.
    fn peaking(mode: &BodyMode, sr: u32) -> Self {
        let a = 10f64.powf(mode.gain_db / 40.0);
        let w0 = std::f64::consts::TAU * mode.freq_hz / sr as f64;
        let alpha = w0.sin() / (2.0 * mode.q);
        let cosw = w0.cos();
        let a0 = 1.0 + alpha / a;
        Self {
            b0: (1.0 + alpha * a) / a0,
            b1: -2.0 * cosw / a0,
            b2: (1.0 - alpha * a) / a0,
            a1: -2.0 * cosw / a0,
            a2: (1.0 - alpha / a) / a0,
            z1: 0.0,
            z2: 0.0,
        }
    }

    #[inline]
    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }
}

fn check_events(events: &[PerformanceEvent], sr: u32) -> Result<(), SynthError> {
    let limit = sr as f64 / 4.0;
    let mut prev_end = f64::NEG_INFINITY;
    for ev in events {
        if ev.onset_s < prev_end {
            return Err(SynthError::UnorderedEvents { string: ev.string });
        }
        prev_end = ev.end_s();
        let peak_cents = ev.pitch_curve.points().iter().fold(0.0f64, |m, p| m.max(p.1));
        let max_hz = midi_pitch_to_hz(ev.pitch as f64) * (peak_cents / 1200.0).exp2();
        if max_hz > limit {
            return Err(SynthError::PitchTooHigh { freq_hz: max_hz, limit_hz: limit });
        }
    }
    Ok(())
}

/// Render one string's events into a stem of `duration_s` (+ release tail).
///
/// Deterministic for fixed `(events, profile, sr, duration_s, seed)`: the
/// excitation noise for event `i` comes from a stream derived from
/// `(seed, i)`, so the result does not depend on any other string or on
/// scheduling.
pub fn render_string(
    events: &[PerformanceEvent],
    profile: &TimbreProfile,
    sr: u32,
    duration_s: f64,
    seed: u64,
) -> Result<AudioBuffer, SynthError> {
    profile.validate()?;
    check_events(events, sr)?;

    let n = ((duration_s + RELEASE_TAIL_S) * sr as f64).ceil() as usize;
    let mut out = vec![0.0f64; n];
    if events.is_empty() {
        return Ok(AudioBuffer::new(out, sr));
    }

    let srf = sr as f64;
    let mut voice = StringVoice::new(sr);

    struct ActiveState<'a> {
        onset_idx: usize,
        end_idx: usize,
        cursor: crate::curve::CurveCursor<'a>,
        base_hz: f64,
        last_cents: f64,
    }

    let mut active: Option<ActiveState> = None;
    let mut next_ev = 0usize;
    let mut burst: Vec<f64> = Vec::new();
    let mut burst_pos = usize::MAX;

    for (i, sample_slot) in out.iter_mut().enumerate() {
        // Event boundaries.
        if active.as_ref().is_some_and(|st| i >= st.end_idx) {
            voice.gain = RELEASE_GAIN;
            active = None;
        }
        if active.is_none() && next_ev < events.len() {
            let ev = &events[next_ev];
            let onset_idx = (ev.onset_s * srf).round() as usize;
            if i >= onset_idx {
                let end_idx = ((ev.end_s() * srf).round() as usize).max(onset_idx + 1);
                let base_hz = midi_pitch_to_hz(ev.pitch as f64);
                let mut cursor = ev.pitch_curve.cursor();
                let cents = cursor.value_at(0.0);
                voice.delay = srf / (base_hz * (cents / 1200.0).exp2()) - 0.5;
                voice.gain = profile.gain_for(ev.damping);
                if ev.excitation == Excitation::Pluck {
                    let mut rng = rng_for(seed, &[next_ev as u64]);
                    let period = (srf / base_hz).round() as usize;
                    burst = excitation_burst(period, profile, ev.velocity, &mut rng);
                    burst_pos = 0;
                }
                active = Some(ActiveState { onset_idx, end_idx, cursor, base_hz, last_cents: cents });
                next_ev += 1;
            }
        }

        if let Some(st) = &mut active {
            let t_rel = (i - st.onset_idx) as f64 / srf;
            let cents = st.cursor.value_at(t_rel);
            if cents != st.last_cents {
                st.last_cents = cents;
                voice.delay = srf / (st.base_hz * (cents / 1200.0).exp2()) - 0.5;
            }
        }

        let input = if burst_pos < burst.len() {
            let v = burst[burst_pos];
            burst_pos += 1;
            v
        } else {
            0.0
        };
        *sample_slot = voice.tick(input);
    }

    // DC blocker (~18 Hz highpass): residual offset from the excitation
    // otherwise rides on the stem and skews RMS measurements.
    {
        let r = 1.0 - 110.0 / srf;
        let mut x1 = 0.0;
        let mut y1 = 0.0;
        for s in out.iter_mut() {
            let y = *s - x1 + r * y1;
            x1 = *s;
            y1 = y;
            *s = y;
        }
    }

    // Body resonance and output gain.
    if !profile.body_resonance.is_empty() {
        let mut filters: Vec<Biquad> =
            profile.body_resonance.iter().map(|m| Biquad::peaking(m, sr)).collect();
        for s in out.iter_mut() {
            let mut v = *s;
            for f in filters.iter_mut() {
                v = f.tick(v);
            }
            *s = v;
        }
    }
    let gain = 10f64.powf(profile.output_gain_db / 20.0);
    if gain != 1.0 {
        for s in out.iter_mut() {
            *s *= gain;
        }
    }

    Ok(AudioBuffer::new(out, sr))
}

/// Gain-weighted sum of stems, padded to the longest; peak-normalized only
/// when the summed peak exceeds 1.
pub fn mix(stems: &[AudioBuffer], gains_db: &[f64]) -> Result<AudioBuffer, SynthError> {
    if stems.is_empty() {
        return Err(SynthError::NoStems);
    }
    if stems.len() != gains_db.len() {
        return Err(SynthError::GainCountMismatch { stems: stems.len(), gains: gains_db.len() });
    }
    let sr = stems[0].sample_rate_hz();
    for s in stems {
        if s.sample_rate_hz() != sr {
            return Err(SynthError::SampleRateMismatch { a: sr, b: s.sample_rate_hz() });
        }
    }
    let len = stems.iter().map(AudioBuffer::len).max().unwrap_or(0);
    let mut out = vec![0.0f64; len];
    for (stem, &db) in stems.iter().zip(gains_db) {
        let g = 10f64.powf(db / 20.0);
        for (o, &s) in out.iter_mut().zip(stem.samples()) {
            *o += g * s;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        let scale = 1.0 / peak;
        for s in out.iter_mut() {
            *s *= scale;
        }
    }
    Ok(AudioBuffer::new(out, sr))
}

/// Render all six strings of a score and mix them at unity gain.
///
/// Per-string noise streams derive from `(seed, string)`, so stems are
/// independent of each other and of evaluation order.
pub fn render_score(
    score: &PerformanceScore,
    profile: &TimbreProfile,
    sr: u32,
    seed: u64,
) -> Result<AudioBuffer, SynthError> {
    let duration = score.total_duration_s();
    let stems = (1..=RENDER_STRINGS as u8)
        .map(|s| {
            render_string(
                score.string_events(s),
                profile,
                sr,
                duration,
                crate::rng::derive_seed(seed, &[s as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    mix(&stems, &[0.0; RENDER_STRINGS])
}
