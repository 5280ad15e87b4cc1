//! Piecewise-linear pitch curves in cents.
//!
//! A curve maps note-relative time (seconds from onset) to a pitch offset in
//! cents. Bends, slides and vibrato are all lowered to breakpoints here so
//! that every downstream consumer (pitch-wheel export, delay-line retuning)
//! sees one representation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on pitch offsets: 4 semitones either way.
pub const MAX_ABS_CENTS: f64 = 400.0;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve must contain at least two breakpoints")]
    TooFewPoints,
    #[error("breakpoint times must start at 0 and strictly increase (point {index})")]
    NonMonotonicTime { index: usize },
    #[error("breakpoint {index} is {cents} cents, outside ±{MAX_ABS_CENTS}")]
    OutOfRange { index: usize, cents: f64 },
}

/// Piecewise-linear function `time -> cents`, defined on `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchCurve {
    points: Vec<(f64, f64)>,
}

impl PitchCurve {
    /// A curve that stays at 0 cents for the whole note.
    pub fn flat(duration_s: f64) -> Self {
        Self { points: vec![(0.0, 0.0), (duration_s.max(0.0), 0.0)] }
    }

    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints);
        }
        if points[0].0 != 0.0 {
            return Err(CurveError::NonMonotonicTime { index: 0 });
        }
        for i in 1..points.len() {
            if points[i].0 <= points[i - 1].0 {
                return Err(CurveError::NonMonotonicTime { index: i });
            }
        }
        for (i, &(_, c)) in points.iter().enumerate() {
            if !c.is_finite() || c.abs() > MAX_ABS_CENTS {
                return Err(CurveError::OutOfRange { index: i, cents: c });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Duration covered by the curve (time of the last breakpoint).
    pub fn duration(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }

    pub fn max_abs_cents(&self) -> f64 {
        self.points.iter().fold(0.0, |m, &(_, c)| m.max(c.abs()))
    }

    /// True when every breakpoint sits within `eps` cents of zero.
    pub fn is_flat(&self, eps: f64) -> bool {
        self.points.iter().all(|&(_, c)| c.abs() <= eps)
    }

    /// Sample the curve. Times outside `[0, duration]` clamp to the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        // Binary search for the segment containing t.
        let mut lo = 0;
        let mut hi = pts.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if pts[mid].0 <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        segment_value(pts[lo], pts[hi], t)
    }

    /// Sequential sampler; O(1) amortized for monotonically increasing `t`.
    pub fn cursor(&self) -> CurveCursor<'_> {
        CurveCursor { curve: self, seg: 0 }
    }
}

#[inline]
fn segment_value(a: (f64, f64), b: (f64, f64), t: f64) -> f64 {
    let w = (t - a.0) / (b.0 - a.0);
    a.1 + (b.1 - a.1) * w
}

/// Stateful forward-only reader over a [`PitchCurve`].
pub struct CurveCursor<'a> {
    curve: &'a PitchCurve,
    seg: usize,
}

impl CurveCursor<'_> {
    pub fn value_at(&mut self, t: f64) -> f64 {
        let pts = self.curve.points();
        while self.seg + 2 < pts.len() && pts[self.seg + 1].0 <= t {
            self.seg += 1;
        }
        let a = pts[self.seg];
        let b = pts[self.seg + 1];
        if t <= a.0 {
            a.1
        } else if t >= b.0 {
            b.1
        } else {
            segment_value(a, b, t)
        }
    }

    /// True while the current segment carries pitch movement.
    pub fn moving(&self, eps: f64) -> bool {
        let pts = self.curve.points();
        (pts[self.seg].1 - pts[self.seg + 1].1).abs() > eps
    }
}
