//! Tablature precision / recall / F1 over frame-level label matrices.
//!
//! Counts are micro-averaged over all `(frame, string, fret)` bins. The
//! zero-denominator conventions: precision (recall) is 0 when it has no
//! denominator, F1 is 0 when `P + R = 0` — except that two entirely empty
//! matrices compare as a perfect match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{string_mask, FrameLabelMatrix, STRINGS};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: pred has {pred_frames} frames @ {pred_hop} s, truth {truth_frames} @ {truth_hop} s")]
    ShapeMismatch {
        pred_frames: usize,
        truth_frames: usize,
        pred_hop: f64,
        truth_hop: f64,
    },
    #[error("aggregate needs at least one report")]
    EmptyInput,
}

/// Bin counts plus derived scores for one slice (a string or a whole matrix).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    fn from_raw(tp: u64, fp: u64, fn_: u64) -> Self {
        let (precision, recall, f1) = scores(tp, fp, fn_);
        Self { tp, fp, fn_, precision, recall, f1 }
    }
}

/// Zero-denominator conventions live here; both-empty is a perfect score.
fn scores(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    if tp == 0 && fp == 0 && fn_ == 0 {
        return (1.0, 1.0, 1.0);
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Full evaluation result: overall counts/scores and a per-string breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub per_string: [Counts; STRINGS],
}

impl MetricReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, per_string: [Counts; STRINGS]) -> Self {
        let (precision, recall, f1) = scores(tp, fp, fn_);
        Self { precision, recall, f1, tp, fp, fn_, per_string }
    }
}

/// Micro-averaged tablature F1 between a prediction and the ground truth.
pub fn tab_f1(pred: &FrameLabelMatrix, truth: &FrameLabelMatrix) -> Result<MetricReport, MetricsError> {
    if pred.n_frames() != truth.n_frames() || pred.hop_s() != truth.hop_s() {
        return Err(MetricsError::ShapeMismatch {
            pred_frames: pred.n_frames(),
            truth_frames: truth.n_frames(),
            pred_hop: pred.hop_s(),
            truth_hop: truth.hop_s(),
        });
    }

    let mut tp_s = [0u64; STRINGS];
    let mut fp_s = [0u64; STRINGS];
    let mut fn_s = [0u64; STRINGS];
    for t in 0..pred.n_frames() {
        let p = pred.frame_bits(t);
        let g = truth.frame_bits(t);
        for s in 0..STRINGS {
            let mask = string_mask(s as u8 + 1);
            tp_s[s] += (p & g & mask).count_ones() as u64;
            fp_s[s] += (p & !g & mask).count_ones() as u64;
            fn_s[s] += (!p & g & mask).count_ones() as u64;
        }
    }

    let per_string = std::array::from_fn(|s| Counts::from_raw(tp_s[s], fp_s[s], fn_s[s]));
    Ok(MetricReport::from_counts(
        tp_s.iter().sum(),
        fp_s.iter().sum(),
        fn_s.iter().sum(),
        per_string,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Sum counts across reports, then recompute scores.
    Micro,
    /// Average precision/recall/F1 across reports (counts still summed).
    Macro,
}

/// Combine per-track reports into a dataset-level report.
pub fn aggregate(reports: &[MetricReport], mode: AggregateMode) -> Result<MetricReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let mut tp_s = [0u64; STRINGS];
    let mut fp_s = [0u64; STRINGS];
    let mut fn_s = [0u64; STRINGS];
    for r in reports {
        for s in 0..STRINGS {
            tp_s[s] += r.per_string[s].tp;
            fp_s[s] += r.per_string[s].fp;
            fn_s[s] += r.per_string[s].fn_;
        }
    }
    let tp: u64 = tp_s.iter().sum();
    let fp: u64 = fp_s.iter().sum();
    let fn_: u64 = fn_s.iter().sum();

    match mode {
        AggregateMode::Micro => {
            let per_string = std::array::from_fn(|s| Counts::from_raw(tp_s[s], fp_s[s], fn_s[s]));
            Ok(MetricReport::from_counts(tp, fp, fn_, per_string))
        }
        AggregateMode::Macro => {
            let n = reports.len() as f64;
            let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            let per_string = std::array::from_fn(|s| {
                let mp = reports.iter().map(|r| r.per_string[s].precision).sum::<f64>() / n;
                let mr = reports.iter().map(|r| r.per_string[s].recall).sum::<f64>() / n;
                let mf = reports.iter().map(|r| r.per_string[s].f1).sum::<f64>() / n;
                Counts { tp: tp_s[s], fp: fp_s[s], fn_: fn_s[s], precision: mp, recall: mr, f1: mf }
            });
            Ok(MetricReport {
                precision: mean(&|r| r.precision),
                recall: mean(&|r| r.recall),
                f1: mean(&|r| r.f1),
                tp,
                fp,
                fn_,
                per_string,
            })
        }
    }
}
