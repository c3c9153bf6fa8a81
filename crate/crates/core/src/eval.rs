//! Overlap metrics and fault-detection scoring.

use crate::detector::{Label, VerdictLabel};
use crate::error::{Error, Result};
use crate::raster::{same_shape, BinaryMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegScore {
    pub dice: f64,
    pub iou: f64,
}

fn overlap_counts(x: &BinaryMask, y: &BinaryMask) -> Result<(u64, u64, u64)> {
    same_shape(x, y)?;
    let (mut inter, mut nx, mut ny) = (0u64, 0u64, 0u64);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        inter += (a && b) as u64;
        nx += a as u64;
        ny += b as u64;
    }
    Ok((inter, nx, ny))
}

/// `2|X ∩ Y| / (|X| + |Y|)`; two empty masks score 1.
pub fn dice(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    let (inter, nx, ny) = overlap_counts(x, y)?;
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (nx + ny) as f64)
}

/// `|X ∩ Y| / |X ∪ Y|`; two empty masks score 1.
pub fn iou(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    let (inter, nx, ny) = overlap_counts(x, y)?;
    let union = nx + ny - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn seg_score(predicted: &BinaryMask, truth: &BinaryMask) -> Result<SegScore> {
    Ok(SegScore {
        dice: dice(predicted, truth)?,
        iou: iou(predicted, truth)?,
    })
}

/// Confusion record for fault detection. A skip is a faulty valve passed as
/// normal; an overkill is a normal valve flagged as faulty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub correct: usize,
    pub skips: usize,
    pub overkills: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_counts(correct: usize, skips: usize, overkills: usize) -> Result<Self> {
        let total = correct + skips + overkills;
        if total == 0 {
            return Err(Error::invalid("cannot score an empty set of detections"));
        }
        Ok(EvalReport {
            correct,
            skips,
            overkills,
            total,
            accuracy: correct as f64 / total as f64,
        })
    }

    /// Accuracy as a percentage with two decimals, e.g. `97.26%`.
    pub fn accuracy_percent(&self) -> String {
        format!("{:.2}%", self.accuracy * 100.0)
    }
}

/// Scores `(predicted, truth)` pairs. Review predictions count as faulty.
pub fn score_detections(pairs: &[(VerdictLabel, Label)]) -> Result<EvalReport> {
    let (mut correct, mut skips, mut overkills) = (0, 0, 0);
    for &(pred, truth) in pairs {
        match (pred.operational(), truth) {
            (p, t) if p == t => correct += 1,
            (Label::Normal, Label::Faulty) => skips += 1,
            _ => overkills += 1,
        }
    }
    EvalReport::from_counts(correct, skips, overkills)
}
