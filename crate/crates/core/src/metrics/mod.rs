//! Temporal grounding and dense video captioning metrics.

mod caption;
mod dense;

pub use caption::{tokenize, Cider, CiderCorpus, MeteorLite};
pub use dense::{iou_bucketed_caption_scores, soda_c, CaptionedEvent, BUCKET_THRESHOLDS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("{preds} predictions but {gts} ground-truth segments")]
    LengthMismatch { preds: usize, gts: usize },
}

/// A `[start, end]` interval, in seconds or frames (consistently per dataset).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSegment {
    pub start: f64,
    pub end: f64,
}

impl TimeSegment {
    pub fn new(start: f64, end: f64) -> Self {
        debug_assert!(start <= end, "segment [{start}, {end}] is reversed");
        TimeSegment { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Intersection over union of two segments; 0 when the union is empty.
pub fn temporal_iou(a: &TimeSegment, b: &TimeSegment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.end.max(b.end) - a.start.min(b.start);
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU thresholds for Recall@1.
pub const GROUNDING_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingScores {
    /// `(m, R@m)` in threshold order.
    pub recall: Vec<(f64, f64)>,
    pub miou: f64,
}

impl GroundingScores {
    pub fn recall_at(&self, m: f64) -> Option<f64> {
        self.recall.iter().find(|(t, _)| *t == m).map(|&(_, r)| r)
    }
}

/// Recall@1 at each threshold and mean IoU over index-aligned pairs.
pub fn grounding_scores(
    preds: &[TimeSegment],
    gts: &[TimeSegment],
    thresholds: &[f64],
) -> Result<GroundingScores, MetricError> {
    if preds.len() != gts.len() {
        return Err(MetricError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let ious: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| temporal_iou(p, g))
        .collect();
    let n = ious.len().max(1) as f64;
    let recall = thresholds
        .iter()
        .map(|&m| (m, ious.iter().filter(|&&v| v >= m).count() as f64 / n))
        .collect();
    Ok(GroundingScores {
        recall,
        miou: ious.iter().sum::<f64>() / n,
    })
}

/// Scores a candidate caption against one reference.
pub trait CaptionScorer {
    fn score(&self, candidate: &str, reference: &str) -> f64;

    /// The same score mapped into `[0, 1]`, used where a bounded similarity is
    /// required (story-level matching).
    fn unit_score(&self, candidate: &str, reference: &str) -> f64 {
        self.score(candidate, reference)
    }
}

impl<F: Fn(&str, &str) -> f64> CaptionScorer for F {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        self(candidate, reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: f64, b: f64) -> TimeSegment {
        TimeSegment::new(a, b)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(temporal_iou(&seg(0.0, 10.0), &seg(0.0, 10.0)), 1.0);
        assert_eq!(temporal_iou(&seg(0.0, 5.0), &seg(5.0, 10.0)), 0.0);
        assert!((temporal_iou(&seg(0.0, 6.0), &seg(4.0, 10.0)) - 0.2).abs() < 1e-15);
        assert_eq!(temporal_iou(&seg(3.0, 3.0), &seg(3.0, 3.0)), 0.0);
    }

    #[test]
    fn grounding_examples() {
        let gts = [seg(0.0, 10.0), seg(0.0, 10.0), seg(0.0, 10.0)];
        let s = grounding_scores(&gts, &gts, &GROUNDING_THRESHOLDS).unwrap();
        assert!(s.recall.iter().all(|&(_, r)| r == 1.0));
        assert_eq!(s.miou, 1.0);

        let far = [seg(20.0, 30.0), seg(40.0, 41.0), seg(11.0, 12.0)];
        let s = grounding_scores(&far, &gts, &GROUNDING_THRESHOLDS).unwrap();
        assert!(s.recall.iter().all(|&(_, r)| r == 0.0));
        assert_eq!(s.miou, 0.0);

        // IoUs 0.8, 0.4, 0.6
        let preds = [seg(0.0, 8.0), seg(0.0, 4.0), seg(0.0, 6.0)];
        let s = grounding_scores(&preds, &gts, &GROUNDING_THRESHOLDS).unwrap();
        assert_eq!(s.recall_at(0.3), Some(1.0));
        assert_eq!(s.recall_at(0.5), Some(2.0 / 3.0));
        assert_eq!(s.recall_at(0.7), Some(1.0 / 3.0));
        assert!((s.miou - 0.6).abs() < 1e-12);
    }

    #[test]
    fn grounding_length_mismatch() {
        assert_eq!(
            grounding_scores(&[seg(0.0, 1.0)], &[], &GROUNDING_THRESHOLDS),
            Err(MetricError::LengthMismatch { preds: 1, gts: 0 })
        );
    }
}
