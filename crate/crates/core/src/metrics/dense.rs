use serde::{Deserialize, Serialize};

use super::{temporal_iou, CaptionScorer, TimeSegment};

/// IoU thresholds for matched-pair caption averages.
pub const BUCKET_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedEvent {
    #[serde(flatten)]
    pub segment: TimeSegment,
    #[serde(default)]
    pub caption: String,
}

impl CaptionedEvent {
    pub fn new(start: f64, end: f64, caption: impl Into<String>) -> Self {
        CaptionedEvent {
            segment: TimeSegment::new(start, end),
            caption: caption.into(),
        }
    }
}

fn sorted_by_start(events: &[CaptionedEvent]) -> Vec<&CaptionedEvent> {
    let mut v: Vec<&CaptionedEvent> = events.iter().collect();
    v.sort_by(|a, b| {
        a.segment
            .start
            .total_cmp(&b.segment.start)
            .then(a.segment.end.total_cmp(&b.segment.end))
    });
    v
}

/// Story-level dense captioning score.
///
/// Finds the temporally order-preserving one-to-one matching that maximizes
/// the sum of `IoU * unit_score(pred, gt)` and returns the harmonic mean of
/// `sum / |preds|` and `sum / |gts|`.
pub fn soda_c(
    preds: &[CaptionedEvent],
    gts: &[CaptionedEvent],
    scorer: &dyn CaptionScorer,
) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let p = sorted_by_start(preds);
    let g = sorted_by_start(gts);
    let (np, ng) = (p.len(), g.len());
    // best[i][j]: best total using the first i preds and first j gts
    let mut best = vec![vec![0.0f64; ng + 1]; np + 1];
    for i in 1..=np {
        for j in 1..=ng {
            let iou = temporal_iou(&p[i - 1].segment, &g[j - 1].segment);
            let w = if iou > 0.0 {
                iou * scorer.unit_score(&p[i - 1].caption, &g[j - 1].caption)
            } else {
                0.0
            };
            best[i][j] = best[i - 1][j]
                .max(best[i][j - 1])
                .max(best[i - 1][j - 1] + w);
        }
    }
    let total = best[np][ng];
    if total <= 0.0 {
        return 0.0;
    }
    let precision = total / np as f64;
    let recall = total / ng as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Average caption score over IoU thresholds.
///
/// For each threshold, ground-truth events (in order) greedily take the
/// unmatched prediction with the highest IoU at or above the threshold
/// (earliest prediction on ties); matched pairs are scored with `metric`,
/// unmatched ground truths score 0, and the per-threshold value is the mean
/// over ground truths.
pub fn iou_bucketed_caption_scores(
    preds: &[CaptionedEvent],
    gts: &[CaptionedEvent],
    thresholds: &[f64],
    metric: &dyn CaptionScorer,
) -> f64 {
    if gts.is_empty() || thresholds.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &t in thresholds {
        let mut used = vec![false; preds.len()];
        let mut per_t = 0.0;
        for gt in gts {
            let mut pick: Option<(usize, f64)> = None;
            for (pi, pred) in preds.iter().enumerate() {
                if used[pi] {
                    continue;
                }
                let iou = temporal_iou(&pred.segment, &gt.segment);
                if iou >= t && pick.is_none_or(|(_, b)| iou > b) {
                    pick = Some((pi, iou));
                }
            }
            if let Some((pi, _)) = pick {
                used[pi] = true;
                per_t += metric.score(&preds[pi].caption, &gt.caption);
            }
        }
        sum += per_t / gts.len() as f64;
    }
    sum / thresholds.len() as f64
}
