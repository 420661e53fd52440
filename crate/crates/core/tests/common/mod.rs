//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pite_core::metrics::{temporal_iou, CaptionScorer, CaptionedEvent};
use pite_core::pipeline::PipelineInputs;
use pite_core::trajectory::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toy_inputs() -> PipelineInputs {
    let root = fixtures().join("toy");
    PipelineInputs {
        manifest: root.join("manifest.jsonl"),
        trees: root.join("captions.trees"),
        masks_dir: root.join("masks"),
        tracks_dir: root.join("tracks"),
    }
}

/// Exact minimum SSE over every assignment of `points` to `k` labels.
pub fn brute_force_sse(points: &[Point], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sse = 0.0;
        for c in 0..k {
            let members: Vec<&Point> = (0..n).filter(|&i| labels[i] == c).map(|i| &points[i]).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let cx = members.iter().map(|p| p[0]).sum::<f64>() / m;
            let cy = members.iter().map(|p| p[1]).sum::<f64>() / m;
            sse += members
                .iter()
                .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
                .sum::<f64>();
        }
        best = best.min(sse);
        // odometer increment
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// 3 to 8 points; every other instance is drawn around a few blob centers.
pub fn kmeans_instance(seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=8);
    if seed % 2 == 0 {
        (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
    } else {
        let blobs: Vec<Point> = (0..3).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        (0..n)
            .map(|_| {
                let b = blobs[rng.random_range(0..3)];
                [b[0] + 0.05 * rng.random::<f64>(), b[1] + 0.05 * rng.random::<f64>()]
            })
            .collect()
    }
}

fn sorted(events: &[CaptionedEvent]) -> Vec<&CaptionedEvent> {
    let mut v: Vec<&CaptionedEvent> = events.iter().collect();
    v.sort_by(|a, b| {
        a.segment
            .start
            .total_cmp(&b.segment.start)
            .then(a.segment.end.total_cmp(&b.segment.end))
    });
    v
}

/// SODA F-measure by enumerating every order-preserving one-to-one matching.
pub fn soda_brute_force(
    preds: &[CaptionedEvent],
    gts: &[CaptionedEvent],
    scorer: &dyn CaptionScorer,
) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let (p, g) = (sorted(preds), sorted(gts));
    fn walk(
        i: usize,
        j: usize,
        p: &[&CaptionedEvent],
        g: &[&CaptionedEvent],
        s: &dyn CaptionScorer,
    ) -> f64 {
        let mut best = 0.0f64;
        for a in i..p.len() {
            for b in j..g.len() {
                let w = temporal_iou(&p[a].segment, &g[b].segment)
                    * s.unit_score(&p[a].caption, &g[b].caption);
                best = best.max(w + walk(a + 1, b + 1, p, g, s));
            }
        }
        best
    }
    let total = walk(0, 0, &p, &g, scorer);
    if total <= 0.0 {
        return 0.0;
    }
    let (pr, rc) = (total / p.len() as f64, total / g.len() as f64);
    2.0 * pr * rc / (pr + rc)
}
