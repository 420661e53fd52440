use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::{bail, Result};
use clap::ValueEnum;
use serde::Deserialize;

use pite_core::metrics::{
    grounding_scores, iou_bucketed_caption_scores, soda_c, CaptionScorer, CaptionedEvent, Cider,
    CiderCorpus, MeteorLite, BUCKET_THRESHOLDS, GROUNDING_THRESHOLDS,
};
use pite_core::pipeline::read_jsonl;

#[derive(Clone, Copy, ValueEnum)]
pub enum Scorer {
    Meteor,
    Cider,
}

#[derive(Deserialize)]
struct VideoEvents {
    video_id: String,
    events: Vec<CaptionedEvent>,
}

fn by_video(path: &Path) -> Result<(Vec<String>, HashMap<String, Vec<CaptionedEvent>>)> {
    let rows: Vec<VideoEvents> = read_jsonl(path)?;
    let mut order = Vec::with_capacity(rows.len());
    let mut map = HashMap::with_capacity(rows.len());
    for r in rows {
        if map.contains_key(&r.video_id) {
            bail!("{}: duplicate video {:?}", path.display(), r.video_id);
        }
        order.push(r.video_id.clone());
        map.insert(r.video_id, r.events);
    }
    Ok((order, map))
}

/// R@{0.3,0.5,0.7} and mIoU over index-aligned events, x100.
pub fn grounding(pred: &Path, gt: &Path) -> Result<BTreeMap<String, f64>> {
    let (gt_order, gts) = by_video(gt)?;
    let (_, preds) = by_video(pred)?;
    let (mut p_all, mut g_all) = (Vec::new(), Vec::new());
    for id in &gt_order {
        let g = &gts[id];
        let Some(p) = preds.get(id) else {
            bail!("no prediction for video {id:?}");
        };
        if p.len() != g.len() {
            bail!(
                "video {id:?}: {} predicted segments for {} queries",
                p.len(),
                g.len()
            );
        }
        p_all.extend(p.iter().map(|e| e.segment));
        g_all.extend(g.iter().map(|e| e.segment));
    }
    let scores = grounding_scores(&p_all, &g_all, &GROUNDING_THRESHOLDS)?;
    let mut out = BTreeMap::new();
    for (m, r) in scores.recall {
        out.insert(format!("R@{m}"), 100.0 * r);
    }
    out.insert("mIoU".into(), 100.0 * scores.miou);
    Ok(out)
}

/// SODA_c and the IoU-bucketed caption score, averaged over ground-truth
/// videos, x100. Videos without predictions score 0.
pub fn dense(pred: &Path, gt: &Path, scorer: Scorer) -> Result<BTreeMap<String, f64>> {
    let (gt_order, gts) = by_video(gt)?;
    let (_, preds) = by_video(pred)?;
    let metric: Box<dyn CaptionScorer> = match scorer {
        Scorer::Meteor => Box::new(MeteorLite),
        Scorer::Cider => {
            let refs: Vec<Vec<&str>> = gt_order
                .iter()
                .flat_map(|id| &gts[id])
                .map(|e| vec![e.caption.as_str()])
                .collect();
            Box::new(Cider {
                corpus: CiderCorpus::new(&refs),
            })
        }
    };
    let empty = Vec::new();
    let (mut soda, mut caption) = (0.0, 0.0);
    for id in &gt_order {
        let g = &gts[id];
        let p = preds.get(id).unwrap_or(&empty);
        soda += soda_c(p, g, metric.as_ref());
        caption += iou_bucketed_caption_scores(p, g, &BUCKET_THRESHOLDS, metric.as_ref());
    }
    let n = gt_order.len().max(1) as f64;
    let name = match scorer {
        Scorer::Meteor => "METEOR",
        Scorer::Cider => "CIDEr",
    };
    let mut out = BTreeMap::new();
    out.insert("SODA_c".to_string(), 100.0 * soda / n);
    out.insert(name.to_string(), 100.0 * caption / n);
    Ok(out)
}
