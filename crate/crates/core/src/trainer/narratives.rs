//! Reader for Localized Narratives records: a caption whose utterances are
//! time-stamped and a mouse trace sampled over the same timeline. Each word
//! is located at the mean trace position during its utterance.

use serde::{Deserialize, Serialize};

use super::{TrainingSample, Vocab};
use crate::metrics::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedUtterance {
    pub utterance: String,
    pub start_time: f64,
    pub end_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeRecord {
    #[serde(default)]
    pub image_id: String,
    #[serde(default)]
    pub caption: String,
    pub timed_caption: Vec<TimedUtterance>,
    #[serde(default)]
    pub traces: Vec<Vec<TracePoint>>,
}

impl NarrativeRecord {
    /// Words with their trace location, `None` when no trace point falls in
    /// the utterance window.
    pub fn word_locations(&self) -> Vec<(String, Option<[f64; 2]>)> {
        let points: Vec<&TracePoint> = self.traces.iter().flatten().collect();
        let mut out = Vec::new();
        for u in &self.timed_caption {
            let inside: Vec<&&TracePoint> = points
                .iter()
                .filter(|p| p.t >= u.start_time && p.t <= u.end_time)
                .collect();
            let loc = (!inside.is_empty()).then(|| {
                let n = inside.len() as f64;
                let x = inside.iter().map(|p| p.x).sum::<f64>() / n;
                let y = inside.iter().map(|p| p.y).sum::<f64>() / n;
                [x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)]
            });
            for w in tokenize(&u.utterance) {
                out.push((w, loc));
            }
        }
        out
    }

    /// Stage-1 sample over a single image feature.
    pub fn to_sample(&self, vocab: &Vocab, image_feature: Vec<f64>) -> TrainingSample {
        let words = self.word_locations();
        let tokens = words.iter().map(|(w, _)| vocab.id(w)).collect();
        let locs: Vec<Option<[f64; 2]>> = words.iter().map(|(_, l)| *l).collect();
        TrainingSample {
            frames: vec![image_feature],
            tokens,
            supervised: locs.iter().map(Option::is_some).collect(),
            loc_targets: Some(locs),
            traj_targets: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"{"dataset_id":"coco","image_id":"42","annotator_id":3,
        "caption":"In this image a dog.",
        "timed_caption":[
            {"utterance":"In this","start_time":0.0,"end_time":0.5},
            {"utterance":"image","start_time":0.5,"end_time":0.9},
            {"utterance":"a dog.","start_time":1.0,"end_time":1.4}],
        "traces":[[{"x":0.1,"y":0.2,"t":0.1},{"x":0.3,"y":0.4,"t":0.3},
                   {"x":1.2,"y":0.5,"t":1.2}]]}"#;

    #[test]
    fn words_take_mean_trace_location() {
        let r: NarrativeRecord = serde_json::from_str(RECORD).unwrap();
        let w = r.word_locations();
        let words: Vec<&str> = w.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(words, ["in", "this", "image", "a", "dog"]);
        let first = w[0].1.unwrap();
        assert!((first[0] - 0.2).abs() < 1e-12 && (first[1] - 0.3).abs() < 1e-12);
        assert_eq!(w[1].1, w[0].1);
        assert_eq!(w[2].1, None);
        assert_eq!(w[3].1, Some([1.0, 0.5]));
    }

    #[test]
    fn sample_is_stage1_valid() {
        let r: NarrativeRecord = serde_json::from_str(RECORD).unwrap();
        let vocab = Vocab::from_words(["in", "this", "image", "a", "dog"]);
        let s = r.to_sample(&vocab, vec![0.0; 4]);
        assert_eq!(s.supervised, vec![true, true, false, true, true]);
        s.check(super::super::Stage::Localization, 3, 2, 0).unwrap();
    }
}
