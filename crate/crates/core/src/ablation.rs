//! Key-point count sweep: rebuild the dataset for several `P`, train the toy
//! model's stage 2 on each, and report shapes, coverage and losses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{
    build_records, PipelineConfig, PipelineError, PipelineInputs, TemporalPosition, VideoRecord,
};
use crate::trainer::{
    train, Stage, ToyModelParams, TrainerConfig, TrainerError, TrainingSample, Vocab,
};
use crate::trajectory::TrajectoryMatrix;

#[derive(Debug, Error)]
pub enum AblationError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error("no events survived the pipeline")]
    NoEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub points: usize,
    /// `[P, N, 2]`
    pub matrix_shape: [usize; 3],
    pub trajectories: usize,
    /// Fraction of trajectory cells that are not the sentinel.
    pub real_cell_fraction: f64,
    /// Mean number of key-point rows with at least one real cell.
    pub mean_keypoints: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Words of an event's formatted text, and the index of its first caption
/// word.
fn event_words(caption: &str, start: usize, end: usize, pos: TemporalPosition) -> (Vec<String>, usize) {
    let cap: Vec<String> = caption.split_whitespace().map(str::to_lowercase).collect();
    let temporal = vec!["from".to_string(), start.to_string(), "to".into(), end.to_string()];
    match pos {
        TemporalPosition::Prefix => ([temporal, cap].concat(), 4),
        TemporalPosition::Suffix => ([cap, temporal].concat(), 0),
    }
}

/// Vocabulary covering every event text in `records`.
pub fn records_vocab(records: &[VideoRecord], pos: TemporalPosition) -> Vocab {
    Vocab::from_words(records.iter().flat_map(|r| &r.events).flat_map(|e| {
        event_words(&e.caption, e.start_frame, e.end_frame, pos).0
    }))
}

/// One stage-2 sample per event. Each surviving noun phrase supervises its
/// last word with its trajectory. Visual features are seeded noise, since the
/// toy model never sees pixels.
pub fn records_to_samples(
    records: &[VideoRecord],
    vocab: &Vocab,
    d_v: usize,
    visual_frames: usize,
    pos: TemporalPosition,
    seed: u64,
) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(400);
    let unit = Normal::new(0.0, 1.0).expect("finite std");
    let mut out = Vec::new();
    for e in records.iter().flat_map(|r| &r.events) {
        let (words, offset) = event_words(&e.caption, e.start_frame, e.end_frame, pos);
        let frames = (0..visual_frames.max(1))
            .map(|_| (0..d_v).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        let mut sample = TrainingSample::new(frames, vocab.encode(&words));
        let mut supervised = vec![false; words.len()];
        let mut trajs: Vec<Option<TrajectoryMatrix>> = vec![None; words.len()];
        for o in &e.objects {
            let i = offset + o.np.span.hi - 1;
            supervised[i] = true;
            trajs[i] = Some(o.trajectory.clone());
        }
        sample.supervised = supervised;
        sample.traj_targets = Some(trajs);
        out.push(sample);
    }
    out
}

fn coverage(records: &[VideoRecord]) -> (usize, f64, f64) {
    let mats: Vec<&TrajectoryMatrix> = records
        .iter()
        .flat_map(|r| &r.events)
        .flat_map(|e| &e.objects)
        .map(|o| &o.trajectory)
        .collect();
    if mats.is_empty() {
        return (0, 0.0, 0.0);
    }
    let cells: usize = mats.iter().map(|m| m.cells().len()).sum();
    let real: usize = mats.iter().map(|m| m.real_cells()).sum();
    let rows: usize = mats
        .iter()
        .map(|m| {
            (0..m.points())
                .filter(|&j| (0..m.frames()).any(|k| m.get(j, k) != crate::trajectory::SENTINEL))
                .count()
        })
        .sum();
    (
        mats.len(),
        real as f64 / cells.max(1) as f64,
        rows as f64 / mats.len() as f64,
    )
}

/// Runs the sweep. `pipeline.points` and `trainer.points`/`frames`/`vocab`
/// are overridden per row; everything else is taken as given.
pub fn ablate_points(
    inputs: &PipelineInputs,
    counts: &[usize],
    pipeline: &PipelineConfig,
    trainer: &TrainerConfig,
) -> Result<Vec<AblationRow>, AblationError> {
    let mut rows = Vec::with_capacity(counts.len());
    for &p in counts {
        let pcfg = PipelineConfig {
            points: p,
            ..pipeline.clone()
        };
        let records = build_records(inputs, &pcfg)?;
        let vocab = records_vocab(&records, pcfg.position);
        let samples = records_to_samples(&records, &vocab, trainer.d_v, 4, pcfg.position, trainer.seed);
        if samples.is_empty() {
            return Err(AblationError::NoEvents);
        }
        let tcfg = TrainerConfig {
            points: p,
            frames: pcfg.frames,
            vocab: vocab.len(),
            ..trainer.clone()
        };
        let outcome = train(ToyModelParams::init(&tcfg), &samples, Stage::Trajectory, &tcfg)?;
        let (trajectories, real_cell_fraction, mean_keypoints) = coverage(&records);
        let row = AblationRow {
            points: p,
            matrix_shape: [p, pcfg.frames, 2],
            trajectories,
            real_cell_fraction,
            mean_keypoints,
            initial_loss: outcome.loss_curve[0],
            final_loss: *outcome.loss_curve.last().expect("non-empty curve"),
        };
        log::info!("P={p}: {row:?}");
        rows.push(row);
    }
    Ok(rows)
}
