//! Seeded synthetic datasets drawn from a planted teacher.
//!
//! The teacher shares the student's frozen backbone and adapter and re-draws
//! everything else; token sequences are the teacher's greedy decodes and the
//! regression targets are its (clamped) projector outputs. The data is
//! therefore realizable by the student architecture.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::model::{forward, greedy_decode, group_rng, Projector, ToyModelParams};
use super::{Stage, TrainerConfig, TrainingSample};
use crate::trajectory::TrajectoryMatrix;

const TEACHER_STREAM: u64 = 100;
const DATA_STREAM: u64 = 200;

/// Teacher whose frozen parts coincide with `ToyModelParams::init(cfg)`.
pub fn planted_teacher(cfg: &TrainerConfig) -> ToyModelParams {
    let mut t = ToyModelParams::init(cfg);
    t.redraw_heads(cfg.seed, TEACHER_STREAM);
    t.vocab_map.data_mut().iter_mut().for_each(|w| *w *= 3.0);
    t.loc_proj
        .weight
        .data_mut()
        .iter_mut()
        .for_each(|w| *w *= 3.0);
    let d = cfg.d;
    let rows = 2 * cfg.points * cfg.frames;
    let mut rng = group_rng(cfg.seed, TEACHER_STREAM + 3);
    let dist = Normal::new(0.0, 0.3 / (d as f64).sqrt()).expect("finite std");
    t.traj_proj = Projector {
        weight: super::Matrix::from_fn(rows, d, |_, _| dist.sample(&mut rng)),
        bias: vec![0.5; rows],
    };
    t
}

/// `samples` sequences of `seq_len` tokens shaped for `stage`.
///
/// Stage 1 samples see one image feature; stages 2 and 3 see `cfg.frames`
/// frame features scattered around a per-sample base vector.
pub fn dataset(
    cfg: &TrainerConfig,
    stage: Stage,
    samples: usize,
    seq_len: usize,
) -> Vec<TrainingSample> {
    let teacher = planted_teacher(cfg);
    let mut rng = group_rng(cfg.seed, DATA_STREAM + stage.number() as u64);
    let unit = Normal::new(0.0, 1.0).expect("finite std");
    let n_frames = match stage {
        Stage::Localization => 1,
        _ => cfg.frames,
    };
    (0..samples)
        .map(|_| {
            let base: Vec<f64> = (0..cfg.d_v).map(|_| unit.sample(&mut rng)).collect();
            let frames: Vec<Vec<f64>> = (0..n_frames)
                .map(|_| base.iter().map(|b| b + 0.1 * unit.sample(&mut rng)).collect())
                .collect();
            let tokens = greedy_decode(&teacher, &frames, seq_len).expect("valid teacher input");
            let out = forward(&teacher, &frames, &tokens).expect("valid teacher input");
            let mut sample = TrainingSample::new(frames, tokens);
            match stage {
                Stage::Localization => {
                    sample.supervised = (0..seq_len).map(|_| rng.random_bool(0.8)).collect();
                    sample.loc_targets = Some(
                        (0..seq_len)
                            .map(|i| {
                                sample.supervised[i]
                                    .then(|| out.locs[i].map(|v| v.clamp(0.0, 1.0)))
                            })
                            .collect(),
                    );
                }
                Stage::Trajectory => {
                    sample.supervised = (0..seq_len).map(|_| rng.random_bool(0.5)).collect();
                    sample.traj_targets = Some(
                        (0..seq_len)
                            .map(|i| {
                                sample.supervised[i].then(|| {
                                    let cells = out.trajs[i]
                                        .chunks(2)
                                        .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0)])
                                        .collect();
                                    TrajectoryMatrix::from_cells(cfg.points, cfg.frames, cells)
                                        .expect("clamped cells are valid")
                                })
                            })
                            .collect(),
                    );
                }
                Stage::Instruction => {}
            }
            sample
        })
        .collect()
}

/// Small configuration used for finite-difference checks.
pub fn grad_check_config(seed: u64) -> TrainerConfig {
    TrainerConfig {
        d_v: 5,
        d: 6,
        vocab: 9,
        points: 2,
        frames: 3,
        lambda: 0.7,
        smoothing: 0.1,
        seed,
        ..Default::default()
    }
}

/// Randomized parameters and one sample for a gradient check of `stage`.
///
/// All trainable groups are re-drawn so no projector is still tiled, and the
/// stage-2 sample mixes real targets, a supervised token with no target
/// (trained towards the sentinel) and unsupervised tokens.
pub fn grad_fixture(seed: u64, stage: Stage) -> (TrainerConfig, ToyModelParams, TrainingSample) {
    let cfg = grad_check_config(seed);
    let mut params = ToyModelParams::init(&cfg);
    let mut rng = group_rng(seed, 300);
    let unit = Normal::new(0.0, 1.0).expect("finite std");
    params.traj_proj.weight.data_mut().iter_mut().for_each(|w| *w = 0.3 * unit.sample(&mut rng));
    params.traj_proj.bias.iter_mut().for_each(|b| *b = 0.5 + 0.2 * unit.sample(&mut rng));
    params.loc_proj.weight.data_mut().iter_mut().for_each(|w| *w = 0.3 * unit.sample(&mut rng));

    let mut sample = dataset(&cfg, stage, 1, 5).remove(0);
    if stage == Stage::Trajectory {
        let trajs = sample.traj_targets.as_mut().expect("stage 2 sample");
        sample.supervised = vec![true, true, false, true, false];
        let cells: Vec<[f64; 2]> = (0..cfg.points * cfg.frames)
            .map(|c| {
                if c % 4 == 3 {
                    crate::trajectory::SENTINEL
                } else {
                    [rng.random::<f64>(), rng.random::<f64>()]
                }
            })
            .collect();
        trajs[0] = Some(TrajectoryMatrix::from_cells(cfg.points, cfg.frames, cells).unwrap());
        trajs[1] = None;
        trajs[2] = None;
        trajs[3] = Some(TrajectoryMatrix::sentinel(cfg.points, cfg.frames));
        trajs[4] = None;
    }
    (cfg, params, sample)
}
