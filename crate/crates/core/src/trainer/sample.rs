use serde::{Deserialize, Serialize};

use super::{Stage, TrainerError};
use crate::trajectory::TrajectoryMatrix;

/// One training sequence with its visual context and optional per-token
/// regression targets.
///
/// `supervised[i]` marks tokens that carry a location or trajectory loss. A
/// present target implies supervision. In stage 2 a supervised token without
/// a trajectory is trained towards the all-sentinel matrix; an unsupervised
/// token contributes no trajectory loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Per-frame global visual features (`d_v` each).
    pub frames: Vec<Vec<f64>>,
    pub tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc_targets: Option<Vec<Option<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traj_targets: Option<Vec<Option<TrajectoryMatrix>>>,
    /// Empty means no token is supervised.
    #[serde(default)]
    pub supervised: Vec<bool>,
}

impl TrainingSample {
    pub fn new(frames: Vec<Vec<f64>>, tokens: Vec<usize>) -> Self {
        TrainingSample {
            frames,
            tokens,
            loc_targets: None,
            traj_targets: None,
            supervised: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_supervised(&self, i: usize) -> bool {
        self.supervised.get(i).copied().unwrap_or(false)
    }

    /// Checks the sample carries what `stage` needs. `index` labels errors.
    pub fn check(
        &self,
        stage: Stage,
        points: usize,
        frames: usize,
        index: usize,
    ) -> Result<(), TrainerError> {
        let err = |reason: String| TrainerError::Schema { index, reason };
        let len = self.tokens.len();
        if len == 0 {
            return Err(err("empty token sequence".into()));
        }
        if !self.supervised.is_empty() && self.supervised.len() != len {
            return Err(err(format!(
                "{} supervision flags for {len} tokens",
                self.supervised.len()
            )));
        }
        if let Some(locs) = &self.loc_targets {
            if locs.len() != len {
                return Err(err(format!("{} location targets for {len} tokens", locs.len())));
            }
            for (i, l) in locs.iter().enumerate() {
                if let Some(p) = l {
                    if !self.is_supervised(i) {
                        return Err(err(format!("token {i} has a location but is unsupervised")));
                    }
                    if !p.iter().all(|v| (0.0..=1.0).contains(v)) {
                        return Err(err(format!("token {i} location {p:?} outside [0,1]")));
                    }
                }
            }
        }
        if let Some(trajs) = &self.traj_targets {
            if trajs.len() != len {
                return Err(err(format!(
                    "{} trajectory targets for {len} tokens",
                    trajs.len()
                )));
            }
            for (i, t) in trajs.iter().enumerate() {
                if let Some(m) = t {
                    if !self.is_supervised(i) {
                        return Err(err(format!(
                            "token {i} has a trajectory but is unsupervised"
                        )));
                    }
                    if (m.points(), m.frames()) != (points, frames) {
                        return Err(err(format!(
                            "token {i} trajectory is {}x{}, model expects {points}x{frames}",
                            m.points(),
                            m.frames()
                        )));
                    }
                }
            }
        }
        match stage {
            Stage::Localization => {
                let Some(locs) = &self.loc_targets else {
                    return Err(err("stage 1 needs loc_targets".into()));
                };
                if let Some(i) = (0..len).find(|&i| self.is_supervised(i) && locs[i].is_none()) {
                    return Err(err(format!("supervised token {i} has no location")));
                }
            }
            Stage::Trajectory => {
                if self.traj_targets.is_none() {
                    return Err(err("stage 2 needs traj_targets".into()));
                }
            }
            Stage::Instruction => {}
        }
        Ok(())
    }
}
