//! Dense point tracks to condensed key-point trajectory matrices.
//!
//! Tracks come from an external point tracker, the first-frame mask from an
//! external segmenter. This module filters tracks by the mask, condenses
//! them to at most `P` key points with k-means++, and samples them onto `N`
//! frames with the `(-1, -1)` absence sentinel.

mod kmeans;
mod mask;
mod matrix;

pub use kmeans::{kmeans_pp, KMeansConfig, KMeansResult, Point};
pub use mask::Mask;
pub use matrix::{TrajectoryMatrix, SENTINEL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("run lengths cover {got} cells, frame has {expected}")]
    BadRle { expected: u64, got: u64 },
    #[error("track has {positions} positions but {visible} visibility flags")]
    LengthMismatch { positions: usize, visible: usize },
    #[error("track is empty")]
    EmptyTrack,
    #[error("tracks disagree on frame count ({expected} vs {got})")]
    FrameCountMismatch { expected: usize, got: usize },
    #[error("mask is {mask_w}x{mask_h} but clip is {clip_w}x{clip_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        clip_w: u32,
        clip_h: u32,
    },
    #[error("cannot cluster an empty point set")]
    NoPoints,
    #[error("cannot form {k} clusters from {points} points")]
    BadClusterCount { k: usize, points: usize },
    #[error("trajectory cell ({point}, {frame}) is neither in [0,1]^2 nor the sentinel")]
    MixedCell { point: usize, frame: usize },
    #[error("trajectory matrix shape is inconsistent: {0}")]
    BadShape(String),
}

/// One tracked scene point over the source frames of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrackRepr", into = "TrackRepr")]
pub struct PointTrack {
    positions: Vec<Point>,
    visible: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TrackRepr {
    xy: Vec<Point>,
    vis: Vec<bool>,
}

impl TryFrom<TrackRepr> for PointTrack {
    type Error = TrajectoryError;

    fn try_from(r: TrackRepr) -> Result<Self, Self::Error> {
        PointTrack::new(r.xy, r.vis)
    }
}

impl From<PointTrack> for TrackRepr {
    fn from(t: PointTrack) -> Self {
        TrackRepr {
            xy: t.positions,
            vis: t.visible,
        }
    }
}

impl PointTrack {
    pub fn new(positions: Vec<Point>, visible: Vec<bool>) -> Result<Self, TrajectoryError> {
        if positions.len() != visible.len() {
            return Err(TrajectoryError::LengthMismatch {
                positions: positions.len(),
                visible: visible.len(),
            });
        }
        if positions.is_empty() {
            return Err(TrajectoryError::EmptyTrack);
        }
        Ok(PointTrack { positions, visible })
    }

    /// A track visible at the same position on every frame.
    pub fn stationary(at: Point, frames: usize) -> Self {
        PointTrack::new(vec![at; frames.max(1)], vec![true; frames.max(1)])
            .expect("lengths agree")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn visible(&self) -> &[bool] {
        &self.visible
    }

    pub fn first(&self) -> Point {
        self.positions[0]
    }

    pub fn visible_at_start(&self) -> bool {
        self.visible[0]
    }

    /// Position at `frame` if the point is visible there.
    pub fn at(&self, frame: usize) -> Option<Point> {
        match self.visible.get(frame) {
            Some(true) => Some(self.positions[frame]),
            _ => None,
        }
    }
}

/// One line of a track file: every tracked point of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub tracks: Vec<PointTrack>,
}

impl Clip {
    /// Checks that every track spans `frames` frames.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for t in &self.tracks {
            if t.len() != self.frames {
                return Err(TrajectoryError::FrameCountMismatch {
                    expected: self.frames,
                    got: t.len(),
                });
            }
        }
        Ok(())
    }

    pub fn check_mask(&self, mask: &Mask) -> Result<(), TrajectoryError> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(TrajectoryError::DimensionMismatch {
                mask_w: mask.width(),
                mask_h: mask.height(),
                clip_w: self.width,
                clip_h: self.height,
            });
        }
        Ok(())
    }
}

/// Keeps the tracks whose frame-0 position is visible and falls on a
/// foreground pixel of `mask`.
pub fn filter_tracks_by_mask(
    tracks: &[PointTrack],
    mask: &Mask,
) -> Result<Vec<PointTrack>, TrajectoryError> {
    if let Some(first) = tracks.first() {
        if let Some(bad) = tracks.iter().find(|t| t.len() != first.len()) {
            return Err(TrajectoryError::FrameCountMismatch {
                expected: first.len(),
                got: bad.len(),
            });
        }
    }
    Ok(tracks
        .iter()
        .filter(|t| {
            let [x, y] = t.first();
            t.visible_at_start() && mask.contains(x, y)
        })
        .cloned()
        .collect())
}

/// Reduces `tracks` to at most `points` representative tracks.
///
/// Frame-0 positions of the frame-0-visible tracks are clustered, in
/// position order, into `min(points, distinct positions)` groups; each group
/// contributes its medoid, the member nearest the center (lowest input index
/// on ties). Output is ordered by frame-0 position, then input index.
pub fn condense(tracks: &[PointTrack], points: usize, cfg: &KMeansConfig) -> Vec<PointTrack> {
    let by_position = |&a: &usize, &b: &usize| {
        let (pa, pb) = (tracks[a].first(), tracks[b].first());
        pa[0]
            .total_cmp(&pb[0])
            .then(pa[1].total_cmp(&pb[1]))
            .then(a.cmp(&b))
    };
    let mut idx: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].visible_at_start())
        .collect();
    if idx.is_empty() || points == 0 {
        return Vec::new();
    }
    // clustering sees the same point sequence whatever the input order
    idx.sort_by(by_position);
    let firsts: Vec<Point> = idx.iter().map(|&i| tracks[i].first()).collect();
    let mut distinct: Vec<(u64, u64)> = firsts
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let k = points.min(distinct.len());

    let clusters = kmeans_pp(&firsts, k, cfg).expect("1 <= k <= number of points");
    let mut medoids: Vec<Option<(f64, usize)>> = vec![None; k];
    for (pos, &label) in clusters.assignments.iter().enumerate() {
        let d = kmeans::dist2(&firsts[pos], &clusters.centers[label]);
        let cand = (d, idx[pos]);
        let slot = &mut medoids[label];
        if slot.is_none_or(|(bd, bi)| d < bd || (d == bd && idx[pos] < bi)) {
            *slot = Some(cand);
        }
    }
    let mut chosen: Vec<usize> = medoids.into_iter().flatten().map(|(_, i)| i).collect();
    chosen.sort_by(by_position);
    chosen.into_iter().map(|i| tracks[i].clone()).collect()
}

/// Samples key-point tracks onto `frames` uniformly spaced frames of a clip
/// with `src_frames` source frames, normalizing by the clip size.
///
/// Sample `k` reads source frame `floor(k * src_frames / frames)`. Invisible
/// or out-of-frame samples, and rows past the last key point, are the
/// sentinel.
pub fn to_matrix(
    keypoints: &[PointTrack],
    points: usize,
    frames: usize,
    width: u32,
    height: u32,
    src_frames: usize,
) -> TrajectoryMatrix {
    let mut m = TrajectoryMatrix::sentinel(points, frames);
    let (w, h) = (width as f64, height as f64);
    for (j, track) in keypoints.iter().take(points).enumerate() {
        for k in 0..frames {
            let src = k * src_frames / frames;
            if let Some([x, y]) = track.at(src) {
                let cell = [x / w, y / h];
                if (0.0..=1.0).contains(&cell[0]) && (0.0..=1.0).contains(&cell[1]) {
                    m.set(j, k, cell);
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64) -> PointTrack {
        PointTrack::stationary([x, y], 4)
    }

    #[test]
    fn track_validation() {
        assert!(matches!(
            PointTrack::new(vec![[0.0, 0.0]], vec![]),
            Err(TrajectoryError::LengthMismatch { .. })
        ));
        assert!(matches!(
            PointTrack::new(vec![], vec![]),
            Err(TrajectoryError::EmptyTrack)
        ));
    }

    #[test]
    fn full_mask_keeps_frame0_visible() {
        let mut hidden = at(1.0, 1.0);
        hidden.visible[0] = false;
        let tracks = vec![at(1.0, 1.0), hidden, at(8.0, 3.0)];
        let full = Mask::rect(10, 10, 0, 0, 10, 10);
        let kept = filter_tracks_by_mask(&tracks, &full).unwrap();
        assert_eq!(kept, vec![tracks[0].clone(), tracks[2].clone()]);
    }

    #[test]
    fn empty_mask_keeps_nothing() {
        let tracks = vec![at(1.0, 1.0), at(8.0, 3.0)];
        let empty = Mask::rect(10, 10, 0, 0, 0, 0);
        assert!(filter_tracks_by_mask(&tracks, &empty).unwrap().is_empty());
    }

    #[test]
    fn left_half_mask() {
        let tracks: Vec<_> = [1.0, 2.0, 4.0, 7.0, 9.0]
            .iter()
            .map(|&x| at(x, 5.0))
            .collect();
        let left = Mask::rect(10, 10, 0, 0, 5, 10);
        let kept: Vec<f64> = filter_tracks_by_mask(&tracks, &left)
            .unwrap()
            .iter()
            .map(|t| t.first()[0])
            .collect();
        assert_eq!(kept, [1.0, 2.0, 4.0]);
    }

    #[test]
    fn filter_rejects_ragged_tracks() {
        let tracks = vec![at(1.0, 1.0), PointTrack::stationary([2.0, 2.0], 7)];
        let full = Mask::rect(10, 10, 0, 0, 10, 10);
        assert!(matches!(
            filter_tracks_by_mask(&tracks, &full),
            Err(TrajectoryError::FrameCountMismatch {
                expected: 4,
                got: 7
            })
        ));
    }

    #[test]
    fn clip_mask_dimension_check() {
        let clip = Clip {
            clip_id: "0".into(),
            width: 10,
            height: 8,
            frames: 4,
            tracks: vec![at(1.0, 1.0)],
        };
        assert!(clip.validate().is_ok());
        assert!(clip.check_mask(&Mask::rect(10, 8, 0, 0, 1, 1)).is_ok());
        assert!(matches!(
            clip.check_mask(&Mask::rect(8, 10, 0, 0, 1, 1)),
            Err(TrajectoryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn condense_exact_p_distinct() {
        let tracks = vec![at(1.0, 1.0), at(5.0, 5.0), at(9.0, 2.0)];
        let out = condense(&tracks, 3, &KMeansConfig::default());
        assert_eq!(out, tracks);
    }

    #[test]
    fn condense_single_track() {
        let tracks = vec![at(3.0, 3.0)];
        assert_eq!(condense(&tracks, 3, &KMeansConfig::default()), tracks);
    }

    #[test]
    fn condense_duplicates_tie_breaks_on_index() {
        let mut a = at(3.0, 3.0);
        let mut b = at(3.0, 3.0);
        a.positions[1] = [0.0, 0.0];
        b.positions[1] = [1.0, 1.0];
        let out = condense(&[a.clone(), b], 3, &KMeansConfig::default());
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn condense_empty() {
        assert!(condense(&[], 3, &KMeansConfig::default()).is_empty());
    }

    #[test]
    fn matrix_all_sentinel_without_keypoints() {
        let m = to_matrix(&[], 3, 5, 10, 10, 20);
        assert!(m.cells().iter().all(|&c| c == SENTINEL));
        assert_eq!((m.points(), m.frames()), (3, 5));
    }

    #[test]
    fn matrix_static_point() {
        let m = to_matrix(&[PointTrack::stationary([5.0, 5.0], 30)], 3, 10, 10, 10, 30);
        for k in 0..10 {
            assert_eq!(m.get(0, k), [0.5, 0.5]);
            assert_eq!(m.get(1, k), SENTINEL);
            assert_eq!(m.get(2, k), SENTINEL);
        }
    }

    #[test]
    fn matrix_half_visible() {
        let vis: Vec<bool> = (0..100).map(|f| f < 50).collect();
        let t = PointTrack::new(vec![[2.0, 3.0]; 100], vis).unwrap();
        let m = to_matrix(&[t], 1, 100, 10, 10, 100);
        for k in 0..100 {
            if k < 50 {
                assert_eq!(m.get(0, k), [0.2, 0.3]);
            } else {
                assert_eq!(m.get(0, k), SENTINEL);
            }
        }
    }

    #[test]
    fn matrix_frame_mapping_downsamples() {
        // frame f sits at x = f
        let t = PointTrack::new((0..10).map(|f| [f as f64, 0.0]).collect(), vec![true; 10])
            .unwrap();
        let m = to_matrix(&[t], 1, 4, 10, 10, 10);
        let xs: Vec<f64> = (0..4).map(|k| m.get(0, k)[0]).collect();
        assert_eq!(xs, [0.0, 0.2, 0.5, 0.7]);
    }

    #[test]
    fn out_of_frame_visible_becomes_sentinel() {
        let t = PointTrack::new(vec![[1.0, 1.0], [12.0, 1.0]], vec![true, true]).unwrap();
        let m = to_matrix(&[t], 1, 2, 10, 10, 2);
        assert_eq!(m.get(0, 0), [0.1, 0.1]);
        assert_eq!(m.get(0, 1), SENTINEL);
    }
}
