//! End-to-end annotation: manifest + parse trees + first-frame masks + point
//! tracks → one JSONL record per video.
//!
//! On-disk layout consumed by [`run_pipeline`]:
//!
//! - manifest: JSONL, one [`VideoManifest`] per line
//! - trees: one bracketed tree per line; an event uses the tree whose leaves
//!   equal its whitespace-normalized caption
//! - masks: `<masks>/<video_id>/<event index>/<np slug>.json`, where the slug
//!   is the phrase with whitespace replaced by `_`; a missing file means the
//!   phrase was rejected as a referring expression
//! - tracks: `<tracks>/<video_id>.jsonl`, one [`Clip`] per line with
//!   `clip_id` equal to the event index

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse_tree::{extract_lowest_np, parse_bracketed, NounPhrase, ParseError, ParseTree};
use crate::trajectory::{
    condense, filter_tracks_by_mask, to_matrix, Clip, KMeansConfig, Mask, TrajectoryError,
    TrajectoryMatrix,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    Tree {
        path: PathBuf,
        line: usize,
        source: ParseError,
    },
    #[error("invalid manifest entry for {video}: {reason}")]
    Manifest { video: String, reason: String },
    #[error("no parse tree for caption {caption:?}")]
    MissingTree { caption: String },
    #[error("no track clip for {video} event {event}")]
    MissingTracks { video: String, event: usize },
    #[error("{video} event {event}: {source}")]
    Trajectory {
        video: String,
        event: usize,
        source: TrajectoryError,
    },
    #[error("{0}")]
    Temporal(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEvent {
    pub caption: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    /// Seconds.
    pub duration: f64,
    pub width: u32,
    pub height: u32,
    pub src_frames: usize,
    pub events: Vec<ManifestEvent>,
}

impl VideoManifest {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |reason: String| PipelineError::Manifest {
            video: self.video_id.clone(),
            reason,
        };
        if !(self.duration > 0.0) {
            return Err(bad(format!("duration {} must be positive", self.duration)));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.caption.trim().is_empty() {
                return Err(bad(format!("event {i} has an empty caption")));
            }
            if !(0.0 <= e.start && e.start < e.end && e.end <= self.duration) {
                return Err(bad(format!(
                    "event {i} [{}, {}] is not inside [0, {}]",
                    e.start, e.end, self.duration
                )));
            }
        }
        Ok(())
    }
}

/// Where the temporal phrase goes in the formatted text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalPosition {
    /// `From s to e, caption`
    Prefix,
    /// `caption, from s to e`
    #[default]
    Suffix,
}

/// Masks covering less than this fraction of the frame are treated as too
/// small to track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallObjectPolicy {
    pub min_area_fraction: f64,
}

impl Default for SmallObjectPolicy {
    fn default() -> Self {
        SmallObjectPolicy {
            min_area_fraction: 0.0005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Sampled frames per trajectory (N).
    pub frames: usize,
    /// Key points per object (P).
    pub points: usize,
    pub small_objects: SmallObjectPolicy,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub position: TemporalPosition,
    /// Abort on the first per-video error instead of skipping the video.
    pub strict: bool,
    /// Worker threads for per-video processing; 0 uses all cores.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let k = KMeansConfig::default();
        PipelineConfig {
            frames: 100,
            points: 3,
            small_objects: SmallObjectPolicy::default(),
            seed: 0,
            restarts: k.restarts,
            max_iter: k.max_iter,
            tol: k.tol,
            position: TemporalPosition::Suffix,
            strict: false,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            seed: self.seed,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.frames == 0 || self.points == 0 {
            return Err(PipelineError::Temporal(
                "frames and points must be at least 1".into(),
            ));
        }
        let f = self.small_objects.min_area_fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(PipelineError::Temporal(format!(
                "min area fraction {f} must be in [0, 1)"
            )));
        }
        Ok(())
    }
}

/// 0-based index of the sampled frame containing time `t`.
pub fn timestamp_to_frame(t: f64, duration: f64, frames: usize) -> Result<usize, PipelineError> {
    if !(duration > 0.0) {
        return Err(PipelineError::Temporal(format!(
            "duration {duration} must be positive"
        )));
    }
    if !t.is_finite() || frames == 0 {
        return Err(PipelineError::Temporal(format!(
            "cannot map t={t} onto {frames} frames"
        )));
    }
    let idx = (t / duration * frames as f64).floor();
    Ok(idx.clamp(0.0, (frames - 1) as f64) as usize)
}

pub fn format_temporal(
    caption: &str,
    start: usize,
    end: usize,
    position: TemporalPosition,
) -> Result<String, PipelineError> {
    if start > end {
        return Err(PipelineError::Temporal(format!(
            "start frame {start} is after end frame {end}"
        )));
    }
    Ok(match position {
        TemporalPosition::Prefix => format!("From {start} to {end}, {caption}"),
        TemporalPosition::Suffix => format!("{caption}, from {start} to {end}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub np: NounPhrase,
    pub trajectory: TrajectoryMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// No mask: not a valid referring expression.
    NoMask,
    /// Mask below the small-object threshold.
    TooSmall,
    /// No tracked point starts inside the mask.
    NoTracks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPhrase {
    pub np: NounPhrase,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub caption: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub formatted_text: String,
    pub objects: Vec<ObjectAnnotation>,
    #[serde(default)]
    pub dropped: Vec<DroppedPhrase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub events: Vec<EventAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub videos: usize,
    pub events: usize,
    pub trajectories: usize,
}

impl Summary {
    pub fn of(records: &[VideoRecord]) -> Self {
        Summary {
            videos: records.len(),
            events: records.iter().map(|r| r.events.len()).sum(),
            trajectories: records
                .iter()
                .flat_map(|r| &r.events)
                .map(|e| e.objects.len())
                .sum(),
        }
    }
}

/// Annotates one event.
///
/// Lowest-layer noun phrases without a mask, or with a mask below the area
/// threshold, are dropped; the rest have their tracks filtered by the mask,
/// condensed to `cfg.points` key points and sampled onto `cfg.frames`
/// frames. `clip` may be `None` only when no phrase survives the mask checks.
pub fn annotate_event(
    event: &ManifestEvent,
    duration: f64,
    tree: &ParseTree,
    masks: &HashMap<String, Mask>,
    clip: Option<&Clip>,
    cfg: &PipelineConfig,
) -> Result<EventAnnotation, AnnotateError> {
    let start_frame = timestamp_to_frame(event.start, duration, cfg.frames)?;
    let end_frame = timestamp_to_frame(event.end, duration, cfg.frames)?;
    let formatted_text = format_temporal(&event.caption, start_frame, end_frame, cfg.position)?;
    let mut objects = Vec::new();
    let mut dropped = Vec::new();
    for mut np in extract_lowest_np(tree) {
        let Some(mask) = masks.get(&np.text) else {
            np.valid = false;
            dropped.push(DroppedPhrase {
                np,
                reason: DropReason::NoMask,
            });
            continue;
        };
        if mask.area_fraction() < cfg.small_objects.min_area_fraction {
            dropped.push(DroppedPhrase {
                np,
                reason: DropReason::TooSmall,
            });
            continue;
        }
        let clip = clip.ok_or(AnnotateError::MissingTracks)?;
        clip.check_mask(mask)?;
        let inside = filter_tracks_by_mask(&clip.tracks, mask)?;
        let keypoints = condense(&inside, cfg.points, &cfg.kmeans());
        if keypoints.is_empty() {
            dropped.push(DroppedPhrase {
                np,
                reason: DropReason::NoTracks,
            });
            continue;
        }
        let trajectory = to_matrix(
            &keypoints,
            cfg.points,
            cfg.frames,
            clip.width,
            clip.height,
            clip.frames,
        );
        objects.push(ObjectAnnotation { np, trajectory });
    }
    Ok(EventAnnotation {
        caption: event.caption.clone(),
        start_frame,
        end_frame,
        formatted_text,
        objects,
        dropped,
    })
}

/// Failure of a single event, before video/event context is attached.
#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("no track clip")]
    MissingTracks,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Parse trees keyed by their space-joined leaves.
#[derive(Debug, Clone, Default)]
pub struct TreeIndex {
    trees: HashMap<String, ParseTree>,
}

fn normalize_caption(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl TreeIndex {
    pub fn from_trees(trees: impl IntoIterator<Item = ParseTree>) -> Self {
        TreeIndex {
            trees: trees.into_iter().map(|t| (t.text(), t)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut trees = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            trees.push(parse_bracketed(line).map_err(|source| PipelineError::Tree {
                path: path.to_owned(),
                line: i + 1,
                source,
            })?);
        }
        Ok(TreeIndex::from_trees(trees))
    }

    pub fn get(&self, caption: &str) -> Option<&ParseTree> {
        self.trees.get(&normalize_caption(caption))
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

/// File-name form of a noun phrase.
pub fn np_slug(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .replace(['/', '\\'], "_")
}

/// Reads JSON values from a JSONL file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| PipelineError::Json {
                path: path.to_owned(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_owned(),
        line: 0,
        source,
    })
}

/// Input locations for a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub manifest: PathBuf,
    pub trees: PathBuf,
    pub masks_dir: PathBuf,
    pub tracks_dir: PathBuf,
}

fn load_masks(
    dir: &Path,
    tree: &ParseTree,
) -> Result<HashMap<String, Mask>, PipelineError> {
    let mut masks = HashMap::new();
    for np in extract_lowest_np(tree) {
        if masks.contains_key(&np.text) {
            continue;
        }
        let path = dir.join(format!("{}.json", np_slug(&np.text)));
        if path.is_file() {
            masks.insert(np.text, read_json(&path)?);
        }
    }
    Ok(masks)
}

fn load_clips(path: &Path) -> Result<HashMap<String, Clip>, PipelineError> {
    if !path.is_file() {
        return Ok(HashMap::new());
    }
    Ok(read_jsonl::<Clip>(path)?
        .into_iter()
        .map(|c| (c.clip_id.clone(), c))
        .collect())
}

/// Annotates every event of one video.
pub fn annotate_video(
    video: &VideoManifest,
    trees: &TreeIndex,
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
) -> Result<VideoRecord, PipelineError> {
    video.validate()?;
    let clips = load_clips(&inputs.tracks_dir.join(format!("{}.jsonl", video.video_id)))?;
    let mut events = Vec::with_capacity(video.events.len());
    for (i, event) in video.events.iter().enumerate() {
        let tree = trees
            .get(&event.caption)
            .ok_or_else(|| PipelineError::MissingTree {
                caption: event.caption.clone(),
            })?;
        let masks = load_masks(
            &inputs.masks_dir.join(&video.video_id).join(i.to_string()),
            tree,
        )?;
        let clip = clips.get(&i.to_string());
        if let Some(c) = clip {
            let ctx = |source| PipelineError::Trajectory {
                video: video.video_id.clone(),
                event: i,
                source,
            };
            c.validate().map_err(ctx)?;
            if (c.width, c.height) != (video.width, video.height) {
                return Err(ctx(TrajectoryError::DimensionMismatch {
                    mask_w: video.width,
                    mask_h: video.height,
                    clip_w: c.width,
                    clip_h: c.height,
                }));
            }
        }
        let ann = annotate_event(event, video.duration, tree, &masks, clip, cfg).map_err(
            |e| match e {
                AnnotateError::MissingTracks => PipelineError::MissingTracks {
                    video: video.video_id.clone(),
                    event: i,
                },
                AnnotateError::Trajectory(source) => PipelineError::Trajectory {
                    video: video.video_id.clone(),
                    event: i,
                    source,
                },
                AnnotateError::Pipeline(p) => p,
            },
        )?;
        events.push(ann);
    }
    Ok(VideoRecord {
        video_id: video.video_id.clone(),
        events,
    })
}

/// Annotates all videos of the manifest, in manifest order. Failed videos
/// are logged and skipped unless `cfg.strict`.
pub fn build_records(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
) -> Result<Vec<VideoRecord>, PipelineError> {
    cfg.validate()?;
    let manifest: Vec<VideoManifest> = read_jsonl(&inputs.manifest)?;
    let trees = TreeIndex::load(&inputs.trees)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .expect("thread pool");
    let results: Vec<Result<VideoRecord, PipelineError>> = pool.install(|| {
        manifest
            .par_iter()
            .map(|v| annotate_video(v, &trees, inputs, cfg))
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    for (video, res) in manifest.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) if cfg.strict => return Err(e),
            Err(e) => log::warn!("skipping video {}: {e}", video.video_id),
        }
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[VideoRecord]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Builds the dataset and writes it to `out`.
pub fn run_pipeline(
    inputs: &PipelineInputs,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let records = build_records(inputs, cfg)?;
    write_records(out, &records)?;
    let summary = Summary::of(&records);
    log::info!(
        "wrote {} videos, {} events, {} trajectories to {}",
        summary.videos,
        summary.events,
        summary.trajectories,
        out.display()
    );
    Ok(summary)
}
