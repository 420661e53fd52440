use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};

use pite_core::ablation::ablate_points;
use pite_core::parse_tree::NpRecord;
use pite_core::pipeline::{
    read_json, read_jsonl, run_pipeline, PipelineConfig, PipelineInputs, SmallObjectPolicy,
    TemporalPosition,
};
use pite_core::trainer::{
    grad_check, synthetic, train, Stage, ToyModelParams, TrainerConfig, TrainingSample,
};
use pite_core::trajectory::{
    condense, filter_tracks_by_mask, to_matrix, Clip, KMeansConfig, Mask,
};

mod eval;

const SEED_ENV: &str = "PITE_SEED";

#[derive(Parser)]
#[command(name = "pite", version, about = "Trajectory annotation, toy alignment training and video-LLM evaluation")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the lowest-layer noun phrases of each bracketed tree as JSONL
    ExtractNp {
        #[arg(long)]
        trees: PathBuf,
    },
    /// Condense the tracks of each clip inside a first-frame mask to key-point trajectories
    CondenseTracks {
        /// Track file (JSONL, one clip per line)
        #[arg(long)]
        tracks: PathBuf,
        /// Mask file (JSON run lengths)
        #[arg(long)]
        mask: PathBuf,
        /// Only this clip
        #[arg(long)]
        clip: Option<String>,
        #[arg(long, default_value_t = 3)]
        points: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the annotated dataset from a manifest, parse trees, masks and tracks
    BuildDataset {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        points: usize,
        /// Masks below this fraction of the frame are dropped
        #[arg(long, default_value_t = 0.0005)]
        min_area: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Position::Suffix)]
        position: Position,
        /// Abort on the first bad video instead of skipping it
        #[arg(long)]
        strict: bool,
        /// Worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Write a seeded synthetic training set for one stage
    SynthData {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        seq_len: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage of the toy model with full-batch gradient descent
    TrainToy {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        /// Training samples (JSONL)
        #[arg(long)]
        data: PathBuf,
        /// Trainer config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Where to write the trained parameters (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Start from these parameters instead of a fresh initialization
        #[arg(long)]
        init: Option<PathBuf>,
        /// Loss curve output (CSV: step,loss)
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare analytic and finite-difference gradients on a seeded fixture
    GradCheck {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Temporal grounding scores (R@m, mIoU), x100
    EvalGrounding {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Dense captioning scores (SODA_c and IoU-bucketed caption score), x100
    EvalDense {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = eval::Scorer::Meteor)]
        scorer: eval::Scorer,
    },
    /// Rebuild the dataset and train stage 2 for each key-point count
    AblatePoints {
        /// Comma-separated key-point counts
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        points: Vec<usize>,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Video manifest (JSONL)
    #[arg(long)]
    manifest: PathBuf,
    /// Bracketed parse trees, one per line
    #[arg(long)]
    trees: PathBuf,
    /// Mask directory (<video>/<event>/<np>.json)
    #[arg(long)]
    masks: PathBuf,
    /// Track directory (<video>.jsonl)
    #[arg(long)]
    tracks: PathBuf,
}

impl From<InputArgs> for PipelineInputs {
    fn from(a: InputArgs) -> Self {
        PipelineInputs {
            manifest: a.manifest,
            trees: a.trees,
            masks_dir: a.masks,
            tracks_dir: a.tracks,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Position {
    Prefix,
    Suffix,
}

impl From<Position> for TemporalPosition {
    fn from(p: Position) -> Self {
        match p {
            Position::Prefix => TemporalPosition::Prefix,
            Position::Suffix => TemporalPosition::Suffix,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let seed_override = match std::env::var(SEED_ENV) {
        Ok(s) => match s.trim().parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                eprintln!("error: {SEED_ENV}={s:?} is not an unsigned integer");
                return ExitCode::from(1);
            }
        },
        Err(_) => None,
    };

    match run(cli.command, seed_override) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<TrainerConfig> {
    let cfg: TrainerConfig = match path {
        Some(p) => read_json(p)?,
        None => TrainerConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command, seed_override: Option<u64>) -> Result<()> {
    let pick = |seed: u64| seed_override.unwrap_or(seed);
    match command {
        Command::ExtractNp { trees } => {
            let text = fs::read_to_string(&trees)
                .with_context(|| format!("reading {}", trees.display()))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let tree = pite_core::parse_tree::parse_bracketed(line)
                    .with_context(|| format!("{}:{}", trees.display(), i + 1))?;
                print_json(&NpRecord::from_tree(&tree))?;
            }
        }
        Command::CondenseTracks {
            tracks,
            mask,
            clip,
            points,
            frames,
            seed,
        } => {
            if points == 0 || frames == 0 {
                bail!("--points and --frames must be at least 1");
            }
            let mask: Mask = read_json(&mask)?;
            let clips: Vec<Clip> = read_jsonl(&tracks)?;
            let kcfg = KMeansConfig {
                seed: pick(seed),
                ..Default::default()
            };
            let mut found = false;
            for c in clips.iter().filter(|c| clip.as_ref().is_none_or(|id| *id == c.clip_id)) {
                found = true;
                c.validate()?;
                c.check_mask(&mask)?;
                let inside = filter_tracks_by_mask(&c.tracks, &mask)?;
                let keypoints = condense(&inside, points, &kcfg);
                let trajectory = to_matrix(&keypoints, points, frames, c.width, c.height, c.frames);
                print_json(&serde_json::json!({
                    "clip_id": c.clip_id,
                    "keypoints": keypoints.len(),
                    "trajectory": trajectory,
                }))?;
            }
            if let (Some(id), false) = (clip, found) {
                bail!("no clip {id:?} in {}", tracks.display());
            }
        }
        Command::BuildDataset {
            inputs,
            out,
            frames,
            points,
            min_area,
            seed,
            position,
            strict,
            jobs,
        } => {
            let cfg = PipelineConfig {
                frames,
                points,
                small_objects: SmallObjectPolicy {
                    min_area_fraction: min_area,
                },
                seed: pick(seed),
                position: position.into(),
                strict,
                jobs,
                ..Default::default()
            };
            let summary = run_pipeline(&inputs.into(), &out, &cfg)?;
            print_json(&summary)?;
        }
        Command::SynthData {
            stage,
            config,
            samples,
            seq_len,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.seed = seed_override.or(seed).unwrap_or(cfg.seed);
            if samples == 0 || seq_len == 0 {
                bail!("--samples and --seq-len must be at least 1");
            }
            let stage = Stage::try_from(stage)?;
            let data = synthetic::dataset(&cfg, stage, samples, seq_len);
            write_jsonl(&out, &data)?;
        }
        Command::TrainToy {
            stage,
            data,
            config,
            out,
            init,
            curve,
            seed,
        } => {
            let mut cfg = load_config(Some(&config))?;
            cfg.seed = seed_override.or(seed).unwrap_or(cfg.seed);
            let stage = Stage::try_from(stage)?;
            let samples: Vec<TrainingSample> = read_jsonl(&data)?;
            let mut params = match &init {
                Some(p) => read_json::<ToyModelParams>(p)?,
                None => ToyModelParams::init(&cfg),
            };
            params.check_shapes(&cfg)?;
            if stage == Stage::Trajectory {
                params.tile_trajectory_projector();
            }
            let outcome = train(params, &samples, stage, &cfg)?;
            let json = serde_json::to_string(&outcome.params)?;
            fs::write(&out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = curve {
                let mut csv = String::from("step,loss\n");
                for (step, loss) in outcome.loss_curve.iter().enumerate() {
                    csv.push_str(&format!("{step},{loss}\n"));
                }
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&serde_json::json!({
                "stage": stage.number(),
                "steps": cfg.steps,
                "initial_loss": outcome.loss_curve[0],
                "final_loss": outcome.loss_curve.last(),
            }))?;
        }
        Command::GradCheck { stage, seed, eps } => {
            let seed = pick(seed);
            let stage = Stage::try_from(stage)?;
            let (cfg, params, sample) = synthetic::grad_fixture(seed, stage);
            let err = grad_check(&params, &sample, stage, cfg.lambda, cfg.smoothing, eps)?;
            print_json(&serde_json::json!({
                "stage": stage.number(),
                "seed": seed,
                "eps": eps,
                "max_rel_error": err,
            }))?;
            if !(err < 1e-4) {
                bail!("gradient check failed: max relative error {err:e}");
            }
        }
        Command::EvalGrounding { pred, gt } => {
            print_json(&eval::grounding(&pred, &gt)?)?;
        }
        Command::EvalDense { pred, gt, scorer } => {
            print_json(&eval::dense(&pred, &gt, scorer)?)?;
        }
        Command::AblatePoints {
            points,
            inputs,
            frames,
            steps,
            seed,
            jobs,
        } => {
            if points.is_empty() || points.contains(&0) {
                bail!("--points must list counts of at least 1");
            }
            let seed = pick(seed);
            let pipeline = PipelineConfig {
                frames,
                seed,
                jobs,
                ..Default::default()
            };
            let trainer = TrainerConfig {
                steps,
                seed,
                ..Default::default()
            };
            for row in ablate_points(&inputs.into(), &points, &pipeline, &trainer)? {
                print_json(&row)?;
            }
        }
    }
    Ok(())
}
