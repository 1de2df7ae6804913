//! The four subcommands. Each is a pure function of the config, its flags and
//! its input files; every output file is written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rlanimate::agent::{write_atomic, Agent, Checkpoint, Sampling};
use rlanimate::eval::{
    emit_report, flexibility_sweep, position_channels, report_rows, roughness, rows_to_csv, run_ablation,
    AblationKind, ScoreReport,
};
use rlanimate::kinematics::Skeleton;
use rlanimate::motion::{make_dataset, write_bvh, Arm, Behaviour, DatasetSplit, MotionClip};
use rlanimate::signals::{objective_from_meta, SIGNAL_LAYOUT_VERSION};
use rlanimate::training::{TrainingLog, LOG_HEADER};
use rlanimate::{Error, Result};

use crate::config::{ExperimentConfig, Manifest};

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("dataset").join("manifest.json")
}

pub fn run_dir(out: &Path, kind: AblationKind) -> PathBuf {
    out.join("runs").join(kind.name())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn to_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Generates the dataset, writing one JSON file per clip plus the manifest.
pub fn dataset(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let skeleton = Skeleton::canonical();
    let split = make_dataset(&skeleton, &config.dataset)?;
    let dir = out.join("dataset");
    for clip in split.train.iter().chain(&split.test) {
        write_text(&dir.join("clips").join(format!("{}.json", clip.id)), &clip.to_json())?;
    }
    let manifest = Manifest {
        layout_version: SIGNAL_LAYOUT_VERSION,
        spec: config.dataset.clone(),
        clip_dir: "clips".into(),
        train: split.train.iter().map(|c| c.id.clone()).collect(),
        test: split.test.iter().map(|c| c.id.clone()).collect(),
    };
    let path = manifest_path(out);
    write_text(&path, &to_pretty(&manifest))?;
    write_text(&out.join("config.json"), &(config.to_json() + "\n"))?;
    println!(
        "dataset: {} train + {} test clips -> {}",
        manifest.train.len(),
        manifest.test.len(),
        path.display()
    );
    Ok(path)
}

/// Reads a manifest and its clips, refusing signal layouts this build does not speak.
pub fn load_dataset(path: &Path, skeleton: &Skeleton) -> Result<(Manifest, DatasetSplit)> {
    let manifest = Manifest::load(path)?;
    if manifest.layout_version != SIGNAL_LAYOUT_VERSION {
        return Err(Error::VersionMismatch {
            expected: SIGNAL_LAYOUT_VERSION,
            found: manifest.layout_version,
        });
    }
    let dir = path.parent().unwrap_or(Path::new(".")).join(&manifest.clip_dir);
    let load = |ids: &[String]| -> Result<Vec<MotionClip>> {
        ids.iter().map(|id| MotionClip::load(skeleton, &dir.join(format!("{id}.json")))).collect()
    };
    let split = DatasetSplit {
        train: load(&manifest.train)?,
        test: load(&manifest.test)?,
    };
    Ok((manifest, split))
}

/// Trains one agent (or ablation control) and writes its log, checkpoint and report.
pub fn train(config: &ExperimentConfig, out: &Path, manifest: &Path, kind: AblationKind) -> Result<PathBuf> {
    let skeleton = Skeleton::canonical();
    let (_, split) = load_dataset(manifest, &skeleton)?;
    let dir = run_dir(out, kind);
    let ckpt_path = dir.join("checkpoint.bin");
    let log_path = dir.join("log.csv");
    write_text(&dir.join("config.json"), &(config.to_json() + "\n"))?;

    let mut log = TrainingLog::default();
    let total = config.train.epochs;
    println!("{LOG_HEADER}");
    let result = run_ablation(
        kind,
        &config.train,
        &config.agent,
        &split,
        &skeleton,
        &config.eval,
        &mut |row, agent| {
            println!("{}", row.csv_line());
            log.rows.push(row.clone());
            if row.epoch % config.checkpoint_every == 0 || row.epoch == total {
                Checkpoint::of(agent, config.train.seed).save(&ckpt_path)?;
                write_text(&log_path, &log.to_csv())?;
            }
            Ok(())
        },
    )?;
    // Early stopping can end before a periodic boundary.
    Checkpoint::of(&result.outcome.agent, config.train.seed).save(&ckpt_path)?;
    write_text(&log_path, &result.outcome.log.to_csv())?;

    let mut rows = report_rows(kind.name(), "test", &result.test);
    rows.extend(report_rows(kind.name(), "train", &result.train));
    emit_report(&rows, &[(kind.name().to_string(), result.outcome.log.scores())], &dir)?;
    println!(
        "{}: held-out score {:.2} smoothness {:.2}; training-split score {:.2} smoothness {:.2}",
        kind.name(),
        result.test.mean_score(),
        result.test.mean_smoothness(),
        result.train.mean_score(),
        result.train.mean_smoothness()
    );
    Ok(ckpt_path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Method label for reports: the run directory name when it is an ablation kind.
fn method_of(checkpoint: &Path) -> String {
    checkpoint
        .parent()
        .and_then(|d| d.file_name())
        .and_then(|n| n.to_str())
        .and_then(AblationKind::parse)
        .map_or_else(|| "agent".to_string(), |k| k.name().to_string())
}

fn per_clip_csv(report: &ScoreReport) -> String {
    let mut out = String::from("clip,behaviour,frames,score,smoothness\n");
    for c in &report.clips {
        let _ = writeln!(out, "{},{},{},{},{}", c.id, c.behaviour.name(), c.frames, c.score, c.smoothness);
    }
    out
}

/// Scores a checkpoint on one split; optionally sweeps time-warp factors.
pub fn eval(
    config: &ExperimentConfig,
    out: &Path,
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    flex: &[f64],
) -> Result<PathBuf> {
    let skeleton = Skeleton::canonical();
    let ckpt = Checkpoint::load(checkpoint)?;
    let (_, data) = load_dataset(manifest, &skeleton)?;
    let agent = ckpt.into_agent(&skeleton)?;
    let clips: Vec<&MotionClip> = match split {
        Split::Train => data.train.iter().collect(),
        Split::Test => data.test.iter().collect(),
    };
    let method = method_of(checkpoint);
    let report = rlanimate::eval::evaluate_agent(&agent, &clips, &skeleton, &config.eval, None, config.train.execution)?;
    let rows = report_rows(&method, split.name(), &report);

    let dir = out.join("eval").join(format!("{method}-{}", split.name()));
    let curve = match std::fs::read_to_string(checkpoint.with_file_name("log.csv")) {
        Ok(text) => TrainingLog::from_csv(&text)?.scores(),
        Err(_) => Vec::new(),
    };
    emit_report(&rows, &[(method.clone(), curve)], &dir)?;
    write_text(&dir.join("clips.csv"), &per_clip_csv(&report))?;
    print!("{}", rows_to_csv(&rows));

    if !flex.is_empty() {
        let sweep = flexibility_sweep(&agent, &clips, flex, &skeleton, &config.eval, config.train.execution)?;
        write_text(&dir.join("flex.csv"), &sweep.to_csv())?;
        for f in sweep.factors() {
            println!("flex {f}: mean smoothness {:.3}", sweep.mean_smoothness(f));
        }
    }
    Ok(dir)
}

/// What `generate` should portray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request {
    Point { target: [f64; 3], normalize: bool },
    Wave { exaggeration: f64 },
}

/// Validates the request and returns the behaviour and its attributes.
pub fn request_attributes(request: Request) -> Result<(Behaviour, [f64; 3])> {
    match request {
        Request::Point { target, normalize } => {
            let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Validation(format!("point target {target:?} has no direction")));
            }
            if (norm - 1.0).abs() > 1e-6 {
                if !normalize {
                    return Err(Error::Validation(format!(
                        "point target {target:?} has norm {norm}; pass --normalize to rescale it"
                    )));
                }
                return Ok((Behaviour::Point, target.map(|v| v / norm)));
            }
            Ok((Behaviour::Point, target))
        }
        Request::Wave { exaggeration } => {
            if !(0.0..=1.0).contains(&exaggeration) {
                return Err(Error::Validation(format!("wave exaggeration {exaggeration} outside [0, 1]")));
            }
            Ok((Behaviour::Wave, [exaggeration; 3]))
        }
    }
}

/// Rolls a checkpoint out deterministically for a user-specified objective.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    config: &ExperimentConfig,
    out: &Path,
    checkpoint: &Path,
    request: Request,
    arm: Arm,
    frames: usize,
    name: &str,
    bvh: bool,
) -> Result<PathBuf> {
    let (behaviour, attributes) = request_attributes(request)?;
    if frames == 0 {
        return Err(Error::Validation("--frames must be at least 1".into()));
    }
    let skeleton = Skeleton::canonical();
    let agent: Agent = Checkpoint::load(checkpoint)?.into_agent(&skeleton)?;
    let objectives: Vec<_> = (0..frames)
        .map(|t| objective_from_meta(behaviour, arm, attributes, t, frames))
        .collect();
    let rollout = agent.rollout(&skeleton, &objectives, Sampling::Deterministic)?;
    let clip = rollout.to_clip(&skeleton, name, behaviour, arm, attributes, config.dataset.fps)?;

    let dir = out.join("generated");
    let json = dir.join(format!("{name}.json"));
    write_text(&json, &clip.to_json())?;
    if bvh {
        write_text(&dir.join(format!("{name}.bvh")), &write_bvh(&skeleton, &clip))?;
    }

    let joints = config.eval.joint_indices(&skeleton)?;
    let summary = if frames >= config.eval.filter_window {
        let d = roughness(&position_channels(&clip, &skeleton, &joints), config.eval.filter_window, config.eval.filter_order)?;
        format!("roughness vs own filtered self {d:.6} ({:.6} per frame)", d / frames as f64)
    } else {
        format!("too short for the {}-frame smoothing window", config.eval.filter_window)
    };
    println!("generated {} {} frames ({}), {summary} -> {}", behaviour.name(), frames, arm.name(), json.display());
    Ok(json)
}
