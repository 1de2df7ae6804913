//! Scoring a trained agent on held-out or training clips.

use serde::{Deserialize, Serialize};

use super::metrics::{frame_errors, score_from_errors};
use super::smoothing::{roughness, position_channels, smoothness_from_roughness, sg_coefficients};
use crate::agent::{Agent, Sampling};
use crate::exec::Execution;
use crate::kinematics::Skeleton;
use crate::motion::{resample_clip, Behaviour, MotionClip};
use crate::signals::{objective_sequence, DESCRIPTION_JOINTS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub filter_window: usize,
    pub filter_order: usize,
    /// Joints entering the error and smoothness sums; defaults to the ten
    /// description joints.
    pub joints: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            filter_window: 9,
            filter_order: 3,
            joints: DESCRIPTION_JOINTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        sg_coefficients(self.filter_window, self.filter_order)?;
        if self.joints.is_empty() {
            return Err(Error::Config("eval.joints must not be empty".into()));
        }
        Ok(())
    }

    pub fn joint_indices(&self, skeleton: &Skeleton) -> Result<Vec<usize>> {
        self.joints
            .iter()
            .map(|n| {
                skeleton
                    .joint_index(n)
                    .ok_or_else(|| Error::Config(format!("eval.joints names unknown joint '{n}'")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipScore {
    pub id: String,
    pub behaviour: Behaviour,
    pub frames: usize,
    pub score: f64,
    pub smoothness: f64,
    pub frame_errors: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub clips: Vec<ClipScore>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl ScoreReport {
    pub fn mean_score(&self) -> f64 {
        mean(self.clips.iter().map(|c| c.score))
    }

    pub fn mean_smoothness(&self) -> f64 {
        mean(self.clips.iter().map(|c| c.smoothness))
    }

    pub fn of(&self, behaviour: Behaviour) -> ScoreReport {
        ScoreReport {
            clips: self.clips.iter().filter(|c| c.behaviour == behaviour).cloned().collect(),
        }
    }
}

/// Scores one deterministic rollout against `reference`.
///
/// With a time-warp `factor`, the episode runs `ceil(factor * n)` frames and
/// is compared with the reference resampled to that length.
pub fn score_clip(
    agent: &Agent,
    reference: &MotionClip,
    skeleton: &Skeleton,
    eval: &EvalConfig,
    factor: Option<f64>,
) -> Result<ClipScore> {
    let joints = eval.joint_indices(skeleton)?;
    let target = match factor {
        Some(f) => resample_clip(skeleton, reference, f)?,
        None => reference.clone(),
    };
    let objectives = objective_sequence(reference, Some(target.len()));
    let rollout = agent.rollout(skeleton, &objectives, Sampling::Deterministic)?;
    let generated = rollout.to_clip(
        skeleton,
        reference.id.clone(),
        reference.behaviour,
        reference.arm,
        reference.attributes,
        reference.fps,
    )?;
    let errors = frame_errors(&generated, &target, skeleton, &joints)?;
    let d_agent = roughness(&position_channels(&generated, skeleton, &joints), eval.filter_window, eval.filter_order)?;
    let d_ref = roughness(&position_channels(&target, skeleton, &joints), eval.filter_window, eval.filter_order)?;
    Ok(ClipScore {
        id: reference.id.clone(),
        behaviour: reference.behaviour,
        frames: generated.len(),
        score: score_from_errors(&errors)?,
        smoothness: smoothness_from_roughness(d_agent, d_ref),
        frame_errors: errors,
    })
}

/// Deterministic-mode scores for every clip, in input order.
pub fn evaluate_agent(
    agent: &Agent,
    clips: &[&MotionClip],
    skeleton: &Skeleton,
    eval: &EvalConfig,
    factor: Option<f64>,
    exec: Execution,
) -> Result<ScoreReport> {
    eval.validate()?;
    let results = exec.map(clips, |_, clip| score_clip(agent, clip, skeleton, eval, factor));
    Ok(ScoreReport {
        clips: results.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexRow {
    pub factor: f64,
    pub clip_id: String,
    pub frames: usize,
    pub score: f64,
    pub smoothness: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlexReport {
    pub rows: Vec<FlexRow>,
}

impl FlexReport {
    pub fn factors(&self) -> Vec<f64> {
        let mut f: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !f.contains(&r.factor) {
                f.push(r.factor);
            }
        }
        f
    }

    pub fn mean_smoothness(&self, factor: f64) -> f64 {
        mean(self.rows.iter().filter(|r| r.factor == factor).map(|r| r.smoothness))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("factor,clip,frames,score,smoothness\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.factor, r.clip_id, r.frames, r.score, r.smoothness));
        }
        out
    }
}

/// Smoothness (and score) of time-warped rollouts for every factor and clip.
pub fn flexibility_sweep(
    agent: &Agent,
    clips: &[&MotionClip],
    factors: &[f64],
    skeleton: &Skeleton,
    eval: &EvalConfig,
    exec: Execution,
) -> Result<FlexReport> {
    if let Some(f) = factors.iter().find(|f| !(0.1..=4.0).contains(*f)) {
        return Err(Error::Config(format!("time-warp factor {f} outside [0.1, 4]")));
    }
    let mut rows = Vec::with_capacity(factors.len() * clips.len());
    for &f in factors {
        // Factor 1 is the unwarped evaluation exactly.
        let factor = if f == 1.0 { None } else { Some(f) };
        let report = evaluate_agent(agent, clips, skeleton, eval, factor, exec)?;
        rows.extend(report.clips.into_iter().map(|c| FlexRow {
            factor: f,
            clip_id: c.id,
            frames: c.frames,
            score: c.score,
            smoothness: c.smoothness,
        }));
    }
    Ok(FlexReport { rows })
}
