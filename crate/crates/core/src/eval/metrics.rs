//! Per-frame position error, the penalised total, and the 0–100 score.

use crate::kinematics::{fk_unchecked, PoseGeometry, Skeleton};
use crate::motion::{resample_frames, MotionClip};
use crate::{Error, Result};

/// Sum over `joints` of the L1 distance between root-relative positions.
pub fn error_per_frame(agent: &PoseGeometry, reference: &PoseGeometry, joints: &[usize]) -> f64 {
    let (ra, rr) = (agent.joint_positions[0], reference.joint_positions[0]);
    joints
        .iter()
        .map(|&j| {
            let d = (agent.joint_positions[j] - ra) - (reference.joint_positions[j] - rr);
            d.x.abs() + d.y.abs() + d.z.abs()
        })
        .sum()
}

/// `sum_t e_t + max(0, log_1.01 e_t)`: frames with error above 1 pay a
/// logarithmic penalty on top of their error.
pub fn total_error(errors: &[f64]) -> Result<f64> {
    let ln_base = 1.01f64.ln();
    errors.iter().try_fold(0.0, |acc, &e| {
        if !(e >= 0.0) {
            return Err(Error::Contract(format!("per-frame error must be non-negative, got {e}")));
        }
        Ok(acc + e + (e.ln() / ln_base).max(0.0))
    })
}

/// `100 - total_error / frames`; unclamped, so very poor imitation goes negative.
pub fn score_from_errors(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Contract("cannot score an empty clip".into()));
    }
    Ok(100.0 - total_error(errors)? / errors.len() as f64)
}

/// Per-frame errors of `agent` against `reference`, resampling the reference
/// when the lengths differ.
pub fn frame_errors(agent: &MotionClip, reference: &MotionClip, skeleton: &Skeleton, joints: &[usize]) -> Result<Vec<f64>> {
    if agent.frames.is_empty() || reference.frames.is_empty() {
        return Err(Error::Contract("cannot score an empty clip".into()));
    }
    let resampled;
    let ref_frames = if reference.len() == agent.len() {
        &reference.frames
    } else {
        resampled = resample_frames(skeleton, &reference.frames, agent.len())?;
        &resampled
    };
    Ok(agent
        .frames
        .iter()
        .zip(ref_frames)
        .map(|(a, r)| {
            let ga = fk_unchecked(skeleton, a.rotations());
            let gr = fk_unchecked(skeleton, r.rotations());
            error_per_frame(&ga, &gr, joints)
        })
        .collect())
}

pub fn score(agent: &MotionClip, reference: &MotionClip, skeleton: &Skeleton, joints: &[usize]) -> Result<f64> {
    score_from_errors(&frame_errors(agent, reference, skeleton, joints)?)
}
