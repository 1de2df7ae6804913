//! Procedural pointing and waving clips.
//!
//! Both generators start and end at the rest pose. Pointing eases into an
//! aiming pose whose index finger lies exactly along the target direction at
//! the apex frame `n / 2`, then eases back. Waving raises the arm, oscillates
//! elbow and wrist with amplitude proportional to the exaggeration, and lowers
//! the arm again.

use std::f64::consts::PI;

use super::{check_attributes, Arm, Behaviour, MotionClip};
use crate::kinematics::{clamp_to_limits, Pose, Skeleton};
use crate::{Error, Result};

/// Largest shoulder angle the pointing solver will use, leaving a margin
/// inside the ±π/2 limits so Beta-mean actions can reach it.
const SHOULDER_REACH: f64 = 1.40;
const MAX_ELBOW_FLEX: f64 = 2.5;
const FLEX_STEP: f64 = 0.005;

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

fn joint_slot(skeleton: &Skeleton, name: &str) -> Result<usize> {
    skeleton
        .action_offset(name)
        .ok_or_else(|| Error::Generation(format!("skeleton has no actuated joint '{name}'")))
}

/// Shoulder `(x, z)` angles that aim a forearm flexed by `flex` along `t`.
///
/// With the shoulder rotation `Rx(a) * Rz(c)` and elbow `Rx(-flex)`, the
/// forearm direction is `Rx(a) (sin c cos f, -cos c cos f, sin f)`; `c`
/// fixes the x-component and `a` rotates the remaining (y, z) pair onto the
/// target.
fn aim_shoulder(t: [f64; 3], flex: f64) -> Option<(f64, f64)> {
    let cf = flex.cos();
    if t[0].abs() > cf {
        return None;
    }
    let c = (t[0] / cf).asin();
    let y0 = -c.cos() * cf;
    let z0 = flex.sin();
    let mut a = t[2].atan2(t[1]) - z0.atan2(y0);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    Some((a, c))
}

/// The aiming pose for `target`: the straightest arm whose shoulder angles fit
/// within reach, plus a head turn toward the target.
pub fn point_apex_pose(skeleton: &Skeleton, target: [f64; 3], arm: Arm) -> Result<Pose> {
    let n = (target[0] * target[0] + target[1] * target[1] + target[2] * target[2]).sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("target must be a unit vector, norm is {n}")));
    }
    let t = target.map(|v| v / n);
    let side = arm.name();
    let shoulder = joint_slot(skeleton, &format!("{side}_shoulder"))?;
    let elbow = joint_slot(skeleton, &format!("{side}_elbow"))?;
    let head = joint_slot(skeleton, "head")?;

    let steps = (MAX_ELBOW_FLEX / FLEX_STEP) as usize;
    let solution = (0..=steps)
        .map(|k| k as f64 * FLEX_STEP)
        .find_map(|f| {
            aim_shoulder(t, f)
                .filter(|(a, c)| a.abs() <= SHOULDER_REACH && c.abs() <= SHOULDER_REACH)
                .map(|(a, c)| (f, a, c))
        })
        .ok_or_else(|| {
            Error::Generation(format!(
                "target {t:?} is outside the reach of joint '{side}_shoulder'"
            ))
        })?;
    let (flex, a, c) = solution;

    let mut r = vec![0.0; skeleton.action_dim()];
    r[shoulder] = a;
    r[shoulder + 2] = c;
    r[elbow] = -flex;
    r[head] = -0.5 * t[1].asin();
    r[head + 1] = 0.5 * t[0].atan2(t[2]);
    Pose::new(skeleton, r).map_err(|e| Error::Generation(e.to_string()))
}

pub fn synth_point_clip(
    skeleton: &Skeleton,
    id: impl Into<String>,
    target: [f64; 3],
    arm: Arm,
    n_frames: usize,
    fps: f64,
) -> Result<MotionClip> {
    if n_frames < 8 {
        return Err(Error::Contract(format!("n_frames must be at least 8, got {n_frames}")));
    }
    let apex = point_apex_pose(skeleton, target, arm)?;
    let k = n_frames / 2;
    let frames = (0..n_frames)
        .map(|i| {
            let u = if i <= k {
                i as f64 / k as f64
            } else {
                (n_frames - 1 - i) as f64 / (n_frames - 1 - k) as f64
            };
            let s = smoothstep(u);
            let raw: Vec<f64> = apex.rotations().iter().map(|v| s * v).collect();
            clamp_to_limits(skeleton, &raw)
        })
        .collect::<Result<Vec<_>>>()?;
    MotionClip::new(skeleton, id, Behaviour::Point, arm, target, fps, frames)
}

/// Shape of the generated wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveStyle {
    /// Raised posture: shoulder x rotation and |z| rotation, elbow flexion.
    pub shoulder_x: f64,
    pub shoulder_z: f64,
    pub elbow_flex: f64,
    /// Oscillation amplitudes at exaggeration 1.
    pub elbow_amplitude: f64,
    pub wrist_amplitude: f64,
    /// Oscillation period in frames; a multiple of 4 puts exact peaks on frames.
    pub period_frames: usize,
}

pub const DEFAULT_WAVE_STYLE: WaveStyle = WaveStyle {
    shoulder_x: -1.45,
    shoulder_z: 1.35,
    elbow_flex: 1.5,
    elbow_amplitude: 0.5,
    wrist_amplitude: 0.6,
    period_frames: 16,
};

pub fn synth_wave_clip(
    skeleton: &Skeleton,
    id: impl Into<String>,
    exaggeration: f64,
    arm: Arm,
    n_frames: usize,
    fps: f64,
    style: &WaveStyle,
) -> Result<MotionClip> {
    if n_frames < 8 {
        return Err(Error::Contract(format!("n_frames must be at least 8, got {n_frames}")));
    }
    check_attributes(Behaviour::Wave, &[exaggeration; 3]).map_err(Error::Validation)?;
    let side = arm.name();
    let shoulder = joint_slot(skeleton, &format!("{side}_shoulder"))?;
    let elbow = joint_slot(skeleton, &format!("{side}_elbow"))?;
    let wrist = joint_slot(skeleton, &format!("{side}_wrist"))?;

    let ramp = (n_frames / 5).max(2);
    let hold_start = ramp;
    let hold_end = n_frames - 1 - ramp;
    let hold = hold_end - hold_start;
    let period = style.period_frames.min(4 * (hold / 4).max(1)).max(4);

    let frames = (0..n_frames)
        .map(|i| {
            let envelope = if i < hold_start {
                smoothstep(i as f64 / ramp as f64)
            } else if i > hold_end {
                smoothstep((n_frames - 1 - i) as f64 / ramp as f64)
            } else {
                1.0
            };
            let phase = if i >= hold_start {
                2.0 * PI * ((i - hold_start) % period) as f64 / period as f64
            } else {
                0.0
            };
            let osc = exaggeration * phase.sin();
            let mut r = vec![0.0; skeleton.action_dim()];
            r[shoulder] = envelope * style.shoulder_x;
            r[shoulder + 2] = envelope * arm.side() * style.shoulder_z;
            r[elbow] = envelope * (-style.elbow_flex + style.elbow_amplitude * osc);
            r[wrist + 2] = envelope * style.wrist_amplitude * osc;
            clamp_to_limits(skeleton, &r)
        })
        .collect::<Result<Vec<_>>>()?;
    MotionClip::new(skeleton, id, Behaviour::Wave, arm, [exaggeration; 3], fps, frames)
}
