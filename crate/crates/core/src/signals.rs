//! Objective and description signals.
//!
//! Objective layout (6 scalars):
//!
//! | index | field | encoding |
//! |-------|-------|----------|
//! | 0 | type | 1.0 point, 2.0 wave |
//! | 1 | arm | 0.0 left, 1.0 right |
//! | 2..5 | attributes | unit target vector (point) or exaggeration repeated three times (wave) |
//! | 5 | time | t / N |
//!
//! Description layout (42 scalars): four effector unit vectors
//! ([`DESCRIPTION_EFFECTORS`]) followed by ten root-relative joint positions
//! ([`DESCRIPTION_JOINTS`]).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::{fk_unchecked, PoseGeometry, Skeleton};
use crate::motion::{Arm, Behaviour, MotionClip};
use crate::{Error, Result};

/// Bumped whenever the order or encoding of either signal changes.
pub const SIGNAL_LAYOUT_VERSION: u32 = 1;

pub const OBJECTIVE_DIM: usize = 6;
pub const DESCRIPTION_DIM: usize = 42;
pub const EFFECTOR_BLOCK_DIM: usize = 12;

pub const DESCRIPTION_EFFECTORS: [&str; 4] = ["left_eye", "right_eye", "left_index", "right_index"];

pub const DESCRIPTION_JOINTS: [&str; 10] = [
    "left_collar",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "left_index_base",
    "right_collar",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "right_index_base",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveSignal(pub [f64; OBJECTIVE_DIM]);

impl ObjectiveSignal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn time(&self) -> f64 {
        self.0[5]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptionSignal(pub Vec<f64>);

impl DescriptionSignal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn effector(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.0[3 * k], self.0[3 * k + 1], self.0[3 * k + 2])
    }
}

/// Objective for frame `t` of `clip`, with time `t / N`.
///
/// `N` is the clip length unless `n_frames_override` is given; the override
/// lets an episode run longer or shorter than the clip it portrays.
pub fn objective_for(clip: &MotionClip, t: usize, n_frames_override: Option<usize>) -> Result<ObjectiveSignal> {
    let n = n_frames_override.unwrap_or(clip.frames.len());
    if t >= n {
        return Err(Error::Contract(format!("frame index {t} out of range for N = {n}")));
    }
    Ok(objective_from_meta(clip.behaviour, clip.arm, clip.attributes, t, n))
}

pub fn objective_from_meta(behaviour: Behaviour, arm: Arm, attributes: [f64; 3], t: usize, n: usize) -> ObjectiveSignal {
    ObjectiveSignal([
        behaviour.code(),
        arm.code(),
        attributes[0],
        attributes[1],
        attributes[2],
        t as f64 / n as f64,
    ])
}

/// The full objective stream for an episode of `n` frames.
pub fn objective_sequence(clip: &MotionClip, n_frames_override: Option<usize>) -> Vec<ObjectiveSignal> {
    let n = n_frames_override.unwrap_or(clip.frames.len());
    (0..n)
        .map(|t| objective_from_meta(clip.behaviour, clip.arm, clip.attributes, t, n))
        .collect()
}

/// Index tables resolving the description layout against a skeleton.
#[derive(Debug, Clone)]
pub struct DescriptionLayout {
    effectors: [usize; 4],
    joints: [usize; 10],
    root: usize,
    rest_effectors: [Vector3<f64>; 4],
}

impl DescriptionLayout {
    pub fn new(skeleton: &Skeleton) -> Result<Self> {
        let mut effectors = [0; 4];
        for (slot, name) in effectors.iter_mut().zip(DESCRIPTION_EFFECTORS) {
            *slot = skeleton
                .effector_index(name)
                .ok_or_else(|| Error::Contract(format!("skeleton lacks effector '{name}'")))?;
        }
        let mut joints = [0; 10];
        for (slot, name) in joints.iter_mut().zip(DESCRIPTION_JOINTS) {
            *slot = skeleton
                .joint_index(name)
                .ok_or_else(|| Error::Contract(format!("skeleton lacks joint '{name}'")))?;
        }
        let rest = fk_unchecked(skeleton, skeleton.rest_pose().rotations());
        let rest_effectors = effectors.map(|e| rest.effector_directions[e]);
        Ok(DescriptionLayout {
            effectors,
            joints,
            root: 0,
            rest_effectors,
        })
    }

    pub fn joint_indices(&self) -> &[usize; 10] {
        &self.joints
    }

    /// Rest-pose direction of each effector, used as the zero-norm fallback.
    pub fn rest_effectors(&self) -> &[Vector3<f64>; 4] {
        &self.rest_effectors
    }

    pub fn describe(&self, geometry: &PoseGeometry) -> DescriptionSignal {
        let mut out = Vec::with_capacity(DESCRIPTION_DIM);
        for &e in &self.effectors {
            out.extend(geometry.effector_directions[e].iter());
        }
        let root = geometry.joint_positions[self.root];
        for &j in &self.joints {
            out.extend((geometry.joint_positions[j] - root).iter());
        }
        DescriptionSignal(out)
    }

    pub fn renormalize(&self, raw: &[f64]) -> Result<DescriptionSignal> {
        if raw.len() != DESCRIPTION_DIM {
            return Err(Error::Contract(format!(
                "description must have {DESCRIPTION_DIM} components, got {}",
                raw.len()
            )));
        }
        if let Some(k) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite description component {k}")));
        }
        let mut out = raw.to_vec();
        for (k, rest) in self.rest_effectors.iter().enumerate() {
            let block = &mut out[3 * k..3 * k + 3];
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                block.iter_mut().for_each(|v| *v /= n);
            } else {
                block.copy_from_slice(rest.as_slice());
            }
        }
        Ok(DescriptionSignal(out))
    }
}

/// Description of `geometry` for the canonical layout.
pub fn description_of(skeleton: &Skeleton, geometry: &PoseGeometry) -> Result<DescriptionSignal> {
    Ok(DescriptionLayout::new(skeleton)?.describe(geometry))
}

/// Scales each effector block of `raw` to unit length; a zero block becomes
/// the rest-pose direction of that effector.
pub fn renormalize_description(skeleton: &Skeleton, raw: &[f64]) -> Result<DescriptionSignal> {
    DescriptionLayout::new(skeleton)?.renormalize(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    fn layout() -> (Skeleton, DescriptionLayout) {
        let s = Skeleton::canonical();
        let l = DescriptionLayout::new(&s).unwrap();
        (s, l)
    }

    #[test]
    fn renormalize_examples() {
        let (s, l) = layout();
        let d = l.describe(&forward_kinematics(&s, &s.rest_pose()).unwrap());
        let again = l.renormalize(d.as_slice()).unwrap();
        for (a, b) in d.0.iter().zip(&again.0) {
            assert!((a - b).abs() <= 1e-12);
        }

        let mut raw = d.0.clone();
        raw[0..3].copy_from_slice(&[2.0, 0.0, 0.0]);
        raw[3..6].copy_from_slice(&[0.0, 0.0, 0.0]);
        let n = l.renormalize(&raw).unwrap();
        assert_eq!(&n.0[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&n.0[3..6], l.rest_effectors()[1].as_slice());
        // Joint positions pass through untouched.
        assert_eq!(&n.0[12..], &raw[12..]);

        raw[20] = f64::INFINITY;
        assert!(matches!(l.renormalize(&raw), Err(Error::Validation(_))));
    }

    #[test]
    fn describe_is_root_relative() {
        let (s, l) = layout();
        let g = forward_kinematics(&s, &s.rest_pose()).unwrap();
        let mut shifted = g.clone();
        for p in shifted.joint_positions.iter_mut() {
            *p += Vector3::new(3.0, -1.0, 2.0);
        }
        let (a, b) = (l.describe(&g), l.describe(&shifted));
        assert!(a.0.iter().zip(&b.0).all(|(x, y)| (x - y).abs() <= 1e-12));
    }
}
