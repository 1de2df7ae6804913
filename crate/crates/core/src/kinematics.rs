//! Character skeleton and forward kinematics.
//!
//! Coordinates are meters with +y up, +z forward (the direction the character
//! faces) and +x to the character's left. Each actuated joint carries three
//! intrinsic XYZ Euler angles in radians, so its local rotation is
//! `Rx(a) * Ry(b) * Rz(c)`. The rest pose (all angles zero) stands upright with
//! both arms hanging down.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of actuated joints in the canonical skeleton.
pub const ACTUATED_JOINTS: usize = 15;
/// Three Euler angles per actuated joint.
pub const ACTION_DIM: usize = ACTUATED_JOINTS * 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    /// Index of the parent joint; `None` only for the root.
    pub parent: Option<usize>,
    /// Fixed translation from the parent joint, in the parent's frame.
    pub offset: [f64; 3],
    /// Per-axis `[min, max]` limits. Joints without limits are not actuated.
    #[serde(default)]
    pub limits: Option<[[f64; 2]; 3]>,
}

/// A fixed local direction attached to a joint (eye gaze, finger aim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectorAnchor {
    pub name: String,
    pub joint: usize,
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonDoc", into = "SkeletonDoc")]
pub struct Skeleton {
    joints: Vec<JointSpec>,
    effector_anchors: Vec<EffectorAnchor>,
    /// Joint indices of actuated joints, in action order.
    actuated: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SkeletonDoc {
    joints: Vec<JointSpec>,
    effector_anchors: Vec<EffectorAnchor>,
}

impl TryFrom<SkeletonDoc> for Skeleton {
    type Error = Error;

    fn try_from(doc: SkeletonDoc) -> Result<Self> {
        Skeleton::new(doc.joints, doc.effector_anchors)
    }
}

impl From<Skeleton> for SkeletonDoc {
    fn from(s: Skeleton) -> Self {
        SkeletonDoc {
            joints: s.joints,
            effector_anchors: s.effector_anchors,
        }
    }
}

impl Skeleton {
    pub fn new(joints: Vec<JointSpec>, effector_anchors: Vec<EffectorAnchor>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Validation("skeleton has no joints".into()));
        }
        let roots = joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::Validation(format!(
                "skeleton must have exactly one root joint, found {roots}"
            )));
        }
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::Validation(format!(
                        "joint '{}' has parent {p} which is not before it (index {i})",
                        j.name
                    )));
                }
            } else if i != 0 {
                return Err(Error::Validation(format!(
                    "root joint '{}' must come first",
                    j.name
                )));
            }
            if j.offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("joint '{}' has a non-finite offset", j.name)));
            }
            if let Some(limits) = &j.limits {
                for (axis, [lo, hi]) in limits.iter().enumerate() {
                    let in_range = *lo >= -std::f64::consts::PI && *hi <= std::f64::consts::PI;
                    if !(lo < hi) || !in_range {
                        return Err(Error::Validation(format!(
                            "joint '{}' axis {axis} has invalid limits [{lo}, {hi}]",
                            j.name
                        )));
                    }
                }
            }
        }
        for a in &effector_anchors {
            if a.joint >= joints.len() {
                return Err(Error::Validation(format!(
                    "effector '{}' references missing joint {}",
                    a.name, a.joint
                )));
            }
            let n = Vector3::from(a.direction).norm();
            if !n.is_finite() || n == 0.0 {
                return Err(Error::Validation(format!(
                    "effector '{}' has a degenerate direction",
                    a.name
                )));
            }
        }
        let actuated = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.limits.is_some())
            .map(|(i, _)| i)
            .collect();
        Ok(Skeleton {
            joints,
            effector_anchors,
            actuated,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    /// The bundled upper-body skeleton with 15 actuated joints.
    pub fn canonical() -> Self {
        let sym = |a: f64| [[-a, a], [-a, a], [-a, a]];
        let shoulder = sym(FRAC_PI_2);
        let wrist = sym(1.0);
        // Flexion is a negative rotation about local x: it swings the
        // forearm forward from the hanging rest pose.
        let elbow = [[-2.6, 0.1], [-FRAC_PI_2, FRAC_PI_2], [-FRAC_PI_2, FRAC_PI_2]];

        let mut joints = vec![
            joint("hips", None, [0.0, 1.0, 0.0], None),
            joint("spine", Some(0), [0.0, 0.25, 0.0], Some(shoulder)),
            joint("neck", Some(1), [0.0, 0.25, 0.0], Some(shoulder)),
            joint("head", Some(2), [0.0, 0.10, 0.0], Some(shoulder)),
        ];
        for (side, sx) in [("left", 1.0), ("right", -1.0)] {
            let base = joints.len();
            joints.push(joint(&format!("{side}_collar"), Some(1), [0.03 * sx, 0.20, 0.0], Some(shoulder)));
            joints.push(joint(&format!("{side}_shoulder"), Some(base), [0.15 * sx, 0.0, 0.0], Some(shoulder)));
            joints.push(joint(&format!("{side}_elbow"), Some(base + 1), [0.0, -0.28, 0.0], Some(elbow)));
            joints.push(joint(&format!("{side}_wrist"), Some(base + 2), [0.0, -0.25, 0.0], Some(wrist)));
            joints.push(joint(&format!("{side}_index_base"), Some(base + 3), [0.0, -0.09, 0.0], Some(shoulder)));
            joints.push(joint(&format!("{side}_index_mid"), Some(base + 4), [0.0, -0.04, 0.0], Some(shoulder)));
            joints.push(joint(&format!("{side}_index_tip"), Some(base + 5), [0.0, -0.03, 0.0], None));
        }
        let head = 3;
        let tip = |side: &str| joints.iter().position(|j| j.name == format!("{side}_index_tip")).unwrap();
        let anchors = vec![
            anchor("left_eye", head, [0.0, 0.0, 1.0]),
            anchor("right_eye", head, [0.0, 0.0, 1.0]),
            anchor("left_index", tip("left"), [0.0, -1.0, 0.0]),
            anchor("right_index", tip("right"), [0.0, -1.0, 0.0]),
        ];
        Skeleton::new(joints, anchors).expect("canonical skeleton is valid")
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn effector_anchors(&self) -> &[EffectorAnchor] {
        &self.effector_anchors
    }

    /// Joint indices of actuated joints in action order.
    pub fn actuated(&self) -> &[usize] {
        &self.actuated
    }

    pub fn action_dim(&self) -> usize {
        self.actuated.len() * 3
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn effector_index(&self, name: &str) -> Option<usize> {
        self.effector_anchors.iter().position(|a| a.name == name)
    }

    /// Position of `name` within the action vector (the first of its three angles).
    pub fn action_offset(&self, name: &str) -> Option<usize> {
        let j = self.joint_index(name)?;
        self.actuated.iter().position(|&a| a == j).map(|k| 3 * k)
    }

    /// `[min, max]` for every component of the action vector.
    pub fn action_limits(&self) -> Vec<[f64; 2]> {
        self.actuated
            .iter()
            .flat_map(|&j| self.joints[j].limits.expect("actuated joints have limits"))
            .collect()
    }

    pub fn rest_pose(&self) -> Pose {
        Pose {
            rotations: vec![0.0; self.action_dim()],
        }
    }

    /// Name of the actuated joint that owns action component `k`.
    fn component_joint(&self, k: usize) -> &str {
        &self.joints[self.actuated[k / 3]].name
    }
}

fn joint(name: &str, parent: Option<usize>, offset: [f64; 3], limits: Option<[[f64; 2]; 3]>) -> JointSpec {
    JointSpec {
        name: name.to_string(),
        parent,
        offset,
        limits,
    }
}

fn anchor(name: &str, joint: usize, direction: [f64; 3]) -> EffectorAnchor {
    EffectorAnchor {
        name: name.to_string(),
        joint,
        direction,
    }
}

/// Per-actuated-joint Euler triples, flattened in action order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    rotations: Vec<f64>,
}

impl Pose {
    /// Validates dimension and joint limits.
    pub fn new(skeleton: &Skeleton, rotations: Vec<f64>) -> Result<Self> {
        check_dim(skeleton, rotations.len())?;
        for (k, ([lo, hi], v)) in skeleton.action_limits().iter().zip(&rotations).enumerate() {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::Validation(format!(
                    "joint '{}' axis {} angle {v} outside limits [{lo}, {hi}]",
                    skeleton.component_joint(k),
                    k % 3
                )));
            }
        }
        Ok(Pose { rotations })
    }

    pub fn rotations(&self) -> &[f64] {
        &self.rotations
    }

    pub fn into_rotations(self) -> Vec<f64> {
        self.rotations
    }
}

fn check_dim(skeleton: &Skeleton, n: usize) -> Result<()> {
    if n != skeleton.action_dim() {
        return Err(Error::Contract(format!(
            "expected {} joint angles, got {n}",
            skeleton.action_dim()
        )));
    }
    Ok(())
}

/// World-space geometry of a posed skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGeometry {
    pub joint_positions: Vec<Vector3<f64>>,
    /// Unit vectors, one per effector anchor.
    pub effector_directions: Vec<Vector3<f64>>,
}

/// Intrinsic XYZ Euler rotation `Rx(a) * Ry(b) * Rz(c)`.
pub fn euler_xyz(a: f64, b: f64, c: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), b)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), c)
}

pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<PoseGeometry> {
    check_dim(skeleton, pose.rotations.len())?;
    // Revalidate: a Pose may have been built for a different skeleton.
    let pose = Pose::new(skeleton, pose.rotations.clone())?;
    Ok(fk_unchecked(skeleton, &pose.rotations))
}

pub(crate) fn fk_unchecked(skeleton: &Skeleton, rotations: &[f64]) -> PoseGeometry {
    let n = skeleton.joints.len();
    let mut local = vec![Rotation3::identity(); n];
    for (k, &j) in skeleton.actuated.iter().enumerate() {
        let r = &rotations[3 * k..3 * k + 3];
        local[j] = euler_xyz(r[0], r[1], r[2]);
    }
    let mut world_rot: Vec<Rotation3<f64>> = Vec::with_capacity(n);
    let mut world_pos: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for (i, j) in skeleton.joints.iter().enumerate() {
        let offset = Vector3::from(j.offset);
        match j.parent {
            None => {
                world_pos.push(offset);
                world_rot.push(local[i]);
            }
            Some(p) => {
                world_pos.push(world_pos[p] + world_rot[p] * offset);
                world_rot.push(world_rot[p] * local[i]);
            }
        }
    }
    let effector_directions = skeleton
        .effector_anchors
        .iter()
        .map(|a| (world_rot[a.joint] * Vector3::from(a.direction)).normalize())
        .collect();
    PoseGeometry {
        joint_positions: world_pos,
        effector_directions,
    }
}

pub fn clamp_to_limits(skeleton: &Skeleton, raw: &[f64]) -> Result<Pose> {
    check_dim(skeleton, raw.len())?;
    if let Some(k) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite angle for joint '{}' axis {}",
            skeleton.component_joint(k),
            k % 3
        )));
    }
    let rotations = skeleton
        .action_limits()
        .iter()
        .zip(raw)
        .map(|([lo, hi], v)| v.clamp(*lo, *hi))
        .collect();
    Ok(Pose { rotations })
}

/// Maps a unit action in `[0,1]^45` affinely onto the joint limits.
pub fn action_to_pose(skeleton: &Skeleton, unit_action: &[f64]) -> Result<Pose> {
    check_dim(skeleton, unit_action.len())?;
    let mut rotations = Vec::with_capacity(unit_action.len());
    for (k, ([lo, hi], &u)) in skeleton.action_limits().iter().zip(unit_action).enumerate() {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Validation(format!(
                "action component {k} ({}) = {u} outside [0, 1]",
                skeleton.component_joint(k)
            )));
        }
        // Endpoints map exactly onto the limits.
        let v = if u == 1.0 { *hi } else { lo + u * (hi - lo) };
        rotations.push(v.clamp(*lo, *hi));
    }
    Ok(Pose { rotations })
}

/// Inverse of [`action_to_pose`].
pub fn pose_to_action(skeleton: &Skeleton, pose: &Pose) -> Vec<f64> {
    skeleton
        .action_limits()
        .iter()
        .zip(&pose.rotations)
        .map(|([lo, hi], v)| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}
