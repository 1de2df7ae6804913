//! Motion clips: the reference animation an agent learns to portray.

mod bvh;
mod dataset;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kinematics::{clamp_to_limits, pose_to_action, Pose, Skeleton};
use crate::{Error, Result};

pub use bvh::{identity_names, parse_bvh, write_bvh, BvhImport, ClipMeta, NameTable};
pub use dataset::{make_dataset, DatasetSpec, DatasetSplit};
pub use synth::{
    point_apex_pose, synth_point_clip, synth_wave_clip, WaveStyle, DEFAULT_WAVE_STYLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    Point,
    Wave,
}

impl Behaviour {
    /// Objective-signal encoding.
    pub fn code(self) -> f64 {
        match self {
            Behaviour::Point => 1.0,
            Behaviour::Wave => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Behaviour::Point => "point",
            Behaviour::Wave => "wave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn code(self) -> f64 {
        match self {
            Arm::Left => 0.0,
            Arm::Right => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Left => "left",
            Arm::Right => "right",
        }
    }

    /// +1 for the left arm (which sits on +x), -1 for the right.
    pub fn side(self) -> f64 {
        match self {
            Arm::Left => 1.0,
            Arm::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionClip {
    pub id: String,
    pub behaviour: Behaviour,
    pub arm: Arm,
    pub attributes: [f64; 3],
    pub fps: f64,
    pub frames: Vec<Pose>,
}

/// Native clip JSON, before validation against a skeleton.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipDoc {
    pub id: String,
    pub behaviour: Behaviour,
    pub arm: Arm,
    pub attributes: [f64; 3],
    pub fps: f64,
    pub frames: Vec<Vec<f64>>,
}

impl MotionClip {
    pub fn new(
        skeleton: &Skeleton,
        id: impl Into<String>,
        behaviour: Behaviour,
        arm: Arm,
        attributes: [f64; 3],
        fps: f64,
        frames: Vec<Pose>,
    ) -> Result<Self> {
        let clip = MotionClip {
            id: id.into(),
            behaviour,
            arm,
            attributes,
            fps,
            frames,
        };
        clip.validate(skeleton)?;
        Ok(clip)
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Validation(format!("clip '{}' has no frames", self.id)));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("clip '{}' has invalid fps {}", self.id, self.fps)));
        }
        check_attributes(self.behaviour, &self.attributes)
            .map_err(|e| Error::Validation(format!("clip '{}': {e}", self.id)))?;
        for (t, f) in self.frames.iter().enumerate() {
            Pose::new(skeleton, f.rotations().to_vec())
                .map_err(|e| Error::Validation(format!("clip '{}' frame {t}: {e}", self.id)))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames converted to unit-action space (the imitation targets).
    pub fn unit_actions(&self, skeleton: &Skeleton) -> Vec<Vec<f64>> {
        self.frames.iter().map(|p| pose_to_action(skeleton, p)).collect()
    }

    pub fn to_doc(&self) -> ClipDoc {
        ClipDoc {
            id: self.id.clone(),
            behaviour: self.behaviour,
            arm: self.arm,
            attributes: self.attributes,
            fps: self.fps,
            frames: self.frames.iter().map(|p| p.rotations().to_vec()).collect(),
        }
    }

    pub fn from_doc(skeleton: &Skeleton, doc: ClipDoc) -> Result<Self> {
        let frames = doc
            .frames
            .into_iter()
            .map(|r| Pose::new(skeleton, r))
            .collect::<Result<Vec<_>>>()?;
        MotionClip::new(skeleton, doc.id, doc.behaviour, doc.arm, doc.attributes, doc.fps, frames)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("clip serializes")
    }

    pub fn from_json(skeleton: &Skeleton, text: &str) -> Result<Self> {
        MotionClip::from_doc(skeleton, serde_json::from_str(text)?)
    }

    pub fn load(skeleton: &Skeleton, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MotionClip::from_json(skeleton, &text)
    }
}

pub(crate) fn check_attributes(behaviour: Behaviour, a: &[f64; 3]) -> std::result::Result<(), String> {
    match behaviour {
        Behaviour::Point => {
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(format!("point target must be a unit vector, norm is {n}"));
            }
        }
        Behaviour::Wave => {
            if a[0] != a[1] || a[1] != a[2] || !(0.0..=1.0).contains(&a[0]) {
                return Err(format!("wave attributes must repeat one exaggeration in [0,1], got {a:?}"));
            }
        }
    }
    Ok(())
}

/// Linearly resamples `clip` onto `ceil(factor * n)` frames, keeping the
/// first and last frames exactly.
pub fn resample_clip(skeleton: &Skeleton, clip: &MotionClip, factor: f64) -> Result<MotionClip> {
    if !(0.1..=4.0).contains(&factor) {
        return Err(Error::Contract(format!("resample factor {factor} outside [0.1, 4]")));
    }
    let n = clip.frames.len();
    let m = ((factor * n as f64).ceil() as usize).max(1);
    let frames = resample_frames(skeleton, &clip.frames, m)?;
    Ok(MotionClip {
        frames,
        ..clip.clone()
    })
}

pub(crate) fn resample_frames(skeleton: &Skeleton, frames: &[Pose], m: usize) -> Result<Vec<Pose>> {
    let n = frames.len();
    if n == m {
        return Ok(frames.to_vec());
    }
    if m == 1 || n == 1 {
        return Ok(vec![frames[0].clone(); m]);
    }
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        if i == m - 1 {
            out.push(frames[n - 1].clone());
            continue;
        }
        let s = i as f64 * (n - 1) as f64 / (m - 1) as f64;
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        let (a, b) = (frames[k].rotations(), frames[k + 1].rotations());
        let raw: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        out.push(clamp_to_limits(skeleton, &raw)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::ACTION_DIM;

    fn clip_with(skeleton: &Skeleton, values: &[f64]) -> MotionClip {
        let frames = values
            .iter()
            .map(|&v| {
                let mut r = vec![0.0; ACTION_DIM];
                r[0] = v;
                Pose::new(skeleton, r).unwrap()
            })
            .collect();
        MotionClip::new(skeleton, "c", Behaviour::Wave, Arm::Left, [0.5; 3], 30.0, frames).unwrap()
    }

    #[test]
    fn resample_identity() {
        let s = Skeleton::canonical();
        let c = clip_with(&s, &[0.0, 0.2, 0.4, 0.1]);
        assert_eq!(resample_clip(&s, &c, 1.0).unwrap(), c);
    }

    #[test]
    fn resample_linear_interpolation() {
        let s = Skeleton::canonical();
        let c = clip_with(&s, &[0.0, 1.0]);
        // ceil(1.5 * 2) = 3 frames: 0, 0.5, 1.
        let r = resample_clip(&s, &c, 1.5).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r.frames[1].rotations()[0] - 0.5).abs() <= 1e-12);
        // ceil(2 * 2) = 4 frames at 0, 1/3, 2/3, 1; the clip midpoint sits between frames 1 and 2.
        let r = resample_clip(&s, &c, 2.0).unwrap();
        assert_eq!(r.len(), 4);
        let mid = 0.5 * (r.frames[1].rotations()[0] + r.frames[2].rotations()[0]);
        assert!((mid - 0.5).abs() <= 1e-12);
        assert!((r.frames[1].rotations()[0] - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn resample_half_keeps_endpoints() {
        let s = Skeleton::canonical();
        let values: Vec<f64> = (0..64).map(|i| (i as f64 * 0.1).sin()).collect();
        let c = clip_with(&s, &values);
        let r = resample_clip(&s, &c, 0.5).unwrap();
        assert_eq!(r.len(), 32);
        assert_eq!(r.frames[0], c.frames[0]);
        assert_eq!(r.frames[31], c.frames[63]);
        assert!(resample_clip(&s, &c, 0.05).is_err());
    }

    #[test]
    fn attribute_invariants() {
        let s = Skeleton::canonical();
        let rest = vec![s.rest_pose()];
        assert!(MotionClip::new(&s, "p", Behaviour::Point, Arm::Right, [0.0, 2.0, 0.0], 30.0, rest.clone()).is_err());
        assert!(MotionClip::new(&s, "w", Behaviour::Wave, Arm::Right, [0.1, 0.2, 0.1], 30.0, rest.clone()).is_err());
        assert!(MotionClip::new(&s, "e", Behaviour::Wave, Arm::Right, [0.1; 3], 30.0, vec![]).is_err());
        assert!(MotionClip::new(&s, "f", Behaviour::Wave, Arm::Right, [0.1; 3], 0.0, rest).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let s = Skeleton::canonical();
        let c = clip_with(&s, &[0.0, 0.3, -0.2]);
        assert_eq!(MotionClip::from_json(&s, &c.to_json()).unwrap(), c);
    }
}
