//! Seeded train/test splits of synthetic clips.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{point_apex_pose, synth_point_clip, synth_wave_clip, DEFAULT_WAVE_STYLE};
use super::{Arm, Behaviour, MotionClip};
use crate::kinematics::Skeleton;
use crate::{Error, Result};

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub train_point: usize,
    pub train_wave: usize,
    pub test_point: usize,
    pub test_wave: usize,
    /// Candidate clips generated per behaviour; defaults to train + test.
    pub pool_point: Option<usize>,
    pub pool_wave: Option<usize>,
    pub frames_min: usize,
    pub frames_max: usize,
    pub fps: f64,
    /// Pointing targets: yaw toward the arm's side and pitch ranges (radians).
    pub yaw_range: [f64; 2],
    pub pitch_range: [f64; 2],
    pub exaggeration_range: [f64; 2],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            train_point: 50,
            train_wave: 50,
            test_point: 6,
            test_wave: 4,
            pool_point: None,
            pool_wave: None,
            frames_min: 54,
            frames_max: 66,
            fps: 30.0,
            yaw_range: [-0.4, 1.0],
            pitch_range: [-0.5, 0.5],
            exaggeration_range: [0.1, 1.0],
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("train_point", self.train_point),
            ("train_wave", self.train_wave),
            ("test_point", self.test_point),
            ("test_wave", self.test_wave),
        ];
        if counts.iter().all(|(_, c)| *c == 0) {
            return Err(Error::Config("dataset spec requests no clips".into()));
        }
        if self.frames_min < 8 || self.frames_max < self.frames_min {
            return Err(Error::Config(format!(
                "frames range [{}, {}] invalid (minimum 8)",
                self.frames_min, self.frames_max
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        let [lo, hi] = self.exaggeration_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("exaggeration_range [{lo}, {hi}] must lie in [0, 1]")));
        }
        for (name, [lo, hi]) in [("yaw_range", self.yaw_range), ("pitch_range", self.pitch_range)] {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name} [{lo}, {hi}] is empty")));
            }
        }
        for (behaviour, pool, need) in [
            ("point", self.pool_point, self.train_point + self.test_point),
            ("wave", self.pool_wave, self.train_wave + self.test_wave),
        ] {
            if let Some(p) = pool {
                if p < need {
                    return Err(Error::Config(format!(
                        "{behaviour} pool of {p} clips cannot supply {need} train+test clips"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<MotionClip>,
    pub test: Vec<MotionClip>,
}

impl DatasetSplit {
    pub fn train_of(&self, behaviour: Behaviour) -> Vec<&MotionClip> {
        self.train.iter().filter(|c| c.behaviour == behaviour).collect()
    }

    pub fn test_of(&self, behaviour: Behaviour) -> Vec<&MotionClip> {
        self.test.iter().filter(|c| c.behaviour == behaviour).collect()
    }
}

fn sample_target(rng: &mut ChaCha8Rng, spec: &DatasetSpec, arm: Arm) -> [f64; 3] {
    let yaw = rng.random_range(spec.yaw_range[0]..spec.yaw_range[1]);
    let pitch = rng.random_range(spec.pitch_range[0]..spec.pitch_range[1]);
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    [arm.side() * sy * cp, sp, cy * cp]
}

/// Splits `pool` into (test, train), taking test clips alternately from each arm.
fn split_pool(pool: Vec<MotionClip>, n_test: usize, n_train: usize) -> (Vec<MotionClip>, Vec<MotionClip>) {
    let (mut left, mut right): (Vec<_>, Vec<_>) = pool.into_iter().partition(|c| c.arm == Arm::Left);
    left.reverse();
    right.reverse();
    let mut test = Vec::with_capacity(n_test);
    while test.len() < n_test {
        let from = if test.len() % 2 == 0 { &mut left } else { &mut right };
        match from.pop() {
            Some(c) => test.push(c),
            None => break,
        }
    }
    let mut rest: Vec<MotionClip> = Vec::new();
    while !left.is_empty() || !right.is_empty() {
        rest.extend(left.pop());
        rest.extend(right.pop());
    }
    rest.truncate(n_train);
    (test, rest)
}

/// Generates a deterministic split under `spec.seed`.
///
/// Every clip gets a distinct target (point) or exaggeration (wave), so test
/// values never coincide with training values.
pub fn make_dataset(skeleton: &Skeleton, spec: &DatasetSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frames = |rng: &mut ChaCha8Rng| rng.random_range(spec.frames_min..=spec.frames_max);

    let n_point = spec.pool_point.unwrap_or(spec.train_point + spec.test_point);
    let mut targets: Vec<[f64; 3]> = Vec::new();
    let mut points = Vec::with_capacity(n_point);
    for i in 0..n_point {
        let arm = if i % 2 == 0 { Arm::Left } else { Arm::Right };
        let target = loop {
            let t = sample_target(&mut rng, spec, arm);
            let distinct = targets
                .iter()
                .all(|u| (t[0] * u[0] + t[1] * u[1] + t[2] * u[2]) < (1e-3f64).cos());
            if distinct && point_apex_pose(skeleton, t, arm).is_ok() {
                break t;
            }
        };
        targets.push(target);
        let n = frames(&mut rng);
        let id = format!("point-{}-{i:03}", arm.name());
        points.push(synth_point_clip(skeleton, id, target, arm, n, spec.fps)?);
    }

    let n_wave = spec.pool_wave.unwrap_or(spec.train_wave + spec.test_wave);
    let mut levels: Vec<f64> = Vec::new();
    let mut waves = Vec::with_capacity(n_wave);
    for i in 0..n_wave {
        let arm = if i % 2 == 0 { Arm::Left } else { Arm::Right };
        let e = loop {
            let e = rng.random_range(spec.exaggeration_range[0]..=spec.exaggeration_range[1]);
            if levels.iter().all(|l| (l - e).abs() > 1e-3) {
                break e;
            }
        };
        levels.push(e);
        let n = frames(&mut rng);
        let id = format!("wave-{}-{i:03}", arm.name());
        waves.push(synth_wave_clip(skeleton, id, e, arm, n, spec.fps, &DEFAULT_WAVE_STYLE)?);
    }

    let (test_p, train_p) = split_pool(points, spec.test_point, spec.train_point);
    let (test_w, train_w) = split_pool(waves, spec.test_wave, spec.train_wave);
    if test_p.len() < spec.test_point || test_w.len() < spec.test_wave {
        return Err(Error::Config("requested test size exceeds the generated pool".into()));
    }
    let split = DatasetSplit {
        train: train_p.into_iter().chain(train_w).collect(),
        test: test_p.into_iter().chain(test_w).collect(),
    };
    let ids: HashSet<&str> = split.train.iter().map(|c| c.id.as_str()).collect();
    debug_assert!(split.test.iter().all(|c| !ids.contains(c.id.as_str())));
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            train_point: 6,
            train_wave: 4,
            test_point: 2,
            test_wave: 2,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn pool_too_small_is_config_error() {
        let s = Skeleton::canonical();
        let spec = DatasetSpec {
            pool_wave: Some(3),
            ..small()
        };
        assert!(matches!(make_dataset(&s, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn test_split_balances_arms() {
        let s = Skeleton::canonical();
        let split = make_dataset(&s, &small()).unwrap();
        let left = split.test.iter().filter(|c| c.arm == Arm::Left).count();
        assert_eq!(left, 2);
        assert_eq!(split.train.len(), 10);
        assert_eq!(split.test.len(), 4);
    }
}
