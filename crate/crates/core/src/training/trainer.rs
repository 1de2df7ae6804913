//! The epoch loop: collect episodes by imitating clips, then update on chunks.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{sample_chunks, EpisodeBuffer};
use super::losses::LossWeights;
use super::optim::Adam;
use super::update::{update_step, LossReport, UpdateSettings};
use crate::agent::{Agent, AgentConfig, Sampling};
use crate::eval::{evaluate_agent, EvalConfig};
use crate::exec::Execution;
use crate::kinematics::Skeleton;
use crate::motion::{Behaviour, DatasetSplit, MotionClip};
use crate::signals::objective_sequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviourSet {
    Point,
    Wave,
    #[default]
    Both,
}

impl BehaviourSet {
    pub fn behaviours(self) -> &'static [Behaviour] {
        match self {
            BehaviourSet::Point => &[Behaviour::Point],
            BehaviourSet::Wave => &[Behaviour::Wave],
            BehaviourSet::Both => &[Behaviour::Point, Behaviour::Wave],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviourSet::Point => "point",
            BehaviourSet::Wave => "wave",
            BehaviourSet::Both => "both",
        }
    }

    pub fn includes(self, b: Behaviour) -> bool {
        self.behaviours().contains(&b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub behaviours: BehaviourSet,
    pub chunks_per_update: usize,
    pub chunk_length: usize,
    pub updates_per_epoch: usize,
    pub learning_rate: f64,
    pub huber_delta: f64,
    pub gradient_clip_norm: f64,
    pub buffer_capacity: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Score the held-out split every this many epochs (0 disables; the
    /// final epoch is always scored when enabled).
    pub eval_every: usize,
    /// Stop early once the held-out score reaches this value.
    pub target_score: Option<f64>,
    /// Worker mode for gradient and scoring batches; results are identical either way.
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            behaviours: BehaviourSet::Both,
            chunks_per_update: 4,
            chunk_length: 66,
            updates_per_epoch: 20,
            learning_rate: 2e-3,
            huber_delta: 0.1,
            gradient_clip_norm: 10.0,
            buffer_capacity: 500,
            loss_weights: LossWeights::default(),
            seed: 0,
            eval_every: 0,
            target_score: None,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("chunks_per_update", self.chunks_per_update),
            ("updates_per_epoch", self.updates_per_epoch),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be positive")));
            }
        }
        if self.chunk_length < 2 {
            return Err(Error::Config("train.chunk_length must be at least 2".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("huber_delta", self.huber_delta),
            ("gradient_clip_norm", self.gradient_clip_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        self.loss_weights.validate()
    }

    pub fn update_settings(&self) -> UpdateSettings {
        UpdateSettings {
            weights: self.loss_weights,
            huber_delta: self.huber_delta,
            gradient_clip_norm: self.gradient_clip_norm,
        }
    }
}

/// One row of the training log; losses are means over the epoch's updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub holdout_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,l1,l2,l3,total,grad_norm,holdout_score";

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        let score = self.holdout_score.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.l1, self.l2, self.l3, self.total, self.grad_norm, score
        )
    }
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LOG_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{LOG_HEADER}'"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
            rows.push(EpochRecord {
                epoch: f[0].parse().map_err(|e| bad(format!("'{}': {e}", f[0])))?,
                l1: num(f[1])?,
                l2: num(f[2])?,
                l3: num(f[3])?,
                total: num(f[4])?,
                grad_norm: num(f[5])?,
                holdout_score: if f[6].is_empty() { None } else { Some(num(f[6])?) },
            });
        }
        Ok(TrainingLog { rows })
    }

    pub fn scores(&self) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| r.holdout_score.map(|s| (r.epoch, s))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub log: TrainingLog,
    pub episodes_generated: usize,
}

/// Trains a fresh agent; see [`train_with`].
pub fn train(
    config: &TrainConfig,
    agent_config: &AgentConfig,
    dataset: &DatasetSplit,
    skeleton: &Skeleton,
    eval: &EvalConfig,
) -> Result<TrainOutcome> {
    train_with(config, agent_config, dataset, skeleton, eval, &mut |_, _| Ok(()))
}

/// Runs the full loop, calling `on_epoch` after every epoch (for progress
/// output or periodic checkpoints).
pub fn train_with(
    config: &TrainConfig,
    agent_config: &AgentConfig,
    dataset: &DatasetSplit,
    skeleton: &Skeleton,
    eval: &EvalConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Agent) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    eval.validate()?;
    let pools: Vec<Vec<&MotionClip>> = config.behaviours.behaviours().iter().map(|b| dataset.train_of(*b)).collect();
    for (b, pool) in config.behaviours.behaviours().iter().zip(&pools) {
        if pool.is_empty() {
            return Err(Error::Config(format!("training split has no '{}' clips", b.name())));
        }
    }
    let holdout: Vec<&MotionClip> = dataset.test.iter().filter(|c| config.behaviours.includes(c.behaviour)).collect();

    let mut agent = Agent::new(agent_config.clone(), skeleton)?;
    let mut optimizer = Adam::new(agent.params(), config.learning_rate);
    let mut buffer = EpisodeBuffer::new(config.buffer_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let settings = config.update_settings();
    let mut log = TrainingLog::default();

    for epoch in 1..=config.epochs {
        let ctx = |e: Error, what: &str| e.within(format!("epoch {epoch} {what}"));
        for pool in &pools {
            let clip = pool[rng.random_range(0..pool.len())];
            let objectives = objective_sequence(clip, None);
            let rollout = agent
                .rollout(skeleton, &objectives, Sampling::Stochastic(&mut rng))
                .map_err(|e| ctx(e, "rollout"))?;
            buffer.push(rollout.into_record(clip.unit_actions(skeleton))?);
        }

        let mut acc = LossReport::default();
        for step in 0..config.updates_per_epoch {
            let chunks = sample_chunks(&buffer, config.chunks_per_update, config.chunk_length, &mut rng)?;
            let seed = rng.random();
            let r = update_step(&mut agent, &mut optimizer, &buffer, &chunks, &settings, seed, config.execution)
                .map_err(|e| ctx(e, &format!("update {step}")))?;
            acc.l1 += r.l1;
            acc.l2 += r.l2;
            acc.l3 += r.l3;
            acc.total += r.total;
            acc.grad_norm += r.grad_norm;
        }
        let t = config.updates_per_epoch as f64;

        let scheduled = config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs);
        let holdout_score = if scheduled && !holdout.is_empty() {
            let report = evaluate_agent(&agent, &holdout, skeleton, eval, None, config.execution)?;
            Some(report.mean_score())
        } else {
            None
        };
        let row = EpochRecord {
            epoch,
            l1: acc.l1 / t,
            l2: acc.l2 / t,
            l3: acc.l3 / t,
            total: acc.total / t,
            grad_norm: acc.grad_norm / t,
            holdout_score,
        };
        log::info!("{}", row.csv_line());
        on_epoch(&row, &agent)?;
        log.rows.push(row);
        if let (Some(target), Some(score)) = (config.target_score, holdout_score) {
            if score >= target {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        agent,
        log,
        episodes_generated: buffer.total_pushed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{make_dataset, DatasetSpec};

    fn tiny_dataset(s: &Skeleton) -> DatasetSplit {
        let spec = DatasetSpec {
            train_point: 3,
            train_wave: 3,
            test_point: 1,
            test_wave: 1,
            frames_min: 16,
            frames_max: 20,
            ..DatasetSpec::default()
        };
        make_dataset(s, &spec).unwrap()
    }

    fn quick(behaviours: BehaviourSet, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            behaviours,
            chunks_per_update: 2,
            chunk_length: 6,
            updates_per_epoch: 2,
            eval_every: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn episode_counts_follow_behaviours() {
        let s = Skeleton::canonical();
        let data = tiny_dataset(&s);
        let ac = AgentConfig::tiny();
        let both = train(&quick(BehaviourSet::Both, 3), &ac, &data, &s, &EvalConfig::default()).unwrap();
        assert_eq!(both.episodes_generated, 6);
        let point = train(&quick(BehaviourSet::Point, 3), &ac, &data, &s, &EvalConfig::default()).unwrap();
        assert_eq!(point.episodes_generated, 3);
        assert_eq!(both.log.rows.len(), 3);
        assert!(both.log.rows[1].holdout_score.is_some() && both.log.rows[0].holdout_score.is_none());
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let s = Skeleton::canonical();
        let data = tiny_dataset(&s);
        let ac = AgentConfig::tiny();
        let a = train(&quick(BehaviourSet::Both, 2), &ac, &data, &s, &EvalConfig::default()).unwrap();
        let b = train(&quick(BehaviourSet::Both, 2), &ac, &data, &s, &EvalConfig::default()).unwrap();
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        assert_eq!(TrainingLog::from_csv(&a.log.to_csv()).unwrap(), a.log);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { chunk_length: 1, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            loss_weights: LossWeights { l1: -1.0, l2: 1.0, l3: 1.0 },
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
