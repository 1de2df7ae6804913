//! Control agents used to measure what each design element contributes.

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_agent, EvalConfig, ScoreReport};
use crate::agent::{Agent, AgentConfig, AgentVariant};
use crate::kinematics::Skeleton;
use crate::motion::{DatasetSplit, MotionClip};
use crate::training::{train_with, EpochRecord, LossWeights, TrainConfig, TrainOutcome};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    #[default]
    Full,
    /// Acting posterior conditioned on the last measured description; no portrayal model.
    SingleState,
    /// Task and behaviour dynamics merged into one latent.
    SingleDynamicsSpace,
    /// Imitation loss only.
    SupervisedLoss,
}

impl AblationKind {
    pub const ALL: [AblationKind; 4] = [
        AblationKind::Full,
        AblationKind::SingleState,
        AblationKind::SingleDynamicsSpace,
        AblationKind::SupervisedLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Full => "full",
            AblationKind::SingleState => "single_state",
            AblationKind::SingleDynamicsSpace => "single_dynamics_space",
            AblationKind::SupervisedLoss => "supervised_loss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        AblationKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// The configurations this control trains with.
    pub fn configure(self, train: &TrainConfig, agent: &AgentConfig) -> (TrainConfig, AgentConfig) {
        let (mut t, mut a) = (train.clone(), agent.clone());
        match self {
            AblationKind::Full => {}
            AblationKind::SingleState => a.variant = AgentVariant::SingleState,
            AblationKind::SingleDynamicsSpace => a.variant = AgentVariant::SingleDynamicsSpace,
            AblationKind::SupervisedLoss => {
                t.loss_weights = LossWeights {
                    l1: 0.0,
                    l2: 0.0,
                    ..t.loss_weights
                }
            }
        }
        (t, a)
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub kind: AblationKind,
    pub outcome: TrainOutcome,
    pub test: ScoreReport,
    pub train: ScoreReport,
}

/// Training clips scored alongside the held-out split: for each behaviour,
/// as many as the test split holds (the first ones in split order).
pub fn training_probe<'a>(dataset: &'a DatasetSplit, train: &TrainConfig) -> Vec<&'a MotionClip> {
    train
        .behaviours
        .behaviours()
        .iter()
        .flat_map(|b| {
            let n = dataset.test_of(*b).len().max(1);
            dataset.train_of(*b).into_iter().take(n)
        })
        .collect()
}

pub fn run_ablation(
    kind: AblationKind,
    train: &TrainConfig,
    agent: &AgentConfig,
    dataset: &DatasetSplit,
    skeleton: &Skeleton,
    eval: &EvalConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Agent) -> Result<()>,
) -> Result<AblationResult> {
    let (tc, ac) = kind.configure(train, agent);
    let outcome = train_with(&tc, &ac, dataset, skeleton, eval, on_epoch)?;
    let held_out: Vec<&MotionClip> = dataset.test.iter().filter(|c| tc.behaviours.includes(c.behaviour)).collect();
    let test = evaluate_agent(&outcome.agent, &held_out, skeleton, eval, None, tc.execution)?;
    let probe = training_probe(dataset, &tc);
    let train_report = evaluate_agent(&outcome.agent, &probe, skeleton, eval, None, tc.execution)?;
    Ok(AblationResult {
        kind,
        outcome,
        test,
        train: train_report,
    })
}
