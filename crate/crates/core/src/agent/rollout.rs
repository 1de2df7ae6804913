//! Turning objective sequences into animation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::model::{Agent, StepInputs};
use super::tape::Graph;
use crate::kinematics::{action_to_pose, fk_unchecked, Pose, Skeleton};
use crate::motion::{Arm, Behaviour, MotionClip};
use crate::signals::{DescriptionLayout, ObjectiveSignal};
use crate::training::EpisodeRecord;
use crate::{Error, Result};

/// How latents and actions are chosen.
pub enum Sampling<'a> {
    /// Posterior mean and Beta mean; reproducible without a generator.
    Deterministic,
    /// Reparameterised latent samples and Beta samples drawn from the generator.
    Stochastic(&'a mut ChaCha8Rng),
}

/// Everything recorded while rolling out one objective sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub objectives: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub descriptions: Vec<Vec<f64>>,
    /// Self-generated descriptions; empty for agents without a portrayal model.
    pub predicted: Vec<Vec<f64>>,
    pub poses: Vec<Pose>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Pairs the rollout with the clip's unit actions for the buffer.
    pub fn into_record(self, m: Vec<Vec<f64>>) -> Result<EpisodeRecord> {
        EpisodeRecord::new(self.objectives, self.actions, self.descriptions, m)
    }

    /// Packages the generated poses as a clip.
    pub fn to_clip(
        &self,
        skeleton: &Skeleton,
        id: impl Into<String>,
        behaviour: Behaviour,
        arm: Arm,
        attributes: [f64; 3],
        fps: f64,
    ) -> Result<MotionClip> {
        MotionClip::new(skeleton, id, behaviour, arm, attributes, fps, self.poses.clone())
    }
}

impl Agent {
    /// Animates the character through `objectives`, one frame per objective.
    pub fn rollout(&self, skeleton: &Skeleton, objectives: &[ObjectiveSignal], mut sampling: Sampling) -> Result<Rollout> {
        if objectives.is_empty() {
            return Err(Error::Contract("rollout needs at least one objective".into()));
        }
        let layout = DescriptionLayout::new(skeleton)?;
        let n = objectives.len();
        let mut out = Rollout {
            objectives: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            descriptions: Vec::with_capacity(n),
            predicted: Vec::with_capacity(n),
            poses: Vec::with_capacity(n),
        };
        let mut state = self.initial_state();
        let mut prev_action = self.rest_action().to_vec();
        let stoch = self.config().b_stoch_dim;

        for (t, o) in objectives.iter().enumerate() {
            let noise: Option<Vec<f64>> = match &mut sampling {
                Sampling::Deterministic => None,
                Sampling::Stochastic(rng) => Some((0..stoch).map(|_| rng.sample(StandardNormal)).collect()),
            };
            let mut g = Graph::new(self.params());
            let carry = self.carry_from(&mut g, &state);
            let step = self.step_graph(
                &mut g,
                &carry,
                StepInputs {
                    objective: o.as_slice(),
                    prev_action: &prev_action,
                    noise: noise.as_deref(),
                },
            );
            self.check_step(&g, &step).map_err(|e| e.within(format!("rollout step {t}")))?;

            let action: Vec<f64> = match &mut sampling {
                Sampling::Deterministic => g.value(step.policy.mean).to_vec(),
                Sampling::Stochastic(rng) => {
                    let (alpha, beta) = (g.value(step.policy.alpha), g.value(step.policy.beta));
                    alpha
                        .iter()
                        .zip(beta)
                        .map(|(&a, &b)| {
                            let dist = Beta::new(a, b)
                                .map_err(|_| Error::numeric(format!("rollout step {t}: invalid Beta({a}, {b})")))?;
                            Ok(dist.sample(&mut **rng))
                        })
                        .collect::<Result<_>>()?
                }
            };
            let pose = action_to_pose(skeleton, &action)?;
            let description = layout.describe(&fk_unchecked(skeleton, pose.rotations())).0;

            if let Some(d) = step.d_hat {
                out.predicted.push(g.value(d).to_vec());
            }
            state = self.state_of(&g, &step.carry);
            out.objectives.push(o.as_slice().to_vec());
            out.actions.push(action.clone());
            out.descriptions.push(description);
            out.poses.push(pose);
            prev_action = action;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentConfig, AgentVariant};
    use crate::kinematics::Pose;
    use crate::signals::objective_from_meta;
    use rand::SeedableRng;

    fn objectives(n: usize) -> Vec<ObjectiveSignal> {
        (0..n)
            .map(|t| objective_from_meta(Behaviour::Wave, Arm::Left, [0.7; 3], t, n))
            .collect()
    }

    #[test]
    fn deterministic_repeats_exactly() {
        let s = Skeleton::canonical();
        for variant in [AgentVariant::Full, AgentVariant::SingleState, AgentVariant::SingleDynamicsSpace] {
            let a = Agent::new(AgentConfig { variant, ..AgentConfig::tiny() }, &s).unwrap();
            let r1 = a.rollout(&s, &objectives(12), Sampling::Deterministic).unwrap();
            let r2 = a.rollout(&s, &objectives(12), Sampling::Deterministic).unwrap();
            assert_eq!(r1, r2);
            assert_eq!(r1.len(), 12);
        }
    }

    #[test]
    fn stochastic_follows_seed() {
        let s = Skeleton::canonical();
        let a = Agent::new(AgentConfig::tiny(), &s).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            a.rollout(&s, &objectives(10), Sampling::Stochastic(&mut rng)).unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1).actions, run(2).actions);
    }

    #[test]
    fn actions_and_poses_in_bounds() {
        let s = Skeleton::canonical();
        let a = Agent::new(AgentConfig::tiny(), &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = a.rollout(&s, &objectives(20), Sampling::Stochastic(&mut rng)).unwrap();
        assert!(r.actions.iter().flatten().all(|u| (0.0..=1.0).contains(u)));
        for p in &r.poses {
            assert!(Pose::new(&s, p.rotations().to_vec()).is_ok());
        }
        assert!(a.rollout(&s, &[], Sampling::Deterministic).is_err());
    }

    #[test]
    fn causal_in_objectives() {
        let s = Skeleton::canonical();
        let a = Agent::new(AgentConfig::tiny(), &s).unwrap();
        let base = objectives(10);
        let mut edited = base.clone();
        edited[6].0[2] = 0.1;
        let r1 = a.rollout(&s, &base, Sampling::Deterministic).unwrap();
        let r2 = a.rollout(&s, &edited, Sampling::Deterministic).unwrap();
        assert_eq!(r1.actions[..6], r2.actions[..6]);
        assert_ne!(r1.actions[6], r2.actions[6]);
    }
}
