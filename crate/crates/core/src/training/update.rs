//! Loss graphs over buffered chunks and the parameter update.
//!
//! Each chunk is replayed with teacher forcing: the recorded objectives,
//! actions and measured descriptions drive the recurrences. Steps before the
//! chunk start are replayed without gradient ("burn-in") so the chunk begins
//! from the state the agent actually had. At every chunk step:
//!
//! * the posterior conditioned on the measured description `d'_t` gives a
//!   latent sample that the decoder maps back to `d'_t` (L1), and whose KL
//!   to the prior forms L2;
//! * the acting posterior (conditioned on the self-generated description)
//!   gives the latent that drives the Beta mean, compared with the clip's
//!   unit action under a Huber penalty (L3); its sample is also the latent
//!   carried into the next step, so L3 reaches the portrayal model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::buffer::{ChunkView, EpisodeBuffer, EpisodeRecord};
use super::losses::{LossParts, LossWeights};
use super::optim::{clip_global_norm, Adam};
use crate::agent::model::{GaussianVars, StepInputs};
use crate::agent::tape::{Graph, Var};
use crate::agent::{Agent, GaussianParams, Gradients};
use crate::exec::Execution;
use crate::kinematics::ACTION_DIM;
use crate::signals::DESCRIPTION_DIM;
use crate::{Error, Result};

/// Loss settings used by a single update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSettings {
    pub weights: LossWeights,
    pub huber_delta: f64,
    pub gradient_clip_norm: f64,
}

/// Per-update summary. `l1`, `l2`, `l3` are weighted contributions, so they
/// sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Values seen along a chunk, for checking the graph against the reference losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkTrace {
    pub decoded: Vec<Vec<f64>>,
    pub posterior: Vec<GaussianParams>,
    pub prior: Vec<GaussianParams>,
    pub generated: Vec<Vec<f64>>,
}

fn gaussian_values(g: &Graph, d: GaussianVars) -> GaussianParams {
    GaussianParams {
        mean: g.value(d.mean).to_vec(),
        stddev: g.value(d.stddev).to_vec(),
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn step_inputs<'a>(agent: &'a Agent, rec: &'a EpisodeRecord, t: usize, noise: Option<&'a [f64]>) -> StepInputs<'a> {
    StepInputs {
        objective: &rec.o()[t],
        prev_action: if t == 0 { agent.rest_action() } else { &rec.a()[t - 1] },
        noise,
    }
}

/// Unnormalised loss sums `[S1, S2, S3]` of one chunk and, if `scales` is
/// given, the gradient of `sum_k scales[k] * S_k`.
pub(crate) fn chunk_sums(
    agent: &Agent,
    rec: &EpisodeRecord,
    chunk: &ChunkView,
    settings: &UpdateSettings,
    seed: u64,
    scales: Option<[f64; 3]>,
    mut trace: Option<&mut ChunkTrace>,
) -> Result<([f64; 3], Option<Gradients>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stoch = agent.config().b_stoch_dim;
    let w = settings.weights;

    let mut state = agent.initial_state();
    for t in 0..chunk.start {
        let eps = normals(&mut rng, stoch);
        let mut g = Graph::new(agent.params());
        let carry = agent.carry_from(&mut g, &state);
        let s = agent.step_graph(&mut g, &carry, step_inputs(agent, rec, t, Some(&eps)));
        agent.check_step(&g, &s).map_err(|e| e.within(format!("burn-in step {t}")))?;
        state = agent.state_of(&g, &s.carry);
    }

    let mut g = Graph::new(agent.params());
    let mut carry = agent.carry_from(&mut g, &state);
    let (mut s1, mut s2, mut s3): (Vec<Var>, Vec<Var>, Vec<Var>) = (vec![], vec![], vec![]);
    for t in chunk.range() {
        let eps_act = normals(&mut rng, stoch);
        let eps_real = normals(&mut rng, stoch);
        let s = agent.step_graph(&mut g, &carry, step_inputs(agent, rec, t, Some(&eps_act)));
        agent.check_step(&g, &s).map_err(|e| e.within(format!("chunk step {t}")))?;

        if w.l1 != 0.0 || w.l2 != 0.0 || trace.is_some() {
            let d_real = g.input(rec.d_real()[t].clone());
            let q = agent.posterior_graph(&mut g, s.carry.b_det, d_real);
            if w.l2 != 0.0 || trace.is_some() {
                s2.push(kl_graph(&mut g, q, s.prior));
            }
            if w.l1 != 0.0 || trace.is_some() {
                let b = Agent::sample_graph(&mut g, q, Some(&eps_real));
                let decoded = agent.decoder_graph(&mut g, s.features, b);
                let r = g.sub(decoded, d_real);
                let sq = g.square(r);
                s1.push(g.sum(sq));
                if let Some(tr) = trace.as_deref_mut() {
                    tr.decoded.push(g.value(decoded).to_vec());
                }
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.posterior.push(gaussian_values(&g, q));
                tr.prior.push(gaussian_values(&g, s.prior));
            }
        }
        if w.l3 != 0.0 || trace.is_some() {
            let m = g.input(rec.m()[t].clone());
            let r = g.sub(s.policy.mean, m);
            let h = g.huber(r, settings.huber_delta);
            s3.push(g.sum(h));
            if let Some(tr) = trace.as_deref_mut() {
                tr.generated.push(g.value(s.policy.mean).to_vec());
            }
        }
        carry = s.carry;
    }

    let mut sums = [0.0; 3];
    let mut terms = Vec::new();
    for (k, parts) in [s1, s2, s3].into_iter().enumerate() {
        if parts.is_empty() {
            continue;
        }
        let all = g.concat(&parts);
        let total = g.sum(all);
        sums[k] = g.scalar(total);
        if let Some(sc) = scales {
            if sc[k] != 0.0 {
                terms.push(g.scale(total, sc[k]));
            }
        }
    }
    let name = ["l1", "l2", "l3"];
    if let Some(k) = sums.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("loss component {} is {}", name[k], sums[k])));
    }
    let grads = scales.map(|_| match terms.split_first() {
        None => Gradients::zeros_like(agent.params()),
        Some((first, rest)) => {
            let loss = rest.iter().fold(*first, |acc, t| g.add(acc, *t));
            g.backward(loss)
        }
    });
    Ok((sums, grads))
}

/// Closed-form `KL(q || p)` for diagonal Gaussians, summed over dimensions.
fn kl_graph(g: &mut Graph, q: GaussianVars, p: GaussianVars) -> Var {
    let lp = g.log(p.stddev);
    let lq = g.log(q.stddev);
    let log_ratio = g.sub(lp, lq);
    let diff = g.sub(q.mean, p.mean);
    let d2 = g.square(diff);
    let q2 = g.square(q.stddev);
    let num = g.add(q2, d2);
    let p2 = g.square(p.stddev);
    let den = g.scale(p2, 2.0);
    let frac = g.div(num, den);
    let k = g.add(log_ratio, frac);
    let k = g.add_scalar(k, -0.5);
    g.sum(k)
}

/// Normalisers turning sums into means: L1 and L3 per component, L2 per step.
fn scales_for(valid_steps: usize, w: LossWeights) -> [f64; 3] {
    let n = valid_steps.max(1) as f64;
    [
        w.l1 / (n * DESCRIPTION_DIM as f64),
        w.l2 / n,
        w.l3 / (n * ACTION_DIM as f64),
    ]
}

/// Mean loss components over `chunks` and the gradient of the weighted total.
pub fn chunk_losses(
    agent: &Agent,
    buffer: &EpisodeBuffer,
    chunks: &[ChunkView],
    settings: &UpdateSettings,
    seed: u64,
    exec: Execution,
) -> Result<(LossParts, Gradients)> {
    if chunks.is_empty() {
        return Err(Error::Contract("update needs at least one chunk".into()));
    }
    let mut records = Vec::with_capacity(chunks.len());
    for c in chunks {
        let rec = buffer
            .get(c.episode)
            .ok_or_else(|| Error::Contract(format!("chunk refers to missing episode {}", c.episode)))?;
        if c.start + c.valid > rec.len() {
            return Err(Error::Contract(format!("chunk {:?} exceeds episode length {}", c.range(), rec.len())));
        }
        records.push(rec);
    }
    let valid: usize = chunks.iter().map(|c| c.valid).sum();
    let scales = scales_for(valid, settings.weights);

    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, u64)> = (0..chunks.len()).map(|i| (i, seeder.random())).collect();
    let results = exec.map(&jobs, |_, &(i, s)| chunk_sums(agent, records[i], &chunks[i], settings, s, Some(scales), None));

    let mut sums = [0.0; 3];
    let mut grads = Gradients::zeros_like(agent.params());
    for r in results {
        let (s, g) = r?;
        for k in 0..3 {
            sums[k] += s[k];
        }
        grads.add_assign(&g.expect("gradients requested"));
    }
    let n = valid.max(1) as f64;
    let parts = LossParts {
        l1: sums[0] / (n * DESCRIPTION_DIM as f64),
        l2: sums[1] / n,
        l3: sums[2] / (n * ACTION_DIM as f64),
    };
    Ok((parts, grads))
}

/// One optimizer step on `chunks`. On a numeric fault the parameters are left
/// untouched and the error is returned.
pub fn update_step(
    agent: &mut Agent,
    optimizer: &mut Adam,
    buffer: &EpisodeBuffer,
    chunks: &[ChunkView],
    settings: &UpdateSettings,
    seed: u64,
    exec: Execution,
) -> Result<LossReport> {
    let (parts, mut grads) = chunk_losses(agent, buffer, chunks, settings, seed, exec)?;
    if !grads.is_finite() {
        return Err(Error::numeric("non-finite gradient; update skipped"));
    }
    let grad_norm = clip_global_norm(&mut grads, settings.gradient_clip_norm);
    optimizer.step(agent.params_mut(), &grads);
    if !agent.params().is_finite() {
        return Err(Error::numeric("parameters became non-finite after the update"));
    }
    let w = settings.weights;
    let (l1, l2, l3) = (w.l1 * parts.l1, w.l2 * parts.l2, w.l3 * parts.l3);
    Ok(LossReport {
        l1,
        l2,
        l3,
        total: l1 + l2 + l3,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentConfig, AgentVariant, Sampling};
    use crate::kinematics::Skeleton;
    use crate::motion::{synth_wave_clip, Arm, DEFAULT_WAVE_STYLE};
    use crate::signals::objective_sequence;
    use crate::training::losses::{loss_l1, loss_l2, loss_l3};

    fn setup(variant: AgentVariant, frames: usize) -> (Agent, EpisodeBuffer) {
        let s = Skeleton::canonical();
        let agent = Agent::new(AgentConfig { variant, ..AgentConfig::tiny() }, &s).unwrap();
        let clip = synth_wave_clip(&s, "w", 0.6, Arm::Left, frames, 30.0, &DEFAULT_WAVE_STYLE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = agent.rollout(&s, &objective_sequence(&clip, None), Sampling::Stochastic(&mut rng)).unwrap();
        let mut buffer = EpisodeBuffer::new(4).unwrap();
        buffer.push(r.into_record(clip.unit_actions(&s)).unwrap());
        (agent, buffer)
    }

    fn settings() -> UpdateSettings {
        UpdateSettings {
            weights: LossWeights::default(),
            huber_delta: 0.1,
            gradient_clip_norm: 10.0,
        }
    }

    #[test]
    fn graph_sums_match_reference_losses() {
        for variant in [AgentVariant::Full, AgentVariant::SingleState, AgentVariant::SingleDynamicsSpace] {
            let (agent, buffer) = setup(variant, 12);
            let chunk = ChunkView { episode: 0, start: 3, valid: 6, mask: vec![true; 6] };
            let mut trace = ChunkTrace::default();
            let (sums, _) =
                chunk_sums(&agent, buffer.get(0).unwrap(), &chunk, &settings(), 5, None, Some(&mut trace)).unwrap();
            let rec = buffer.get(0).unwrap();
            let mask = vec![true; 6];
            let l1 = loss_l1(&trace.decoded, &rec.d_real()[3..9], &mask).unwrap();
            let l2 = loss_l2(&trace.posterior, &trace.prior, &mask, 0.01).unwrap();
            let l3 = loss_l3(&trace.generated, &rec.m()[3..9], 0.1, &mask).unwrap();
            assert!((sums[0] / (6.0 * 42.0) - l1).abs() < 1e-12);
            assert!((sums[1] / 6.0 - l2).abs() < 1e-12);
            assert!((sums[2] / (6.0 * 45.0) - l3).abs() < 1e-12);
            assert!(l1 >= 0.0 && l2 >= 0.0 && l3 >= 0.0);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (mut agent, buffer) = setup(AgentVariant::Full, 10);
        let before = agent.params().clone();
        let mut opt = Adam::new(agent.params(), 0.0);
        let chunks = vec![ChunkView { episode: 0, start: 0, valid: 10, mask: vec![true; 10] }];
        let report = update_step(&mut agent, &mut opt, &buffer, &chunks, &settings(), 1, Execution::Sequential).unwrap();
        assert_eq!(agent.params(), &before);
        assert!(report.total > 0.0);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let (agent, buffer) = setup(AgentVariant::Full, 14);
        let chunks: Vec<ChunkView> = (0..4)
            .map(|k| ChunkView { episode: 0, start: k, valid: 8, mask: vec![true; 8] })
            .collect();
        let a = chunk_losses(&agent, &buffer, &chunks, &settings(), 9, Execution::Parallel).unwrap();
        let b = chunk_losses(&agent, &buffer, &chunks, &settings(), 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_drop_components() {
        let (agent, buffer) = setup(AgentVariant::Full, 10);
        let chunks = vec![ChunkView { episode: 0, start: 0, valid: 10, mask: vec![true; 10] }];
        let st = UpdateSettings { weights: LossWeights { l1: 0.0, l2: 0.0, l3: 1.0 }, ..settings() };
        let (parts, _) = chunk_losses(&agent, &buffer, &chunks, &st, 2, Execution::Sequential).unwrap();
        assert_eq!((parts.l1, parts.l2), (0.0, 0.0));
        assert!(parts.l3 > 0.0);
    }

    #[test]
    fn a_small_step_on_a_fixed_chunk_descends() {
        let s = Skeleton::canonical();
        let clip = synth_wave_clip(&s, "w", 0.6, Arm::Left, 10, 30.0, &DEFAULT_WAVE_STYLE).unwrap();
        let chunks = vec![ChunkView { episode: 0, start: 0, valid: 8, mask: vec![true; 8] }];
        let total = |agent: &Agent, buffer: &EpisodeBuffer| {
            let (p, _) = chunk_losses(agent, buffer, &chunks, &settings(), 7, Execution::Sequential).unwrap();
            p.l1 + p.l2 + p.l3
        };
        let mut decreased = 0;
        for seed in 0..100 {
            let mut agent = Agent::new(AgentConfig { seed, ..AgentConfig::tiny() }, &s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = agent.rollout(&s, &objective_sequence(&clip, None), Sampling::Stochastic(&mut rng)).unwrap();
            let mut buffer = EpisodeBuffer::new(1).unwrap();
            buffer.push(r.into_record(clip.unit_actions(&s)).unwrap());
            let before = total(&agent, &buffer);
            let mut opt = Adam::new(agent.params(), 1e-4);
            update_step(&mut agent, &mut opt, &buffer, &chunks, &settings(), 7, Execution::Sequential).unwrap();
            if total(&agent, &buffer) < before {
                decreased += 1;
            }
        }
        assert!(decreased >= 95, "loss fell in only {decreased} of 100 trials");
    }
}
