use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rlanimate::agent::{Agent, AgentConfig, AgentVariant, Checkpoint, Sampling, MAGIC};
use rlanimate::eval::{evaluate_agent, flexibility_sweep, run_ablation, AblationKind, EvalConfig};
use rlanimate::exec::Execution;
use rlanimate::kinematics::Skeleton;
use rlanimate::motion::{
    identity_names, make_dataset, parse_bvh, resample_clip, synth_point_clip, write_bvh, Arm, ClipMeta, DatasetSpec,
    DatasetSplit, MotionClip,
};
use rlanimate::signals::objective_sequence;
use rlanimate::training::{train, TrainConfig};
use rlanimate::Error;

fn small_dataset(skeleton: &Skeleton) -> DatasetSplit {
    let spec = DatasetSpec { train_point: 4, train_wave: 4, test_point: 2, test_wave: 2, ..DatasetSpec::default() };
    make_dataset(skeleton, &spec).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        updates_per_epoch: 2,
        chunks_per_update: 3,
        chunk_length: 10,
        eval_every: 1,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn dataset_is_reproducible_and_disjoint() {
    let skeleton = Skeleton::canonical();
    let a = small_dataset(&skeleton);
    let b = small_dataset(&skeleton);
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    for t in &a.test {
        assert!(a.train.iter().all(|c| c.attributes != t.attributes), "{} leaks into training", t.id);
    }
}

#[test]
fn clips_survive_json_and_bvh() {
    let skeleton = Skeleton::canonical();
    let clip = synth_point_clip(&skeleton, "p", [0.0, 0.6, 0.8], Arm::Left, 30, 30.0).unwrap();
    assert_eq!(MotionClip::from_json(&skeleton, &clip.to_json()).unwrap(), clip);

    let meta = ClipMeta { id: "p".into(), behaviour: clip.behaviour, arm: clip.arm, attributes: clip.attributes };
    let back = parse_bvh(&write_bvh(&skeleton, &clip), &skeleton, &identity_names(&skeleton), meta).unwrap();
    // Root and fingertips carry no actuated rotation; nothing else may be dropped.
    assert!(back.warnings.iter().all(|w| w.contains("non-actuated")), "{:?}", back.warnings);
    for (x, y) in clip.frames.iter().zip(&back.clip.frames) {
        for (u, v) in x.rotations().iter().zip(y.rotations()) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }
}

#[test]
fn resampling_keeps_endpoints() {
    let skeleton = Skeleton::canonical();
    let clip = synth_point_clip(&skeleton, "p", [0.0, 0.0, 1.0], Arm::Right, 40, 30.0).unwrap();
    for factor in [0.5, 1.5] {
        let r = resample_clip(&skeleton, &clip, factor).unwrap();
        assert_eq!(r.len(), (factor * 40.0) as usize);
        assert_eq!(r.frames.first(), clip.frames.first());
        assert_eq!(r.frames.last(), clip.frames.last());
    }
}

#[test]
fn checkpoint_restores_identical_rollouts() {
    let skeleton = Skeleton::canonical();
    let data = small_dataset(&skeleton);
    let outcome = train(&small_train(), &AgentConfig { seed: 5, ..AgentConfig::tiny() }, &data, &skeleton, &EvalConfig::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.bin");
    Checkpoint::of(&outcome.agent, 5).save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    let restored = Checkpoint::load(&path).unwrap().into_agent(&skeleton).unwrap();

    let objectives = objective_sequence(&data.test[0], None);
    let a = outcome.agent.rollout(&skeleton, &objectives, Sampling::Deterministic).unwrap();
    let b = restored.rollout(&skeleton, &objectives, Sampling::Deterministic).unwrap();
    assert_eq!(a.actions, b.actions);

    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(Checkpoint::from_bytes(&corrupt).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut other_layout = bytes;
    other_layout[12..16].copy_from_slice(&9u32.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&other_layout), Err(Error::VersionMismatch { .. })));
}

#[test]
fn stochastic_rollouts_follow_the_seed() {
    let skeleton = Skeleton::canonical();
    let agent = Agent::new(AgentConfig::tiny(), &skeleton).unwrap();
    let clip = synth_point_clip(&skeleton, "p", [0.0, 0.0, 1.0], Arm::Right, 20, 30.0).unwrap();
    let o = objective_sequence(&clip, None);
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        agent.rollout(&skeleton, &o, Sampling::Stochastic(&mut rng)).unwrap().actions
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
    assert!(run(3).iter().flatten().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn every_variant_trains_and_evaluates() {
    let skeleton = Skeleton::canonical();
    let data = small_dataset(&skeleton);
    let eval = EvalConfig::default();
    for kind in AblationKind::ALL {
        let r = run_ablation(kind, &small_train(), &AgentConfig::tiny(), &data, &skeleton, &eval, &mut |_, _| Ok(())).unwrap();
        assert_eq!(r.outcome.log.rows.len(), 2, "{}", kind.name());
        assert_eq!(r.test.clips.len(), data.test.len());
        assert!(r.test.clips.iter().all(|c| c.score <= 100.0 && (0.0..=100.0).contains(&c.smoothness)));
        if kind == AblationKind::SingleDynamicsSpace {
            assert_eq!(r.outcome.agent.config().variant, AgentVariant::SingleDynamicsSpace);
        }
    }
}

#[test]
fn sequential_and_parallel_scoring_agree() {
    let skeleton = Skeleton::canonical();
    let data = small_dataset(&skeleton);
    let agent = Agent::new(AgentConfig::tiny(), &skeleton).unwrap();
    let clips: Vec<&MotionClip> = data.test.iter().collect();
    let eval = EvalConfig::default();
    let p = evaluate_agent(&agent, &clips, &skeleton, &eval, None, Execution::Parallel).unwrap();
    let s = evaluate_agent(&agent, &clips, &skeleton, &eval, None, Execution::Sequential).unwrap();
    assert_eq!(p, s);

    let sweep = flexibility_sweep(&agent, &clips, &[0.5, 1.0], &skeleton, &eval, Execution::Parallel).unwrap();
    assert_eq!(sweep.rows.len(), 2 * clips.len());
    assert!(flexibility_sweep(&agent, &clips, &[8.0], &skeleton, &eval, Execution::Parallel).is_err());
}
