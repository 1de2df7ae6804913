use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rlanimate::kinematics::Skeleton;
use rlanimate::motion::{identity_names, parse_bvh, Arm, Behaviour, ClipMeta, MotionClip};

const CONFIG: &str = r#"{
  "seed": 3,
  "dataset": { "train_point": 4, "train_wave": 4, "test_point": 2, "test_wave": 2 },
  "agent": { "h_dim": 8, "b_det_dim": 8, "b_stoch_dim": 4, "portrayal_hidden_dim": 8,
             "decoder_hidden_dim": 8, "policy_hidden_dim": 8 },
  "train": { "epochs": 2, "updates_per_epoch": 2, "chunks_per_update": 2, "chunk_length": 8, "eval_every": 1 },
  "checkpoint_every": 1
}"#;

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("experiment.json");
        std::fs::write(&config, CONFIG).unwrap();
        Workspace { _tmp: tmp, root, config }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rlanimate"))
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .env_remove("RLANIMATE_OUT")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn trained(&self) -> PathBuf {
        self.ok(&["dataset"]);
        self.ok(&["train"]);
        self.out().join("runs/full/checkpoint.bin")
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn dataset_is_reproducible_and_creates_the_output_dir() {
    let ws = Workspace::new();
    assert!(!ws.out().exists());
    ws.ok(&["dataset"]);
    let manifest = ws.out().join("dataset/manifest.json");
    let first = read(&manifest);
    ws.ok(&["dataset"]);
    assert_eq!(read(&manifest), first);

    let doc: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(doc["test"].as_array().unwrap().len(), 4);
    assert_eq!(doc["train"].as_array().unwrap().len(), 8);
    assert!(ws.out().join("config.json").exists());
}

#[test]
fn train_reproduces_its_log_and_defaults_to_full() {
    let ws = Workspace::new();
    let ckpt = ws.trained();
    assert!(ckpt.exists());
    let log_path = ws.out().join("runs/full/log.csv");
    let log = read(&log_path);
    assert_eq!(log.lines().count(), 3, "{log}");

    let stdout = ws.ok(&["train", "--ablation", "full"]);
    assert_eq!(read(&log_path), log);
    assert!(stdout.lines().any(|l| l.starts_with("1,")), "{stdout}");
    assert!(ws.out().join("runs/full/report.csv").exists());
    assert!(ws.out().join("runs/full/scores.svg").exists());
}

#[test]
fn supervised_ablation_logs_zero_model_losses() {
    let ws = Workspace::new();
    ws.ok(&["dataset"]);
    ws.ok(&["train", "--ablation", "supervised_loss"]);
    let log = read(&ws.out().join("runs/supervised_loss/log.csv"));
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[1], f[2]), ("0", "0"), "{line}");
    }
}

#[test]
fn eval_is_bit_stable_and_respects_the_split() {
    let ws = Workspace::new();
    ws.trained();
    ws.ok(&["eval", "--split", "test"]);
    let dir = ws.out().join("eval/full-test");
    let report = read(&dir.join("report.csv"));
    let clips = read(&dir.join("clips.csv"));
    ws.ok(&["eval", "--split", "test"]);
    assert_eq!(read(&dir.join("report.csv")), report);
    assert_eq!(read(&dir.join("clips.csv")), clips);

    let manifest: serde_json::Value = serde_json::from_str(&read(&ws.out().join("dataset/manifest.json"))).unwrap();
    let test_ids: Vec<&str> = manifest["test"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let evaluated: Vec<&str> = clips.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(evaluated, test_ids);

    ws.ok(&["eval", "--split", "train", "--flex", "0.5,1,1.5"]);
    let train_dir = ws.out().join("eval/full-train");
    let header = read(&train_dir.join("report.csv")).lines().next().unwrap().to_string();
    assert!(header.contains("score") && header.contains("smoothness"));
    assert_eq!(read(&train_dir.join("flex.csv")).lines().count(), 1 + 3 * 8);
}

#[test]
fn layout_mismatch_exits_with_code_4() {
    let ws = Workspace::new();
    ws.trained();
    let manifest = ws.out().join("dataset/manifest.json");
    let text = read(&manifest).replace("\"layout_version\": 1", "\"layout_version\": 99");
    std::fs::write(&manifest, text).unwrap();
    let o = ws.run(&["eval"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("99") && err.contains('1'), "{err}");

    // A checkpoint from another layout is refused the same way.
    let ws = Workspace::new();
    let ckpt = ws.trained();
    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[12..16].copy_from_slice(&7u32.to_le_bytes());
    std::fs::write(&ckpt, bytes).unwrap();
    assert_eq!(ws.run(&["eval"]).status.code(), Some(4));
}

#[test]
fn generate_validates_and_writes_clips() {
    let ws = Workspace::new();
    ws.trained();
    let skeleton = Skeleton::canonical();

    ws.ok(&["generate", "--wave", "0.5", "--arm", "left", "--frames", "60", "--bvh", "--name", "w"]);
    let clip = MotionClip::load(&skeleton, &ws.out().join("generated/w.json")).unwrap();
    assert_eq!(clip.len(), 60);
    assert_eq!((clip.behaviour, clip.arm), (Behaviour::Wave, Arm::Left));

    let bvh = read(&ws.out().join("generated/w.bvh"));
    let meta = ClipMeta {
        id: "w".into(),
        behaviour: Behaviour::Wave,
        arm: Arm::Left,
        attributes: [0.5; 3],
    };
    let reparsed = parse_bvh(&bvh, &skeleton, &identity_names(&skeleton), meta).unwrap();
    assert_eq!(reparsed.clip.len(), 60);

    assert_eq!(ws.run(&["generate", "--point", "0,2,0"]).status.code(), Some(2));
    ws.ok(&["generate", "--point", "0,2,0", "--normalize", "--name", "p"]);
    ws.ok(&["generate", "--point", "0,-0.6,0.8", "--name", "down"]);
    assert_eq!(ws.run(&["generate", "--point", "1,0"]).status.code(), Some(2));
    assert_eq!(ws.run(&["generate", "--wave", "1.5"]).status.code(), Some(2));
}

#[test]
fn config_errors_name_the_field() {
    let ws = Workspace::new();
    std::fs::write(&ws.config, r#"{"seed": 1, "train": {"learning_rate": "fast"}}"#).unwrap();
    let o = ws.run(&["dataset"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.learning_rate"));

    std::fs::write(&ws.config, r#"{"train": {}}"#).unwrap();
    assert_eq!(ws.run(&["dataset"]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_rlanimate"))
        .args(["--config", "/nonexistent/experiment.json", "dataset"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(ws.run(&["train", "--ablation", "bogus"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_are_io_errors() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["train"]).status.code(), Some(3));
    ws.ok(&["dataset"]);
    assert_eq!(ws.run(&["eval"]).status.code(), Some(3));
}

#[test]
fn output_root_comes_from_the_environment() {
    let ws = Workspace::new();
    let env_out = ws.root.join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_rlanimate"))
        .arg("--config")
        .arg(&ws.config)
        .arg("dataset")
        .env("RLANIMATE_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("dataset/manifest.json").exists());
}
