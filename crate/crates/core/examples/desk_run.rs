//! Trains one agent on the default synthetic dataset and prints the log.
//!
//! Usage: `cargo run --release --example desk_run -- [kind] [epochs] [checkpoint]`

use std::path::Path;
use std::time::Instant;

use rlanimate::agent::{AgentConfig, Checkpoint};
use rlanimate::eval::{run_ablation, AblationKind, EvalConfig};
use rlanimate::kinematics::Skeleton;
use rlanimate::motion::{make_dataset, DatasetSpec};
use rlanimate::training::TrainConfig;

fn main() -> rlanimate::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).and_then(|s| AblationKind::parse(s)).unwrap_or(AblationKind::Full);
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);

    let skeleton = Skeleton::canonical();
    let dataset = make_dataset(&skeleton, &DatasetSpec::default())?;
    let train = TrainConfig { epochs, eval_every: 10, ..TrainConfig::default() };
    let start = Instant::now();
    let result = run_ablation(
        kind,
        &train,
        &AgentConfig::default(),
        &dataset,
        &skeleton,
        &EvalConfig::default(),
        &mut |row, _| {
            println!("{:>6.1}s {}", start.elapsed().as_secs_f64(), row.csv_line());
            Ok(())
        },
    )?;
    if let Some(path) = args.get(3) {
        Checkpoint::of(&result.outcome.agent, train.seed).save(Path::new(path))?;
    }
    for c in &result.test.clips {
        println!("{:<18} score {:>8.2} smooth {:>6.2}", c.id, c.score, c.smoothness);
    }
    println!(
        "{}: test score {:.2} smoothness {:.2}; train score {:.2} smoothness {:.2}; {:.1}s",
        kind.name(),
        result.test.mean_score(),
        result.test.mean_smoothness(),
        result.train.mean_score(),
        result.train.mean_smoothness(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
