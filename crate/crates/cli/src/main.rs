//! `rlanimate`: dataset generation, training, evaluation and synthesis from
//! one JSON experiment config.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 I/O error,
//! 4 signal-layout version mismatch, 5 numeric fault.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rlanimate::eval::AblationKind;
use rlanimate::motion::Arm;
use rlanimate::Error;

use commands::{Request, Split};
use config::{ExperimentConfig, OUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "rlanimate", version, about = "Train and evaluate gesture-animation agents")]
struct Cli {
    /// Experiment config (JSON). Built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; overrides the config and the environment.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ArmArg {
    Left,
    Right,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Left => Arm::Left,
            ArmArg::Right => Arm::Right,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic clips and their manifest.
    Dataset,
    /// Train the agent or one of its ablation controls.
    Train {
        /// full, single_state, single_dynamics_space or supervised_loss.
        #[arg(long, default_value = "full", value_parser = parse_kind)]
        ablation: AblationKind,
        /// Dataset manifest; defaults to the one under the output root.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a checkpoint on one split of the dataset.
    Eval {
        /// Defaults to the full agent's checkpoint under the output root.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Comma-separated time-warp factors, e.g. 0.5,1,1.5.
        #[arg(long, value_delimiter = ',')]
        flex: Vec<f64>,
    },
    /// Animate a new objective with a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Pointing target direction x,y,z.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "wave", required_unless_present = "wave")]
        point: Option<Vec<f64>>,
        /// Rescale a non-unit --point target instead of rejecting it.
        #[arg(long, requires = "point")]
        normalize: bool,
        /// Wave exaggeration in [0, 1].
        #[arg(long)]
        wave: Option<f64>,
        #[arg(long, value_enum, default_value = "right")]
        arm: ArmArg,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        /// Also write a BVH file.
        #[arg(long)]
        bvh: bool,
        /// Output file stem.
        #[arg(long, default_value = "generated")]
        name: String,
    },
}

fn parse_kind(s: &str) -> Result<AblationKind, String> {
    AblationKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = AblationKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown ablation '{s}' (expected one of {})", names.join(", "))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::VersionMismatch { .. } => 4,
        Error::NumericFault { .. } => 5,
        _ => 2,
    }
}

fn run(cli: Cli) -> rlanimate::Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.apply_seed(seed);
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let default_ckpt = || commands::run_dir(&out, AblationKind::Full).join("checkpoint.bin");

    match cli.command {
        Command::Dataset => {
            commands::dataset(&config, &out)?;
        }
        Command::Train { ablation, manifest } => {
            let manifest = manifest.unwrap_or_else(|| commands::manifest_path(&out));
            commands::train(&config, &out, &manifest, ablation)?;
        }
        Command::Eval {
            checkpoint,
            manifest,
            split,
            flex,
        } => {
            let checkpoint = checkpoint.unwrap_or_else(default_ckpt);
            let manifest = manifest.unwrap_or_else(|| commands::manifest_path(&out));
            commands::eval(&config, &out, &checkpoint, &manifest, split, &flex)?;
        }
        Command::Generate {
            checkpoint,
            point,
            normalize,
            wave,
            arm,
            frames,
            bvh,
            name,
        } => {
            let request = match (point, wave) {
                (Some(p), None) => {
                    let target: [f64; 3] = p
                        .try_into()
                        .map_err(|p: Vec<f64>| Error::Validation(format!("--point needs x,y,z; got {} values", p.len())))?;
                    Request::Point { target, normalize }
                }
                (None, Some(e)) => Request::Wave { exaggeration: e },
                _ => return Err(Error::Validation("give exactly one of --point or --wave".into())),
            };
            let checkpoint = checkpoint.unwrap_or_else(default_ckpt);
            commands::generate(&config, &out, &checkpoint, request, arm.into(), frames, &name, bvh)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are successes; bad flags are config errors.
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
