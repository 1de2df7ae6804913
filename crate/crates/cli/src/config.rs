//! The experiment document and the dataset manifest.

use std::path::{Path, PathBuf};

use rlanimate::agent::AgentConfig;
use rlanimate::eval::EvalConfig;
use rlanimate::motion::DatasetSpec;
use rlanimate::training::TrainConfig;
use rlanimate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the output root (and nothing else).
pub const OUT_ENV: &str = "RLANIMATE_OUT";

/// One JSON document describes a whole experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seeds agent initialisation and training. Required: there is no implicit entropy.
    pub seed: u64,
    /// Periodic checkpoint interval in epochs (the final epoch is always written).
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("rlanimate-out")
}

fn default_checkpoint_every() -> usize {
    10
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            output_dir: default_output_dir(),
            seed: 0,
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config document; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("at '{}': {}", e.path(), e.inner())))?;
        config.apply_seed(config.seed);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The experiment seed drives agent initialisation and the training stream.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.agent.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let scoped = |field: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config(m) | Error::Validation(m) => Error::Config(format!("at '{field}': {m}")),
                other => other,
            })
        };
        scoped("dataset", self.dataset.validate())?;
        scoped("agent", self.agent.validate())?;
        scoped("train", self.train.validate())?;
        scoped("eval", self.eval.validate())?;
        if self.checkpoint_every == 0 {
            return Err(Error::Config("at 'checkpoint_every': must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Lists the generated clips so later commands can find them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub layout_version: u32,
    pub spec: DatasetSpec,
    /// Clip files relative to the manifest's directory.
    pub clip_dir: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("manifest {}: at '{}': {}", path.display(), e.path(), e.inner())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = ExperimentConfig::from_json("{}").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn field_paths_in_errors() {
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "train": {"epochs": "many"}}"#).unwrap_err();
        assert!(err.to_string().contains("train.epochs"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "agent": {"h_dim": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("agent"), "{err}");
    }

    #[test]
    fn seed_propagates() {
        let c = ExperimentConfig::from_json(r#"{"seed": 42}"#).unwrap();
        assert_eq!((c.agent.seed, c.train.seed), (42, 42));
    }

    #[test]
    fn roundtrip() {
        let mut c = ExperimentConfig::default();
        c.apply_seed(5);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
