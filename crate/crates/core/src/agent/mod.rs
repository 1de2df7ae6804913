//! The agent: a reverse-mode autodiff tape, named parameters, the portrayal,
//! behaviour and animation models, rollouts and checkpoints.

mod checkpoint;
pub(crate) mod model;
mod params;
mod rollout;
pub mod tape;

pub use checkpoint::{write_atomic, Checkpoint, FORMAT_VERSION, MAGIC};
pub use model::{
    Agent, AgentConfig, AgentVariant, BetaPolicyOutput, GaussianParams, LatentState, PriorOutput, RecurrentState,
};
pub use params::{ParamId, ParamStore, Tensor};
pub use rollout::{Rollout, Sampling};
pub use tape::Gradients;
