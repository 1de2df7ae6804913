//! Model-based reinforcement learning for gesture animation.
//!
//! The agent splits what it observes into an *objective* (which behaviour to
//! portray, with which arm, toward what target, and how far along it is) and a
//! *description* (the character's current geometry). It learns two latent
//! dynamics from motion clips: a deterministic task state driven by the
//! objective stream, and a behaviour state with deterministic and stochastic
//! parts that captures behaviour-agnostic animation dynamics. A Beta policy
//! head turns the latents into bounded per-joint rotations.
//!
//! Module map:
//!
//! - [`kinematics`]: skeleton, poses, forward kinematics
//! - [`motion`]: clip formats (BVH subset, JSON), synthetic clip generation, dataset splits
//! - [`signals`]: objective and description vectors
//! - [`agent`]: reverse-mode autodiff tape, model parameters, the three cooperating models, rollouts, checkpoints
//! - [`training`]: episode buffer, chunk sampling, losses, optimizer, the training loop
//! - [`eval`]: imitation score, Savitzky–Golay smoothness, ablations, time-warp sweep, reports
//! - [`exec`]: data-parallel helpers with a sequential fallback

pub mod agent;
pub mod error;
pub mod eval;
pub mod exec;
pub mod kinematics;
pub mod motion;
pub mod signals;
pub mod training;

pub use error::{Error, Result};
