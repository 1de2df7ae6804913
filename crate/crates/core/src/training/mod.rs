//! Episode buffer, losses, optimizer and the training loop.

mod buffer;
mod losses;
mod optim;
mod trainer;
mod update;

pub use buffer::{sample_chunks, ChunkView, EpisodeBuffer, EpisodeRecord};
pub use losses::{kl_diag, loss_l1, loss_l2, loss_l3, total_loss, LossParts, LossWeights};
pub use optim::{clip_global_norm, Adam};
pub use trainer::{train, train_with, BehaviourSet, EpochRecord, TrainConfig, TrainOutcome, TrainingLog, LOG_HEADER};
pub use update::{chunk_losses, update_step, ChunkTrace, LossReport, UpdateSettings};
