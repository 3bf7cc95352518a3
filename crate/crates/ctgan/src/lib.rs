//! Conditional tabular GAN trained with a Wasserstein loss, gradient penalty
//! and packed critic inputs, on top of a small reverse-mode tape.

pub mod adam;
pub mod condition;
pub mod error;
pub mod gmm;
pub mod nets;
pub mod tape;
pub mod train;
pub mod transform;

pub use condition::{Condition, ConditionSampler};
pub use error::{Error, Result};
pub use nets::{gradient_penalty, Discriminator, Generator, GpMode};
pub use tape::{Tape, Tensor, Var};
pub use train::{train, EpochStats, TrainConfig, TrainHooks, TrainLog, TrainedModel};
pub use transform::{Activation, ColumnTransform, Segment, TransformSpec};
