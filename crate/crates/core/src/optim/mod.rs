//! Adam and SGD written out by hand, the warmup learning-rate schedule, and
//! the optimizer bank that decides whether tasks share Adam moments.

mod adam;
mod bank;
mod lr;

pub use adam::{adam_step, scale_gradients, sgd_step, AdamConfig, AdamState};
pub use bank::{build_optimizers, AccumulatorMode, OptimizerBank, OptimizerTopology, ScalingMode};
pub use lr::{lr_at, LrSchedule};
