//! Tiny multi-task regression models: a tanh encoder shared by all tasks,
//! one linear head per task, hand-written backward pass, and synthetic
//! teacher-generated datasets.

mod data;
mod mlp;
mod params;

pub use data::{generate_task, score_from_loss, Dataset, SyntheticTaskSpec, TaskData, Teacher, MIN_VAL_SIZE};
pub use mlp::{forward, loss_and_grad, mean_squared_error, Batch, ForwardCache, MlpSpec};
pub use params::{Layout, ParamVector, Segment, SegmentRole};
