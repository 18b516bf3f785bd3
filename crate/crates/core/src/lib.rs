//! Adaptive task scheduling for multi-task training.
//!
//! Explicit schedules change how often each task is sampled; implicit
//! schedules keep visitation fixed and scale each task's learning rate (or
//! gradients). Both are driven by validation scores relative to single-task
//! baselines. The crate also carries a hand-written Adam whose moment
//! accumulators can be shared across tasks or kept per task, a tiny
//! shared-encoder regression model to train with it, an analytic dynamics
//! simulator, and the harness that ties them into experiments.

pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod schedulers;
pub mod simdyn;
pub mod task;

pub use error::{Error, Result};
pub use model::{MlpSpec, ParamVector, SyntheticTaskSpec};
pub use optim::{AdamConfig, AdamState, LrSchedule, OptimizerTopology};
pub use schedulers::{
    ConstantConfig, ExplicitConfig, ImplicitConfig, LossProgressConfig, SchedulerConfig,
};
pub use task::{compute_relative_scores, DecisionKind, MetricRecord, RelativeScores, ScheduleDecision, TaskState};
