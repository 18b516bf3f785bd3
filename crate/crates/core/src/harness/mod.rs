//! Experiment orchestration: configs, baselines, multi-task runs,
//! checkpoint averaging, sweeps and reports.

mod checkpoint;
mod config;
mod metrics;
mod report;
mod sweep;
mod train;

pub use checkpoint::{
    average_checkpoints, load_checkpoint, save_checkpoint, sidecar_path, Checkpoint, CheckpointRing,
};
pub use config::{apply_override, load_json, parse_override, RunConfig, TaskConfig, Visitation};
pub use metrics::{read_jsonl, write_jsonl};
pub use report::{emit_report, ReportFiles};
pub use sweep::{grid_points, point_config, run_sweep, SweepAxis, SweepPoint, SweepSpec, SweepTable};
pub use train::{
    baseline_config, generate_data, run_baseline, run_baseline_with_data, run_baselines_with_data, run_multitask,
    run_multitask_with_data, BaselineResult, RunResult, TaskResult,
};
