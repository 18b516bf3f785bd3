use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointRing};
use super::config::{RunConfig, TaskConfig, Visitation};
use crate::error::{Error, Result};
use crate::model::{generate_task, loss_and_grad, mean_squared_error, score_from_loss, Dataset, ParamVector, TaskData};
use crate::optim::{build_optimizers, lr_at};
use crate::schedulers::{decide, sample_task, SchedulerConfig, Signals};
use crate::task::{compute_relative_scores, MetricRecord, ScheduleDecision, TaskState};

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
/// Rows of the training split used for the reported training loss.
const TRAIN_PROBE_ROWS: usize = 256;

/// Final numbers for one task of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub name: String,
    pub baseline: f64,
    /// Dev (validation) score of the checkpoint-averaged parameters.
    pub dev_score: f64,
    /// Test score of the checkpoint-averaged parameters.
    pub test_score: f64,
    /// Best validation score seen during training.
    pub best_dev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub tasks: Vec<TaskResult>,
    pub records: Vec<MetricRecord>,
    /// Sum of the weights applied to updates within each validation window.
    pub applied_scale_per_window: Vec<f64>,
    pub final_step: u64,
    pub config: RunConfig,
    #[serde(skip)]
    pub averaged_params: Option<ParamVector>,
}

impl RunResult {
    pub fn mean_dev(&self) -> f64 {
        self.tasks.iter().map(|t| t.dev_score).sum::<f64>() / self.tasks.len() as f64
    }

    /// Records of one task, in step order.
    pub fn task_records(&self, task: usize) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter().filter(move |r| r.task == task)
    }
}

/// Outcome of a single-task baseline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: String,
    /// The baseline score `b_i`: dev score of the checkpoint-averaged model.
    pub score: f64,
    pub test_score: f64,
    pub best_dev: f64,
    pub steps: u64,
    pub records: Vec<MetricRecord>,
}

/// Generates every task's splits for `cfg`.
pub fn generate_data(cfg: &RunConfig) -> Result<Vec<TaskData>> {
    cfg.tasks.iter().map(|t| generate_task(&t.data, &cfg.model)).collect()
}

fn split_mse(params: &ParamVector, cfg: &RunConfig, task: usize, split: &Dataset) -> Result<f64> {
    mean_squared_error(params, &cfg.model, task, &split.inputs, &split.targets, split.rows)
}

struct Trained {
    records: Vec<MetricRecord>,
    applied: Vec<f64>,
    averaged: ParamVector,
    best_dev: Vec<f64>,
    final_step: u64,
}

/// The training loop shared by baselines and multi-task runs.
fn train(cfg: &RunConfig, data: &[TaskData], baselines: Option<&[f64]>) -> Result<Trained> {
    let n = cfg.n_tasks();
    if data.len() != n {
        return Err(Error::LengthMismatch {
            what: "task data",
            expected: n,
            actual: data.len(),
        });
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(STREAM_INIT);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_TRAIN);

    let mut params = cfg.model.init_params(n, &mut init_rng);
    let layout = params.layout().clone();
    let mut bank = build_optimizers(cfg.topology, n, &layout)?;
    let mut states: Vec<TaskState> = cfg
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| TaskState::new(i, t.name.clone(), baselines.map_or(100.0, |b| b[i]), t.data.train_size))
        .collect::<Result<_>>()?;
    let probes: Vec<Dataset> = data.iter().map(|d| d.train.head_rows(TRAIN_PROBE_ROWS)).collect();

    let visitation = cfg.visitation();
    let mut decision = decide(&cfg.scheduler, n, 0, Signals::default())?;
    let mut loss_history: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut ring = CheckpointRing::new(cfg.checkpoints_to_average);
    let mut records = Vec::new();
    let mut applied = Vec::new();
    let mut window_scale = 0.0;
    let mut best_dev = vec![f64::NEG_INFINITY; n];
    let mut indices = vec![0usize; cfg.batch_size];

    for step in 1..=cfg.total_steps {
        let (task, factor) = match visitation {
            Visitation::Sampled => (sample_task(&decision, &mut rng), 1.0),
            Visitation::RoundRobin => {
                let task = ((step - 1) % n as u64) as usize;
                let factor = match cfg.scheduler {
                    SchedulerConfig::Uniform => 1.0,
                    _ => decision.values[task],
                };
                (task, factor)
            }
        };
        let train = &data[task].train;
        for i in indices.iter_mut() {
            *i = rng.random_range(0..train.rows);
        }
        let batch = train.batch(&indices, task);
        let (loss, mut grads) = loss_and_grad(&params, &cfg.model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                task,
                loss,
                partial: records,
            });
        }
        let l2 = cfg.tasks[task].l2;
        if l2 > 0.0 {
            for seg in layout.segments().iter().filter(|s| s.is_active_for(task)) {
                for j in seg.range() {
                    grads[j] += l2 * params.values()[j];
                }
            }
        }
        let lr = lr_at(&cfg.lr_schedule, step);
        bank.apply(task, &mut params, &grads, &cfg.adam, lr, factor)?;
        window_scale += factor;

        if step % cfg.validation_every == 0 {
            let mut raw = Vec::with_capacity(n);
            let mut losses = Vec::with_capacity(n);
            for i in 0..n {
                let val = split_mse(&params, cfg, i, &data[i].val)?;
                if !val.is_finite() {
                    return Err(Error::Diverged {
                        step,
                        task: i,
                        loss: val,
                        partial: records,
                    });
                }
                let score = score_from_loss(val);
                states[i].set_score(score)?;
                best_dev[i] = best_dev[i].max(score);
                raw.push(score);
                losses.push(split_mse(&params, cfg, i, &probes[i])?);
            }
            let relative = compute_relative_scores(&states)?;
            let past = crate::simdyn::past_snapshot(&loss_history, step, &cfg.scheduler).cloned();
            loss_history.push((step, losses.clone()));
            let signals = Signals {
                scores: baselines.map(|_| &relative),
                losses: past.as_ref().map(|p| (losses.as_slice(), p.as_slice())),
            };
            decision = decide(&cfg.scheduler, n, step, signals)?;
            for i in 0..n {
                records.push(MetricRecord {
                    step,
                    task: i,
                    raw_score: raw[i],
                    relative_score: relative.values()[i],
                    weight: decision.values[i],
                    effective_lr: lr * applied_factor(cfg, visitation, &decision, i),
                    train_loss: losses[i],
                });
            }
            applied.push(window_scale);
            window_scale = 0.0;
        }
        if step % cfg.checkpoint_every == 0 {
            ring.push(Checkpoint {
                step,
                params: params.clone(),
            })?;
        }
    }
    let averaged = if ring.is_empty() { params } else { ring.average()? };
    Ok(Trained {
        records,
        applied,
        averaged,
        best_dev,
        final_step: cfg.total_steps,
    })
}

fn applied_factor(cfg: &RunConfig, visitation: Visitation, decision: &ScheduleDecision, task: usize) -> f64 {
    match (visitation, &cfg.scheduler) {
        (Visitation::RoundRobin, SchedulerConfig::Uniform) | (Visitation::Sampled, _) => 1.0,
        (Visitation::RoundRobin, _) => decision.values[task],
    }
}

/// Config for training `task` alone, as its own baseline.
pub fn baseline_config(task: &TaskConfig, cfg: &RunConfig) -> RunConfig {
    RunConfig {
        tasks: vec![task.clone()],
        scheduler: SchedulerConfig::Uniform,
        total_steps: task.baseline_steps.unwrap_or(cfg.total_steps),
        visitation: None,
        baselines: None,
        label: Some(format!("baseline-{}", task.name)),
        ..cfg.clone()
    }
}

/// Trains a single-task model on `task` and returns its baseline score.
///
/// Relative scores in the returned records are taken against that final score.
pub fn run_baseline(task: &TaskConfig, cfg: &RunConfig) -> Result<BaselineResult> {
    let data = generate_task(&task.data, &cfg.model)?;
    run_baseline_with_data(task, cfg, &data)
}

pub fn run_baseline_with_data(task: &TaskConfig, cfg: &RunConfig, data: &TaskData) -> Result<BaselineResult> {
    let single = baseline_config(task, cfg);
    single.validate()?;
    let trained = train(&single, std::slice::from_ref(data), None)?;
    let score = score_from_loss(split_mse(&trained.averaged, &single, 0, &data.val)?);
    let test_score = score_from_loss(split_mse(&trained.averaged, &single, 0, &data.test)?);
    let mut records = trained.records;
    for r in &mut records {
        r.relative_score = r.raw_score / score;
    }
    Ok(BaselineResult {
        name: task.name.clone(),
        score,
        test_score,
        best_dev: trained.best_dev[0],
        steps: single.total_steps,
        records,
    })
}

/// Baselines for every task of `cfg`, reusing pre-generated data.
pub fn run_baselines_with_data(cfg: &RunConfig, data: &[TaskData]) -> Result<Vec<BaselineResult>> {
    cfg.tasks
        .iter()
        .zip(data)
        .map(|(t, d)| run_baseline_with_data(t, cfg, d))
        .collect()
}

/// Trains the multi-task model under `cfg`'s scheduler and topology.
pub fn run_multitask(cfg: &RunConfig, baselines: &[f64]) -> Result<RunResult> {
    let data = generate_data(cfg)?;
    run_multitask_with_data(cfg, baselines, &data)
}

pub fn run_multitask_with_data(cfg: &RunConfig, baselines: &[f64], data: &[TaskData]) -> Result<RunResult> {
    let mut cfg = cfg.clone();
    cfg.baselines = Some(baselines.to_vec());
    cfg.validate()?;
    let trained = train(&cfg, data, Some(baselines))?;
    let tasks = cfg
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(TaskResult {
                name: t.name.clone(),
                baseline: baselines[i],
                dev_score: score_from_loss(split_mse(&trained.averaged, &cfg, i, &data[i].val)?),
                test_score: score_from_loss(split_mse(&trained.averaged, &cfg, i, &data[i].test)?),
                best_dev: trained.best_dev[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        label: cfg.label(),
        tasks,
        records: trained.records,
        applied_scale_per_window: trained.applied,
        final_step: trained.final_step,
        config: cfg,
        averaged_params: Some(trained.averaged),
    })
}
