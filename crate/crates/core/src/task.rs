//! Domain types shared by every scheduler and harness: per-task validation
//! state, relative scores, schedule decisions and metric records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a decision's values.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Per-task identity and validation state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task_id: usize,
    pub name: String,
    /// Single-task reference score, strictly positive.
    pub baseline_score: f64,
    /// Most recent validation score; `None` before the first validation.
    pub latest_score: Option<f64>,
    pub dataset_size: usize,
}

impl TaskState {
    pub fn new(task_id: usize, name: impl Into<String>, baseline_score: f64, dataset_size: usize) -> Result<Self> {
        if !(baseline_score > 0.0) || !baseline_score.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "baseline score of task {task_id} must be positive, got {baseline_score}"
            )));
        }
        if dataset_size == 0 {
            return Err(Error::InvalidConfig(format!("task {task_id} has an empty dataset")));
        }
        Ok(Self {
            task_id,
            name: name.into(),
            baseline_score,
            latest_score: None,
            dataset_size,
        })
    }

    /// Returns a copy carrying `score` as the latest validation result.
    pub fn with_score(mut self, score: f64) -> Result<Self> {
        self.set_score(score)?;
        Ok(self)
    }

    pub fn set_score(&mut self, score: f64) -> Result<()> {
        if !(score >= 0.0) || !score.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "validation score of task {} must be a finite non-negative number, got {score}",
                self.task_id
            )));
        }
        self.latest_score = Some(score);
        Ok(())
    }
}

/// Scores relative to each task's baseline, `S_i = s_i / b_i`.
///
/// `mean` and `max` are always derived from `values` at construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelativeScores {
    values: Vec<f64>,
    mean: f64,
    max: f64,
}

impl RelativeScores {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("relative scores"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("relative score must be finite, got {bad}")));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { values, mean, max })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Computes `S_i = s_i / b_i` for every task.
///
/// Fails with [`Error::ScoresUnavailable`] when any task has not been
/// validated yet; callers then fall back to the uniform decision.
pub fn compute_relative_scores(tasks: &[TaskState]) -> Result<RelativeScores> {
    if tasks.is_empty() {
        return Err(Error::Empty("task list"));
    }
    let values = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let s = t.latest_score.ok_or(Error::ScoresUnavailable { task: i })?;
            if !(t.baseline_score > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "baseline score of task {i} must be positive, got {}",
                    t.baseline_score
                )));
            }
            Ok(s / t.baseline_score)
        })
        .collect::<Result<Vec<_>>>()?;
    RelativeScores::new(values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    /// Explicit schedules: how often each task is sampled.
    SamplingProbabilities,
    /// Implicit schedules: per-task learning-rate (or gradient) multipliers.
    WeightMultipliers,
}

/// What a scheduler decided for every task at a given step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub kind: DecisionKind,
    pub values: Vec<f64>,
    pub step: u64,
}

impl ScheduleDecision {
    /// Builds a decision after checking the kind's sum and sign invariants.
    pub fn new(kind: DecisionKind, values: Vec<f64>, step: u64) -> Result<Self> {
        let decision = Self { kind, values, step };
        decision.validate()?;
        Ok(decision)
    }

    pub fn uniform(kind: DecisionKind, n: usize, step: u64) -> Self {
        let v = match kind {
            DecisionKind::SamplingProbabilities => 1.0 / n as f64,
            DecisionKind::WeightMultipliers => 1.0,
        };
        Self {
            kind,
            values: vec![v; n],
            step,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of training effort each task receives: probabilities as-is,
    /// multipliers divided by N.
    pub fn effort_shares(&self) -> Vec<f64> {
        match self.kind {
            DecisionKind::SamplingProbabilities => self.values.clone(),
            DecisionKind::WeightMultipliers => {
                let n = self.values.len() as f64;
                self.values.iter().map(|w| w / n).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Empty("schedule decision"));
        }
        let n = self.values.len() as f64;
        let sum: f64 = self.values.iter().sum();
        match self.kind {
            DecisionKind::SamplingProbabilities => {
                if self.values.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "sampling probabilities must be non-negative: {:?}",
                        self.values
                    )));
                }
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::InvalidConfig(format!("sampling probabilities sum to {sum}, not 1")));
                }
            }
            DecisionKind::WeightMultipliers => {
                if self.values.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "weight multipliers must be non-negative: {:?}",
                        self.values
                    )));
                }
                if (sum - n).abs() > SUM_TOLERANCE * n.max(1.0) {
                    return Err(Error::InvalidConfig(format!("weight multipliers sum to {sum}, not {n}")));
                }
            }
        }
        Ok(())
    }
}

/// One validation event for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub task: usize,
    #[serde(rename = "score")]
    pub raw_score: f64,
    pub relative_score: f64,
    pub weight: f64,
    #[serde(rename = "lr")]
    pub effective_lr: f64,
    pub train_loss: f64,
}
