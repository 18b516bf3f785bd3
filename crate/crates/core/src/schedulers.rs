//! Task-weighting policies.
//!
//! Explicit policies produce sampling probabilities; implicit policies keep
//! task visitation fixed and produce per-task multipliers that sum to N.
//! Every policy here is a pure function of its inputs, except
//! [`sample_task`] which draws from a caller-owned RNG.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{DecisionKind, RelativeScores, ScheduleDecision, SUM_TOLERANCE};

pub const DEFAULT_EXPLICIT_EPSILON: f64 = 0.05;

fn default_explicit_epsilon() -> f64 {
    DEFAULT_EXPLICIT_EPSILON
}

/// Parameters of the validation-driven sampling schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitConfig {
    /// Oversampling aggressiveness exponent.
    pub alpha: f64,
    /// Smoothing term; bounds the largest weight at `1 / epsilon`.
    #[serde(default = "default_explicit_epsilon")]
    pub epsilon: f64,
}

impl ExplicitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("explicit alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("explicit epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Parameters of the validation-driven weight-scaling schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplicitConfig {
    /// Ramp-in exponent applied to the best relative score.
    pub alpha: f64,
    /// Exponent on the distance to the mean relative score.
    pub beta: f64,
    /// Half-width of the weight band `[1 - gamma, 1 + gamma]`.
    pub gamma: f64,
}

impl ImplicitConfig {
    /// `gamma = 0` is accepted: it pins every weight to 1.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("implicit alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("implicit beta must be > 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("implicit gamma must lie in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// A fixed sampling distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantConfig {
    pub probabilities: Vec<f64>,
}

impl ConstantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probabilities.is_empty() {
            return Err(Error::Empty("constant schedule probabilities"));
        }
        if self.probabilities.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "constant schedule probabilities must be positive: {:?}",
                self.probabilities
            )));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!("constant schedule probabilities sum to {sum}")));
        }
        Ok(())
    }
}

/// Loss-progress baseline: tasks whose training loss falls slowly get more weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossProgressConfig {
    /// Steps between the two loss snapshots that are compared.
    pub window: u64,
    pub temperature: f64,
}

impl LossProgressConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("loss-progress window must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss-progress temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Any scheduling policy, as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerConfig {
    Uniform,
    Constant(ConstantConfig),
    Explicit(ExplicitConfig),
    Implicit(ImplicitConfig),
    LossProgress(LossProgressConfig),
}

impl SchedulerConfig {
    pub fn decision_kind(&self) -> DecisionKind {
        match self {
            SchedulerConfig::Uniform | SchedulerConfig::Constant(_) | SchedulerConfig::Explicit(_) => {
                DecisionKind::SamplingProbabilities
            }
            SchedulerConfig::Implicit(_) | SchedulerConfig::LossProgress(_) => DecisionKind::WeightMultipliers,
        }
    }

    /// Method name used in reports and trajectory file names.
    pub fn label(&self) -> String {
        match self {
            SchedulerConfig::Uniform => "uniform".into(),
            SchedulerConfig::Constant(c) => {
                let parts: Vec<String> = c.probabilities.iter().map(|p| format!("{p}")).collect();
                format!("constant-{}", parts.join("-"))
            }
            SchedulerConfig::Explicit(_) => "explicit-adaptive".into(),
            SchedulerConfig::Implicit(_) => "implicit-adaptive".into(),
            SchedulerConfig::LossProgress(_) => "loss-progress".into(),
        }
    }

    pub fn needs_scores(&self) -> bool {
        matches!(self, SchedulerConfig::Explicit(_) | SchedulerConfig::Implicit(_))
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        match self {
            SchedulerConfig::Uniform => Ok(()),
            SchedulerConfig::Constant(c) => {
                c.validate()?;
                if c.probabilities.len() != n_tasks {
                    return Err(Error::LengthMismatch {
                        what: "constant schedule probabilities",
                        expected: n_tasks,
                        actual: c.probabilities.len(),
                    });
                }
                Ok(())
            }
            SchedulerConfig::Explicit(c) => c.validate(),
            SchedulerConfig::Implicit(c) => c.validate(),
            SchedulerConfig::LossProgress(c) => c.validate(),
        }
    }
}

/// Feedback available to a scheduler when it makes a decision.
#[derive(Clone, Copy, Debug, Default)]
pub struct Signals<'a> {
    /// Latest relative scores, absent before every task has been validated.
    pub scores: Option<&'a RelativeScores>,
    /// `(recent, past)` training losses, absent until a full window has elapsed.
    pub losses: Option<(&'a [f64], &'a [f64])>,
}

/// Produces the decision for `n_tasks` at `step`, falling back to the
/// uniform decision whenever the policy's feedback is not yet available.
pub fn decide(cfg: &SchedulerConfig, n_tasks: usize, step: u64, signals: Signals<'_>) -> Result<ScheduleDecision> {
    let kind = cfg.decision_kind();
    let uniform = || ScheduleDecision::uniform(kind, n_tasks, step);
    match cfg {
        SchedulerConfig::Uniform => Ok(uniform()),
        SchedulerConfig::Constant(c) => {
            let mut d = constant_probabilities(c)?;
            d.step = step;
            Ok(d)
        }
        SchedulerConfig::Explicit(c) => match signals.scores {
            Some(scores) => {
                let mut d = explicit_probabilities(&explicit_weights(scores, c))?;
                d.step = step;
                Ok(d)
            }
            None => Ok(uniform()),
        },
        SchedulerConfig::Implicit(c) => match signals.scores {
            Some(scores) => Ok(implicit_weights(scores, c, step)),
            None => Ok(uniform()),
        },
        SchedulerConfig::LossProgress(c) => match signals.losses {
            Some((recent, past)) => loss_progress_weights(recent, past, c, step),
            None => Ok(uniform()),
        },
    }
}

/// Unnormalized explicit weights `w_i = 1 / (min(1, S_i)^alpha + epsilon)`.
pub fn explicit_weights(scores: &RelativeScores, cfg: &ExplicitConfig) -> Vec<f64> {
    scores
        .values()
        .iter()
        .map(|&s| 1.0 / (s.min(1.0).powf(cfg.alpha) + cfg.epsilon))
        .collect()
}

/// Normalizes positive weights into sampling probabilities.
pub fn explicit_probabilities(weights: &[f64]) -> Result<ScheduleDecision> {
    if weights.is_empty() {
        return Err(Error::Empty("explicit weights"));
    }
    if let Some(bad) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidConfig(format!("explicit weights must be positive and finite, got {bad}")));
    }
    let total: f64 = weights.iter().sum();
    Ok(ScheduleDecision {
        kind: DecisionKind::SamplingProbabilities,
        values: weights.iter().map(|w| w / total).collect(),
        step: 0,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Implicit weights before renormalization. Each lies in `[1 - gamma, 1 + gamma]`.
///
/// With two tasks the deviations are mirror images. The deviation is rounded
/// down to a multiple of 2^-52 so that `1 + d` and `1 - d` are both exact and
/// the pair sums to exactly 2.
pub fn implicit_raw_weights(scores: &RelativeScores, cfg: &ImplicitConfig) -> Vec<f64> {
    let s = scores.values();
    let ramp = scores.max().powf(cfg.alpha);
    if s.len() == 2 {
        let half_gap = (s[0] - s[1]).abs() / 2.0;
        let deviation = cfg.gamma.min(ramp * half_gap.powf(cfg.beta));
        let grid = (2.0f64).powi(52);
        let deviation = (deviation * grid).floor() / grid;
        let hi = 1.0 + deviation;
        let lo = 1.0 - deviation;
        return match s[0].partial_cmp(&s[1]) {
            Some(std::cmp::Ordering::Less) => vec![hi, lo],
            Some(std::cmp::Ordering::Greater) => vec![lo, hi],
            _ => vec![1.0, 1.0],
        };
    }
    let mean = scores.mean();
    s.iter()
        .map(|&si| 1.0 + sign(mean - si) * cfg.gamma.min(ramp * (si - mean).abs().powf(cfg.beta)))
        .collect()
}

/// Implicit weight multipliers, rescaled so they sum to N.
pub fn implicit_weights(scores: &RelativeScores, cfg: &ImplicitConfig, step: u64) -> ScheduleDecision {
    let raw = implicit_raw_weights(scores, cfg);
    ScheduleDecision {
        kind: DecisionKind::WeightMultipliers,
        values: renormalize_to_count(raw),
        step,
    }
}

fn renormalize_to_count(mut w: Vec<f64>) -> Vec<f64> {
    let n = w.len() as f64;
    let total: f64 = w.iter().sum();
    if total != n {
        let factor = n / total;
        w.iter_mut().for_each(|x| *x *= factor);
    }
    w
}

/// Returns the configured distribution unchanged.
pub fn constant_probabilities(cfg: &ConstantConfig) -> Result<ScheduleDecision> {
    cfg.validate()?;
    Ok(ScheduleDecision {
        kind: DecisionKind::SamplingProbabilities,
        values: cfg.probabilities.clone(),
        step: 0,
    })
}

/// `w_i = N * softmax(r / temperature)_i` where `r_i = recent_i / past_i`.
pub fn loss_progress_weights(
    recent: &[f64],
    past: &[f64],
    cfg: &LossProgressConfig,
    step: u64,
) -> Result<ScheduleDecision> {
    if recent.len() != past.len() {
        return Err(Error::LengthMismatch {
            what: "loss snapshots",
            expected: recent.len(),
            actual: past.len(),
        });
    }
    if recent.is_empty() {
        return Err(Error::Empty("loss snapshots"));
    }
    if let Some(bad) = past.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidConfig(format!("past losses must be positive, got {bad}")));
    }
    let logits: Vec<f64> = recent
        .iter()
        .zip(past)
        .map(|(r, p)| r / p / cfg.temperature)
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let n = recent.len() as f64;
    Ok(ScheduleDecision {
        kind: DecisionKind::WeightMultipliers,
        values: exps.iter().map(|e| n * e / total).collect(),
        step,
    })
}

/// Draws a task index with probability `decision.values[i]`.
pub fn sample_task<R: Rng + ?Sized>(decision: &ScheduleDecision, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in decision.values.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u beyond the cumulative sum
    decision.values.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
