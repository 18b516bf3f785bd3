//! Closed-form learning dynamics for fast scheduler experiments.
//!
//! Each task's score moves toward its ceiling in proportion to the effort it
//! receives and decays in proportion to the effort it does not receive. The
//! scheduler only sees scores at validation events, so coarse cadences
//! reproduce the feedback loop in which a favored task grows, the starved
//! task is forgotten, and the next validation flips the schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedulers::{decide, SchedulerConfig, Signals};
use crate::task::{MetricRecord, RelativeScores, SUM_TOLERANCE};

/// Default number of trailing validation events inspected for oscillation.
pub const DEFAULT_OSCILLATION_WINDOW: usize = 20;
/// Default peak-to-trough swing, in effort share, that counts as a swing.
pub const DEFAULT_OSCILLATION_THRESHOLD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDynamics {
    /// Asymptotic score.
    pub ceiling: f64,
    /// Fraction of the remaining gap closed per step of full effort.
    pub learn_rate: f64,
    /// Fraction of the score lost per step of zero effort.
    pub forget_rate: f64,
    pub initial_score: f64,
    /// Reference score for relative scores; defaults to the ceiling.
    #[serde(default)]
    pub baseline: Option<f64>,
}

impl TaskDynamics {
    pub fn baseline(&self) -> f64 {
        self.baseline.unwrap_or(self.ceiling)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub tasks: Vec<TaskDynamics>,
}

impl DynamicsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Empty("dynamics tasks"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let ok = t.ceiling > 0.0
                && t.learn_rate > 0.0
                && t.learn_rate < 1.0
                && (0.0..1.0).contains(&t.forget_rate)
                && t.initial_score >= 0.0
                && t.initial_score <= t.ceiling
                && t.baseline() > 0.0;
            if !ok {
                return Err(Error::InvalidConfig(format!("invalid dynamics for task {i}: {t:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub total_steps: u64,
    /// Steps between validation events; the scheduler's signal is stale in between.
    pub validation_every: u64,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of Gaussian noise added to observed validation scores.
    #[serde(default)]
    pub validation_noise: f64,
}

impl SimConfig {
    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        if self.total_steps == 0 || self.validation_every == 0 {
            return Err(Error::InvalidConfig("total_steps and validation_every must be >= 1".into()));
        }
        if !(self.validation_noise >= 0.0) {
            return Err(Error::InvalidConfig("validation_noise must be >= 0".into()));
        }
        self.scheduler.validate(n_tasks)
    }
}

/// File form of a simulation: the dynamics and the run settings together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub dynamics: DynamicsSpec,
    pub sim: SimConfig,
}

/// Advances every score by one step under the given effort allocation.
pub fn step_dynamics(scores: &[f64], allocation: &[f64], spec: &DynamicsSpec) -> Result<Vec<f64>> {
    if scores.len() != spec.tasks.len() || allocation.len() != spec.tasks.len() {
        return Err(Error::LengthMismatch {
            what: "dynamics state",
            expected: spec.tasks.len(),
            actual: scores.len().min(allocation.len()),
        });
    }
    let total: f64 = allocation.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE || allocation.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidConfig(format!("allocation {allocation:?} is not a distribution")));
    }
    Ok(scores
        .iter()
        .zip(allocation)
        .zip(&spec.tasks)
        .map(|((&s, &a), t)| {
            let next = s + t.learn_rate * a * (t.ceiling - s) - t.forget_rate * (1.0 - a) * s;
            next.clamp(0.0, t.ceiling)
        })
        .collect())
}

fn sim_loss(score: f64, t: &TaskDynamics) -> f64 {
    (t.ceiling - score) / t.ceiling + 1e-9
}

/// Runs the simulator, emitting one record per task per validation event.
///
/// Each record carries the decision made from that event's scores; the
/// decision stays in force until the next event.
pub fn run_sim(spec: &DynamicsSpec, cfg: &SimConfig) -> Result<Vec<MetricRecord>> {
    spec.validate()?;
    let n = spec.tasks.len();
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.validation_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut scores: Vec<f64> = spec.tasks.iter().map(|t| t.initial_score).collect();
    let mut decision = decide(&cfg.scheduler, n, 0, Signals::default())?;
    let mut loss_history: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut records = Vec::with_capacity((cfg.total_steps / cfg.validation_every) as usize * n);

    for step in 1..=cfg.total_steps {
        let allocation = decision.effort_shares();
        scores = step_dynamics(&scores, &allocation, spec)?;
        if step % cfg.validation_every != 0 {
            continue;
        }
        let observed: Vec<f64> = scores
            .iter()
            .map(|&s| {
                if cfg.validation_noise > 0.0 {
                    (s + noise.sample(&mut rng)).max(0.0)
                } else {
                    s
                }
            })
            .collect();
        let relative = RelativeScores::new(
            observed
                .iter()
                .zip(&spec.tasks)
                .map(|(s, t)| s / t.baseline())
                .collect(),
        )?;
        let losses: Vec<f64> = observed.iter().zip(&spec.tasks).map(|(&s, t)| sim_loss(s, t)).collect();
        let past = past_snapshot(&loss_history, step, &cfg.scheduler).cloned();
        loss_history.push((step, losses.clone()));
        let signals = Signals {
            scores: Some(&relative),
            losses: past.as_ref().map(|p| (losses.as_slice(), p.as_slice())),
        };
        decision = decide(&cfg.scheduler, n, step, signals)?;
        let shares = decision.effort_shares();
        for i in 0..n {
            records.push(MetricRecord {
                step,
                task: i,
                raw_score: observed[i],
                relative_score: relative.values()[i],
                weight: decision.values[i],
                effective_lr: spec.tasks[i].learn_rate * shares[i],
                train_loss: losses[i],
            });
        }
    }
    Ok(records)
}

/// Latest loss snapshot taken at least `window` steps before `step`.
pub(crate) fn past_snapshot<'a>(
    history: &'a [(u64, Vec<f64>)],
    step: u64,
    cfg: &SchedulerConfig,
) -> Option<&'a Vec<f64>> {
    let SchedulerConfig::LossProgress(lp) = cfg else {
        return None;
    };
    history
        .iter()
        .rev()
        .find(|(s, _)| s + lp.window <= step)
        .map(|(_, l)| l)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationReport {
    pub detected: bool,
    /// Largest swing between consecutive turning points, per task.
    pub amplitudes: Vec<f64>,
    /// Turning points whose swing exceeded the threshold, per task.
    pub swings: Vec<usize>,
}

/// Turning points of `series` reached by moves of at least `threshold`.
fn turning_points(series: &[f64], threshold: f64) -> Vec<f64> {
    let mut pivots = Vec::new();
    let Some(&first) = series.first() else {
        return pivots;
    };
    let anchor = first;
    let mut extreme = first;
    let mut direction = 0i8;
    for &x in &series[1..] {
        match direction {
            0 => {
                if x - anchor > threshold {
                    direction = 1;
                    extreme = x;
                } else if anchor - x > threshold {
                    direction = -1;
                    extreme = x;
                }
            }
            1 => {
                if x > extreme {
                    extreme = x;
                } else if extreme - x > threshold {
                    pivots.push(extreme);
                    direction = -1;
                    extreme = x;
                }
            }
            _ => {
                if x < extreme {
                    extreme = x;
                } else if x - extreme > threshold {
                    pivots.push(extreme);
                    direction = 1;
                    extreme = x;
                }
            }
        }
    }
    pivots
}

/// Flags tasks whose effort share swings back and forth by more than
/// `amplitude_threshold` at least three times within the last `window`
/// validation events.
///
/// Shares are each record's weight divided by the sum of weights at that
/// step, so probabilities and multipliers are treated alike.
pub fn detect_oscillation(trajectory: &[MetricRecord], window: usize, amplitude_threshold: f64) -> Result<OscillationReport> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let n = trajectory.iter().map(|r| r.task).max().unwrap_or(0) + 1;
    let mut steps: Vec<u64> = trajectory.iter().map(|r| r.step).collect();
    steps.dedup();
    let mut shares = vec![Vec::with_capacity(steps.len()); n];
    for chunk in trajectory.chunk_by(|a, b| a.step == b.step) {
        let total: f64 = chunk.iter().map(|r| r.weight).sum();
        for r in chunk {
            shares[r.task].push(if total > 0.0 { r.weight / total } else { 0.0 });
        }
    }
    let mut amplitudes = Vec::with_capacity(n);
    let mut swings = Vec::with_capacity(n);
    for series in &shares {
        let tail = &series[series.len().saturating_sub(window)..];
        let all = turning_points(tail, 0.0);
        let amplitude = all.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        amplitudes.push(amplitude);
        swings.push(turning_points(tail, amplitude_threshold).len());
    }
    Ok(OscillationReport {
        detected: swings.iter().any(|&s| s >= 3),
        amplitudes,
        swings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedulers::{ConstantConfig, ExplicitConfig};

    fn task(ceiling: f64, eta: f64, phi: f64, s0: f64) -> TaskDynamics {
        TaskDynamics {
            ceiling,
            learn_rate: eta,
            forget_rate: phi,
            initial_score: s0,
            baseline: None,
        }
    }

    fn record(step: u64, task: usize, weight: f64) -> MetricRecord {
        MetricRecord {
            step,
            task,
            raw_score: 0.0,
            relative_score: 0.0,
            weight,
            effective_lr: 0.0,
            train_loss: 0.0,
        }
    }

    fn two_task_series(p0: impl Fn(usize) -> f64, len: usize) -> Vec<MetricRecord> {
        (0..len)
            .flat_map(|i| [record(i as u64 + 1, 0, p0(i)), record(i as u64 + 1, 1, 1.0 - p0(i))])
            .collect()
    }

    #[test]
    fn full_effort_converges_to_ceiling() {
        let spec = DynamicsSpec { tasks: vec![task(10.0, 0.1, 0.0, 0.0)] };
        let mut s = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..400 {
            s = step_dynamics(&s, &[1.0], &spec).unwrap();
            assert!(s[0] >= prev);
            prev = s[0];
        }
        assert!((s[0] - 10.0).abs() < 1e-6);
        let fixed = step_dynamics(&[10.0], &[1.0], &spec).unwrap();
        assert_eq!(fixed, vec![10.0]);
    }

    #[test]
    fn starved_task_decays() {
        let spec = DynamicsSpec {
            tasks: vec![task(20.0, 0.3, 0.1, 10.0), task(20.0, 0.3, 0.0, 0.0)],
        };
        let next = step_dynamics(&[10.0, 0.0], &[0.0, 1.0], &spec).unwrap();
        assert!((next[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn allocation_must_be_distribution() {
        let spec = DynamicsSpec { tasks: vec![task(1.0, 0.1, 0.0, 0.0); 2] };
        assert!(step_dynamics(&[0.0, 0.0], &[0.6, 0.6], &spec).is_err());
        assert!(step_dynamics(&[0.0], &[1.0], &spec).is_err());
    }

    #[test]
    fn symmetric_tasks_symmetric_trajectories() {
        let spec = DynamicsSpec { tasks: vec![task(30.0, 0.02, 0.01, 5.0); 2] };
        let cfg = SimConfig {
            total_steps: 2_000,
            validation_every: 50,
            scheduler: SchedulerConfig::Constant(ConstantConfig { probabilities: vec![0.5, 0.5] }),
            seed: 0,
            validation_noise: 0.0,
        };
        let records = run_sim(&spec, &cfg).unwrap();
        assert_eq!(records.len(), 40 * 2);
        for pair in records.chunks(2) {
            assert_eq!(pair[0].raw_score, pair[1].raw_score);
            assert_eq!(pair[0].weight, pair[1].weight);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = DynamicsSpec {
            tasks: vec![task(30.0, 0.02, 0.01, 5.0), task(20.0, 0.05, 0.02, 1.0)],
        };
        let cfg = SimConfig {
            total_steps: 1_000,
            validation_every: 10,
            scheduler: SchedulerConfig::Explicit(ExplicitConfig { alpha: 4.0, epsilon: 0.05 }),
            seed: 42,
            validation_noise: 0.5,
        };
        assert_eq!(run_sim(&spec, &cfg).unwrap(), run_sim(&spec, &cfg).unwrap());
    }

    #[test]
    fn detector_constant() {
        let r = detect_oscillation(&two_task_series(|_| 0.5, 30), 20, 0.3).unwrap();
        assert!(!r.detected);
        assert_eq!(r.amplitudes, vec![0.0, 0.0]);
    }

    #[test]
    fn detector_square_wave() {
        let r = detect_oscillation(&two_task_series(|i| if i % 2 == 0 { 0.9 } else { 0.1 }, 30), 20, 0.3).unwrap();
        assert!(r.detected);
        assert!((r.amplitudes[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn detector_ramp() {
        let r = detect_oscillation(&two_task_series(|i| 0.5 + 0.4 * i as f64 / 29.0, 30), 20, 0.3).unwrap();
        assert!(!r.detected);
    }

    #[test]
    fn detector_rejects_empty() {
        assert!(detect_oscillation(&[], 20, 0.3).is_err());
    }
}
