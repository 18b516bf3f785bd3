use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{MlpSpec, SyntheticTaskSpec};
use crate::optim::{AccumulatorMode, AdamConfig, LrSchedule, OptimizerTopology, ScalingMode};
use crate::schedulers::SchedulerConfig;
use crate::task::DecisionKind;

/// One task of a run: its data plus task-specific training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub data: SyntheticTaskSpec,
    /// L2 penalty applied to the parameters this task touches.
    #[serde(default)]
    pub l2: f64,
    /// Step budget of the single-task baseline; defaults to the run's `total_steps`.
    #[serde(default)]
    pub baseline_steps: Option<u64>,
}

/// How tasks are chosen at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visitation {
    /// Draw a task from the current sampling probabilities.
    Sampled,
    /// Visit tasks in a fixed rotation, scaling each update by its weight.
    RoundRobin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<TaskConfig>,
    pub model: MlpSpec,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub topology: OptimizerTopology,
    /// Moment decays and epsilon. The learning rate comes from `lr_schedule`.
    #[serde(default)]
    pub adam: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub total_steps: u64,
    pub validation_every: u64,
    pub checkpoint_every: u64,
    pub checkpoints_to_average: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Defaults to sampled for probability schedulers, round robin for weight schedulers.
    #[serde(default)]
    pub visitation: Option<Visitation>,
    /// Single-task baseline scores, one per task. Computed when absent.
    #[serde(default)]
    pub baselines: Option<Vec<f64>>,
    /// Permits shared accumulators combined with learning-rate scaling.
    #[serde(default)]
    pub allow_shared_lr_scaling: bool,
    /// Method name used in reports; defaults to the scheduler's label.
    #[serde(default)]
    pub label: Option<String>,
}

impl RunConfig {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.scheduler.label())
    }

    pub fn visitation(&self) -> Visitation {
        self.visitation.unwrap_or(match self.scheduler.decision_kind() {
            DecisionKind::SamplingProbabilities => Visitation::Sampled,
            DecisionKind::WeightMultipliers => Visitation::RoundRobin,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Empty("run tasks"));
        }
        for t in &self.tasks {
            t.data.validate()?;
            if !(t.l2 >= 0.0) {
                return Err(Error::InvalidConfig(format!("task {} has negative l2", t.name)));
            }
            if t.baseline_steps == Some(0) {
                return Err(Error::InvalidConfig(format!("task {} has a zero baseline budget", t.name)));
            }
        }
        self.model.validate()?;
        self.scheduler.validate(self.n_tasks())?;
        self.adam.validate()?;
        self.lr_schedule.validate()?;
        let positive = [
            ("total_steps", self.total_steps),
            ("validation_every", self.validation_every),
            ("checkpoint_every", self.checkpoint_every),
            ("checkpoints_to_average", self.checkpoints_to_average as u64),
            ("batch_size", self.batch_size as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.checkpoint_every % self.validation_every != 0 && self.validation_every % self.checkpoint_every != 0 {
            return Err(Error::InvalidConfig(format!(
                "checkpoint_every ({}) and validation_every ({}) must divide one another",
                self.checkpoint_every, self.validation_every
            )));
        }
        if self.visitation() == Visitation::RoundRobin
            && !matches!(self.scheduler.decision_kind(), DecisionKind::WeightMultipliers)
            && self.scheduler != SchedulerConfig::Uniform
        {
            return Err(Error::InvalidConfig(
                "round-robin visitation needs a weight scheduler or the uniform scheduler".into(),
            ));
        }
        if self.visitation() == Visitation::Sampled && self.scheduler.decision_kind() == DecisionKind::WeightMultipliers {
            return Err(Error::InvalidConfig("weight schedulers need round-robin visitation".into()));
        }
        if let Some(b) = &self.baselines {
            if b.len() != self.n_tasks() {
                return Err(Error::LengthMismatch {
                    what: "baselines",
                    expected: self.n_tasks(),
                    actual: b.len(),
                });
            }
            if b.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidConfig(format!("baselines must be positive: {b:?}")));
            }
        }
        if self.topology.accumulator_mode == AccumulatorMode::Shared
            && self.topology.scaling_mode == ScalingMode::ScaleLearningRate
            && !self.allow_shared_lr_scaling
        {
            return Err(Error::InvalidConfig(
                "shared accumulators with learning-rate scaling blur tasks together; \
                 set allow_shared_lr_scaling to run it anyway"
                    .into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `key=value`; the value is read as JSON, or as a string if that fails.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{text}` is not key=value")))?;
    if key.is_empty() {
        return Err(Error::InvalidConfig(format!("override `{text}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets the value at a dotted path. Numeric segments index arrays; missing
/// object keys are created so that the typed parse can reject unknown ones.
pub fn apply_override(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("`{part}` in `{path}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::InvalidConfig(format!("`{path}` descends into a scalar at `{part}`")));
            }
        };
    }
    Ok(())
}

/// Reads a JSON file and applies `key=value` overrides in order.
pub fn load_json(path: &Path, overrides: &[String]) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text)?;
    for o in overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut value, &k, v)?;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut v = json!({"a": {"b": 1}, "xs": [1, 2, {"c": 3}]});
        apply_override(&mut v, "a.b", json!(5)).unwrap();
        apply_override(&mut v, "xs.2.c", json!("s")).unwrap();
        apply_override(&mut v, "xs.0", json!([0.5, 0.5])).unwrap();
        assert_eq!(v, json!({"a": {"b": 5}, "xs": [[0.5, 0.5], 2, {"c": "s"}]}));
        assert!(apply_override(&mut v, "xs.9", json!(1)).is_err());
        assert!(apply_override(&mut v, "a.b.c", json!(1)).is_err());
    }

    #[test]
    fn override_values_parse_as_json() {
        assert_eq!(parse_override("seed=3").unwrap(), ("seed".into(), json!(3)));
        assert_eq!(parse_override("label=fast").unwrap(), ("label".into(), json!("fast")));
        assert_eq!(parse_override("x.y=[1,2]").unwrap().1, json!([1, 2]));
        assert!(parse_override("novalue").is_err());
    }
}
