use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{apply_override, RunConfig};
use super::train::{generate_data, run_baselines_with_data, run_multitask_with_data, RunResult};
use crate::error::{Error, Result};

fn default_max_points() -> usize {
    256
}

/// One swept parameter: a dotted config path and the values it takes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Column name in the summary.
    pub name: String,
    /// Dotted path into the run config; defaults to `name`.
    #[serde(default)]
    pub path: Option<String>,
    pub values: Vec<Value>,
}

impl SweepAxis {
    pub fn path(&self) -> &str {
        self.path.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub grid: Vec<SweepAxis>,
    /// Upper bound on the cartesian product size.
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

/// Outcome of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub values: Vec<Value>,
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub task_names: Vec<String>,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    /// Index of the point with the highest mean dev score across tasks.
    pub fn best(&self) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.outcome.as_ref().ok().map(|r| (i, r.mean_dev())))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Summary with one row per grid point: axis values, then dev and test
    /// score per task, the mean dev score, and a status column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for row in self.rows() {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = self.axes.clone();
        for t in &self.task_names {
            h.push(format!("{t}_dev"));
            h.push(format!("{t}_test"));
        }
        h.push("mean_dev".into());
        h.push("status".into());
        h
    }

    pub fn rows(&self) -> Vec<Vec<String>> {
        let best = self.best();
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut row: Vec<String> = p.values.iter().map(render_value).collect();
                match &p.outcome {
                    Ok(r) => {
                        for t in &r.tasks {
                            row.push(t.dev_score.to_string());
                            row.push(t.test_score.to_string());
                        }
                        row.push(r.mean_dev().to_string());
                        row.push(if Some(i) == best { "selected".into() } else { "ok".into() });
                    }
                    Err(msg) => {
                        row.extend(std::iter::repeat_n(String::new(), 2 * self.task_names.len() + 1));
                        row.push(format!("error: {msg}"));
                    }
                }
                row
            })
            .collect()
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_points(grid: &[SweepAxis]) -> Vec<Vec<Value>> {
    grid.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

/// Builds the run config for one grid point.
pub fn point_config(base: &RunConfig, grid: &[SweepAxis], values: &[Value]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(base)?;
    for (axis, v) in grid.iter().zip(values) {
        apply_override(&mut tree, axis.path(), v.clone())?;
    }
    let mut cfg = RunConfig::from_value(tree)?;
    if cfg.label.is_none() {
        let tag: Vec<String> = grid
            .iter()
            .zip(values)
            .map(|(a, v)| format!("{}={}", a.name, render_value(v)))
            .collect();
        cfg.label = Some(format!("{} [{}]", cfg.scheduler.label(), tag.join(", ")));
    }
    Ok(cfg)
}

/// Everything baselines depend on; grid points sharing it share baselines.
fn baseline_key(cfg: &RunConfig) -> String {
    let key = (
        &cfg.tasks,
        &cfg.model,
        &cfg.topology,
        &cfg.adam,
        &cfg.lr_schedule,
        cfg.validation_every,
        cfg.checkpoint_every,
        cfg.checkpoints_to_average,
        cfg.batch_size,
        cfg.seed,
    );
    serde_json::to_string(&key).expect("key serializes")
}

/// Runs every grid point (in parallel) and collects results in grid order.
///
/// Points whose config is invalid or whose run fails are recorded with the
/// error and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    if spec.grid.is_empty() || spec.grid.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Empty("sweep grid"));
    }
    let size: usize = spec.grid.iter().map(|a| a.values.len()).product();
    if size > spec.max_points {
        return Err(Error::InvalidConfig(format!(
            "sweep has {size} points, above the cap of {}",
            spec.max_points
        )));
    }
    let points = grid_points(&spec.grid);
    let configs: Vec<Result<RunConfig>> = points.iter().map(|p| point_config(&spec.base, &spec.grid, p)).collect();

    let mut keys: Vec<String> = configs
        .iter()
        .filter_map(|c| c.as_ref().ok())
        .filter(|c| c.baselines.is_none())
        .map(baseline_key)
        .collect();
    keys.sort();
    keys.dedup();
    let representative: HashMap<String, RunConfig> = configs
        .iter()
        .filter_map(|c| c.as_ref().ok())
        .map(|c| (baseline_key(c), c.clone()))
        .collect();
    let baselines: HashMap<String, std::result::Result<Vec<f64>, String>> = keys
        .par_iter()
        .map(|k| {
            let cfg = &representative[k];
            let b = generate_data(cfg)
                .and_then(|d| run_baselines_with_data(cfg, &d))
                .map(|bs| bs.iter().map(|b| b.score).collect())
                .map_err(|e| e.to_string());
            (k.clone(), b)
        })
        .collect();

    let outcomes: Vec<std::result::Result<RunResult, String>> = configs
        .into_par_iter()
        .map(|cfg| {
            let cfg = cfg.map_err(|e| e.to_string())?;
            let b = match &cfg.baselines {
                Some(b) => b.clone(),
                None => baselines[&baseline_key(&cfg)].clone()?,
            };
            let data = generate_data(&cfg).map_err(|e| e.to_string())?;
            run_multitask_with_data(&cfg, &b, &data).map_err(|e| e.to_string())
        })
        .collect();

    Ok(SweepTable {
        axes: spec.grid.iter().map(|a| a.name.clone()).collect(),
        task_names: spec.base.tasks.iter().map(|t| t.name.clone()).collect(),
        points: points
            .into_iter()
            .zip(outcomes)
            .map(|(values, outcome)| SweepPoint { values, outcome })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cartesian_order() {
        let grid = vec![
            SweepAxis { name: "a".into(), path: None, values: vec![json!(1), json!(2)] },
            SweepAxis { name: "b".into(), path: None, values: vec![json!("x"), json!("y"), json!("z")] },
        ];
        let pts = grid_points(&grid);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![json!(1), json!("x")]);
        assert_eq!(pts[1], vec![json!(1), json!("y")]);
        assert_eq!(pts[5], vec![json!(2), json!("z")]);
    }

    #[test]
    fn rendering() {
        assert_eq!(render_value(&json!([0.25, 0.75])), "[0.25,0.75]");
        assert_eq!(render_value(&json!("uniform")), "uniform");
        assert_eq!(render_value(&json!(0.5)), "0.5");
    }
}
