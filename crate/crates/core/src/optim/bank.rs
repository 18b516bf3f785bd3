use serde::{Deserialize, Serialize};

use super::adam::{scale_gradients, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::model::{Layout, ParamVector, SegmentRole};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulatorMode {
    /// One set of moments per segment, updated by every task.
    Shared,
    /// Each task owns its moments, including a private copy for the encoder.
    PerTask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    ScaleGradients,
    ScaleLearningRate,
}

/// How task weights reach the optimizer and whether tasks share Adam moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerTopology {
    pub accumulator_mode: AccumulatorMode,
    pub scaling_mode: ScalingMode,
}

impl Default for OptimizerTopology {
    fn default() -> Self {
        Self {
            accumulator_mode: AccumulatorMode::PerTask,
            scaling_mode: ScalingMode::ScaleLearningRate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SlotState {
    role: SegmentRole,
    /// `None` when shared by all tasks.
    owner: Option<usize>,
    state: AdamState,
}

/// Every Adam state a multi-task run needs, arranged per the topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerBank {
    topology: OptimizerTopology,
    n_tasks: usize,
    layout: Layout,
    slots: Vec<SlotState>,
}

/// Allocates optimizer states for `n_tasks` over `layout`.
///
/// Per-task mode gives each task its own encoder state plus the state of its
/// head; shared mode keeps one state per segment.
pub fn build_optimizers(topology: OptimizerTopology, n_tasks: usize, layout: &Layout) -> Result<OptimizerBank> {
    if n_tasks == 0 {
        return Err(Error::InvalidConfig("optimizer bank needs at least one task".into()));
    }
    let mut slots = Vec::new();
    for seg in layout.segments() {
        match (topology.accumulator_mode, seg.role) {
            (AccumulatorMode::PerTask, SegmentRole::Encoder) => {
                slots.extend((0..n_tasks).map(|k| SlotState {
                    role: seg.role,
                    owner: Some(k),
                    state: AdamState::new(seg.len),
                }));
            }
            (AccumulatorMode::PerTask, SegmentRole::Head(k)) => slots.push(SlotState {
                role: seg.role,
                owner: Some(k),
                state: AdamState::new(seg.len),
            }),
            (AccumulatorMode::Shared, role) => slots.push(SlotState {
                role,
                owner: None,
                state: AdamState::new(seg.len),
            }),
        }
    }
    Ok(OptimizerBank {
        topology,
        n_tasks,
        layout: layout.clone(),
        slots,
    })
}

impl OptimizerBank {
    pub fn topology(&self) -> OptimizerTopology {
        self.topology
    }

    pub fn state_count(&self) -> usize {
        self.slots.len()
    }

    /// Applies one update for `task` with schedule rate `lr` and task weight `factor`.
    ///
    /// The factor multiplies either the gradients or the learning rate,
    /// depending on the scaling mode. In shared mode every segment is
    /// stepped, so momentum carries into heads the task does not use.
    pub fn apply(
        &mut self,
        task: usize,
        params: &mut ParamVector,
        grads: &[f64],
        cfg: &AdamConfig,
        lr: f64,
        factor: f64,
    ) -> Result<()> {
        if task >= self.n_tasks {
            return Err(Error::InvalidConfig(format!("task {task} out of range (n = {})", self.n_tasks)));
        }
        if params.layout() != &self.layout {
            return Err(Error::LayoutMismatch);
        }
        if grads.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "bank gradients",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if !(factor > 0.0) {
            return Err(Error::InvalidConfig(format!("task weight must be > 0, got {factor}")));
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index, value });
        }
        let (grads, lr) = match self.topology.scaling_mode {
            ScalingMode::ScaleGradients => (scale_gradients(grads, factor), lr),
            ScalingMode::ScaleLearningRate => (grads.to_vec(), lr * factor),
        };
        let shared = self.topology.accumulator_mode == AccumulatorMode::Shared;
        for slot in &mut self.slots {
            let seg = match slot.role {
                SegmentRole::Encoder => self.layout.encoder(),
                SegmentRole::Head(k) => self.layout.head(k),
            }
            .copied()
            .ok_or(Error::LayoutMismatch)?;
            let selected = shared || (slot.owner == Some(task) && seg.is_active_for(task));
            if selected {
                slot.state.step(params.segment_mut(&seg), &grads[seg.range()], cfg, lr)?;
            }
        }
        Ok(())
    }

    /// The state that `task` uses for the segment with `role`.
    pub fn state_for(&self, task: usize, role: SegmentRole) -> Option<&AdamState> {
        self.slots
            .iter()
            .find(|s| s.role == role && (s.owner.is_none() || s.owner == Some(task)))
            .map(|s| &s.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(acc: AccumulatorMode) -> OptimizerTopology {
        OptimizerTopology {
            accumulator_mode: acc,
            scaling_mode: ScalingMode::ScaleLearningRate,
        }
    }

    #[test]
    fn state_counts() {
        let layout = Layout::shared_encoder(5, 2, 2);
        assert_eq!(build_optimizers(topo(AccumulatorMode::PerTask), 2, &layout).unwrap().state_count(), 4);
        assert_eq!(build_optimizers(topo(AccumulatorMode::Shared), 2, &layout).unwrap().state_count(), 3);
        let single = Layout::shared_encoder(5, 2, 1);
        assert_eq!(build_optimizers(topo(AccumulatorMode::PerTask), 1, &single).unwrap().state_count(), 2);
        assert!(build_optimizers(topo(AccumulatorMode::Shared), 0, &layout).is_err());
    }

    #[test]
    fn single_task_topologies_agree() {
        let layout = Layout::shared_encoder(3, 2, 1);
        let mut a = ParamVector::zeros(layout.clone());
        let mut b = ParamVector::zeros(layout.clone());
        let mut per_task = build_optimizers(topo(AccumulatorMode::PerTask), 1, &layout).unwrap();
        let mut shared = build_optimizers(topo(AccumulatorMode::Shared), 1, &layout).unwrap();
        let cfg = AdamConfig::default();
        for i in 0..20 {
            let g: Vec<f64> = (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect();
            per_task.apply(0, &mut a, &g, &cfg, 1e-2, 0.7).unwrap();
            shared.apply(0, &mut b, &g, &cfg, 1e-2, 0.7).unwrap();
        }
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn per_task_encoder_states_are_private() {
        let layout = Layout::shared_encoder(2, 1, 2);
        let mut p = ParamVector::zeros(layout.clone());
        let mut bank = build_optimizers(topo(AccumulatorMode::PerTask), 2, &layout).unwrap();
        bank.apply(0, &mut p, &[1.0, 1.0, 1.0, 0.0], &AdamConfig::default(), 1e-3, 1.0).unwrap();
        assert_eq!(bank.state_for(0, SegmentRole::Encoder).unwrap().steps(), 1);
        assert_eq!(bank.state_for(1, SegmentRole::Encoder).unwrap().steps(), 0);
        assert_eq!(bank.state_for(1, SegmentRole::Head(1)).unwrap().steps(), 0);
    }
}
