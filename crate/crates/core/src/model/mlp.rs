use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{Layout, ParamVector, Segment};
use crate::error::{Error, Result};

/// Shape of the shared-encoder network: `input -> tanh(hidden) -> output` per task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig(format!("mlp dims must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// Encoder weights (hidden x input, row-major) followed by hidden biases.
    pub fn encoder_len(&self) -> usize {
        self.hidden_dim * self.input_dim + self.hidden_dim
    }

    /// Head weights (output x hidden, row-major) followed by output biases.
    pub fn head_len(&self) -> usize {
        self.output_dim * self.hidden_dim + self.output_dim
    }

    pub fn layout(&self, n_tasks: usize) -> Layout {
        Layout::shared_encoder(self.encoder_len(), self.head_len(), n_tasks)
    }

    /// Gaussian weights scaled by fan-in, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, n_tasks: usize, rng: &mut R) -> ParamVector {
        let mut params = ParamVector::zeros(self.layout(n_tasks));
        let enc_std = (1.0 / self.input_dim as f64).sqrt();
        let head_std = (1.0 / self.hidden_dim as f64).sqrt();
        let enc_weights = self.hidden_dim * self.input_dim;
        let head_weights = self.output_dim * self.hidden_dim;
        let segments = params.layout().segments().to_vec();
        for seg in &segments {
            let (std, n_weights) = match seg.role {
                super::SegmentRole::Encoder => (enc_std, enc_weights),
                super::SegmentRole::Head(_) => (head_std, head_weights),
            };
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut params.segment_mut(seg)[..n_weights] {
                *w = normal.sample(rng);
            }
        }
        params
    }
}

/// A mini-batch for one task, rows stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub rows: usize,
    pub task_id: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, rows: usize, task_id: usize) -> Self {
        Self {
            inputs,
            targets,
            rows,
            task_id,
        }
    }
}

/// Hidden activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
}

struct Views<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    encoder: Segment,
    head: Segment,
}

fn views<'a>(params: &'a ParamVector, spec: &MlpSpec, task: usize) -> Result<Views<'a>> {
    let layout = params.layout();
    let encoder = *layout
        .encoder()
        .ok_or_else(|| Error::Dimension("layout has no encoder".into()))?;
    let head = *layout
        .head(task)
        .ok_or_else(|| Error::Dimension(format!("layout has no head for task {task}")))?;
    if encoder.len != spec.encoder_len() || head.len != spec.head_len() {
        return Err(Error::Dimension(format!(
            "layout segment sizes ({}, {}) do not match mlp {spec:?}",
            encoder.len, head.len
        )));
    }
    let enc = params.segment(&encoder);
    let hd = params.segment(&head);
    let (w1, b1) = enc.split_at(spec.hidden_dim * spec.input_dim);
    let (w2, b2) = hd.split_at(spec.output_dim * spec.hidden_dim);
    Ok(Views {
        w1,
        b1,
        w2,
        b2,
        encoder,
        head,
    })
}

fn check_batch(spec: &MlpSpec, batch: &Batch) -> Result<()> {
    if batch.inputs.len() != batch.rows * spec.input_dim {
        return Err(Error::Dimension(format!(
            "batch inputs hold {} values, expected {} rows x {}",
            batch.inputs.len(),
            batch.rows,
            spec.input_dim
        )));
    }
    if batch.targets.len() != batch.rows * spec.output_dim {
        return Err(Error::Dimension(format!(
            "batch targets hold {} values, expected {} rows x {}",
            batch.targets.len(),
            batch.rows,
            spec.output_dim
        )));
    }
    Ok(())
}

fn forward_views(v: &Views<'_>, spec: &MlpSpec, inputs: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
    let (d_in, d_h, d_out) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
    let mut hidden = vec![0.0; rows * d_h];
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        let x = &inputs[r * d_in..(r + 1) * d_in];
        let h = &mut hidden[r * d_h..(r + 1) * d_h];
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &v.w1[j * d_in..(j + 1) * d_in];
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + v.b1[j];
            *hj = z.tanh();
        }
        let y = &mut out[r * d_out..(r + 1) * d_out];
        for (k, yk) in y.iter_mut().enumerate() {
            let w = &v.w2[k * d_h..(k + 1) * d_h];
            *yk = w.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() + v.b2[k];
        }
    }
    (out, hidden)
}

/// Predictions (rows x output) for `batch` through the encoder and the
/// batch task's head.
pub fn forward(params: &ParamVector, spec: &MlpSpec, batch: &Batch) -> Result<(Vec<f64>, ForwardCache)> {
    check_batch(spec, batch)?;
    let v = views(params, spec, batch.task_id)?;
    let (out, hidden) = forward_views(&v, spec, &batch.inputs, batch.rows);
    Ok((out, ForwardCache { hidden }))
}

/// Mean squared error over every output entry, and its exact gradient.
///
/// The gradient is laid out like `params` and is zero outside the encoder
/// and the batch task's head.
pub fn loss_and_grad(params: &ParamVector, spec: &MlpSpec, batch: &Batch) -> Result<(f64, Vec<f64>)> {
    check_batch(spec, batch)?;
    let v = views(params, spec, batch.task_id)?;
    let (d_in, d_h, d_out) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
    let (out, hidden) = forward_views(&v, spec, &batch.inputs, batch.rows);
    let count = (batch.rows * d_out).max(1) as f64;

    let mut grads = vec![0.0; params.len()];
    let (enc_g, rest) = grads[v.encoder.offset..].split_at_mut(v.encoder.len);
    let head_start = v.head.offset - v.encoder.offset - v.encoder.len;
    let head_g = &mut rest[head_start..head_start + v.head.len];
    let (gw1, gb1) = enc_g.split_at_mut(d_h * d_in);
    let (gw2, gb2) = head_g.split_at_mut(d_out * d_h);

    let mut loss = 0.0;
    let mut dy = vec![0.0; d_out];
    let mut dz = vec![0.0; d_h];
    for r in 0..batch.rows {
        let x = &batch.inputs[r * d_in..(r + 1) * d_in];
        let h = &hidden[r * d_h..(r + 1) * d_h];
        for k in 0..d_out {
            let e = out[r * d_out + k] - batch.targets[r * d_out + k];
            loss += e * e;
            dy[k] = 2.0 * e / count;
        }
        dz.iter_mut().for_each(|z| *z = 0.0);
        for k in 0..d_out {
            let row = &v.w2[k * d_h..(k + 1) * d_h];
            let grow = &mut gw2[k * d_h..(k + 1) * d_h];
            for j in 0..d_h {
                grow[j] += dy[k] * h[j];
                dz[j] += dy[k] * row[j];
            }
            gb2[k] += dy[k];
        }
        for j in 0..d_h {
            let d = dz[j] * (1.0 - h[j] * h[j]);
            let grow = &mut gw1[j * d_in..(j + 1) * d_in];
            for (g, xi) in grow.iter_mut().zip(x) {
                *g += d * xi;
            }
            gb1[j] += d;
        }
    }
    Ok((loss / count, grads))
}

/// Mean squared error of `task`'s head over a whole data split.
pub fn mean_squared_error(
    params: &ParamVector,
    spec: &MlpSpec,
    task: usize,
    inputs: &[f64],
    targets: &[f64],
    rows: usize,
) -> Result<f64> {
    let batch = Batch {
        inputs: Vec::new(),
        targets: Vec::new(),
        rows: 0,
        task_id: task,
    };
    check_batch(spec, &batch)?;
    if inputs.len() != rows * spec.input_dim || targets.len() != rows * spec.output_dim {
        return Err(Error::Dimension("split size does not match mlp dims".into()));
    }
    let v = views(params, spec, task)?;
    let (out, _) = forward_views(&v, spec, inputs, rows);
    let sse: f64 = out.iter().zip(targets).map(|(y, t)| (y - t) * (y - t)).sum();
    Ok(sse / (rows * spec.output_dim).max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64) -> (MlpSpec, ParamVector, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec {
            input_dim: rng.random_range(1..5),
            hidden_dim: rng.random_range(1..6),
            output_dim: rng.random_range(1..4),
        };
        let n_tasks = rng.random_range(1..4);
        let mut params = spec.init_params(n_tasks, &mut rng);
        for p in params.values_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let rows = rng.random_range(1..7);
        let inputs = (0..rows * spec.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets = (0..rows * spec.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let task = rng.random_range(0..n_tasks);
        (spec, params, Batch::new(inputs, targets, rows, task))
    }

    #[test]
    fn zero_weights_predict_zero() {
        let spec = MlpSpec { input_dim: 3, hidden_dim: 4, output_dim: 2 };
        let params = ParamVector::zeros(spec.layout(2));
        let batch = Batch::new(vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5], vec![0.0; 4], 2, 1);
        let (y, _) = forward(&params, &spec, &batch).unwrap();
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn scalar_network_by_hand() {
        let spec = MlpSpec { input_dim: 1, hidden_dim: 1, output_dim: 1 };
        // encoder: w = 1, b = 0; head: w = 1, b = 0
        let params = ParamVector::from_values(vec![1.0, 0.0, 1.0, 0.0], spec.layout(1)).unwrap();
        for x in [-1.5, 0.0, 0.3, 2.0] {
            let (y, _) = forward(&params, &spec, &Batch::new(vec![x], vec![0.0], 1, 0)).unwrap();
            assert!((y[0] - f64::tanh(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_rows_identical_predictions() {
        let (spec, params, _) = random_case(3);
        let row: Vec<f64> = (0..spec.input_dim).map(|i| i as f64 * 0.3 - 0.2).collect();
        let inputs = row.repeat(5);
        let (y, _) = forward(&params, &spec, &Batch::new(inputs, vec![0.0; 5 * spec.output_dim], 5, 0)).unwrap();
        for r in 1..5 {
            assert_eq!(y[..spec.output_dim], y[r * spec.output_dim..(r + 1) * spec.output_dim]);
        }
    }

    #[test]
    fn perfect_fit_zero_loss_and_gradient() {
        let (spec, params, batch) = random_case(9);
        let (y, _) = forward(&params, &spec, &batch).unwrap();
        let fitted = Batch::new(batch.inputs.clone(), y, batch.rows, batch.task_id);
        let (loss, grads) = loss_and_grad(&params, &spec, &fitted).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_support() {
        for seed in 0..20 {
            let (spec, params, batch) = random_case(seed);
            let (_, grads) = loss_and_grad(&params, &spec, &batch).unwrap();
            for seg in params.layout().segments() {
                if !seg.is_active_for(batch.task_id) {
                    assert!(grads[seg.range()].iter().all(|g| *g == 0.0));
                }
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let spec = MlpSpec { input_dim: 2, hidden_dim: 2, output_dim: 1 };
        let params = ParamVector::zeros(spec.layout(1));
        assert!(forward(&params, &spec, &Batch::new(vec![0.0; 3], vec![0.0], 1, 0)).is_err());
        assert!(forward(&params, &spec, &Batch::new(vec![0.0; 2], vec![0.0], 1, 1)).is_err());
        let other = MlpSpec { hidden_dim: 3, ..spec };
        assert!(forward(&params, &other, &Batch::new(vec![0.0; 2], vec![0.0], 1, 0)).is_err());
    }

    #[test]
    fn split_mse_matches_batch_loss() {
        let (spec, params, batch) = random_case(5);
        let (loss, _) = loss_and_grad(&params, &spec, &batch).unwrap();
        let mse = mean_squared_error(&params, &spec, batch.task_id, &batch.inputs, &batch.targets, batch.rows).unwrap();
        assert!((loss - mse).abs() < 1e-15);
    }
}
