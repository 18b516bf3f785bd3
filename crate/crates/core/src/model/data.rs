use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::MlpSpec;
use crate::error::{Error, Result};

const STREAM_FAMILY: u64 = 1;
const STREAM_TEACHER: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_VAL: u64 = 4;
const STREAM_TEST: u64 = 5;

fn default_gain() -> f64 {
    1.0
}

/// One synthetic regression task: inputs are standard normal, targets come
/// from a random teacher network plus Gaussian noise.
///
/// Teachers built from the same `family_seed` share their encoder weights up
/// to a per-task perturbation of relative size `perturbation`, which is what
/// lets a shared encoder transfer between tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub teacher_seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    /// Held-out split used for the final report; defaults to `val_size`.
    #[serde(default)]
    pub test_size: Option<usize>,
    pub noise_std: f64,
    #[serde(default)]
    pub family_seed: u64,
    #[serde(default)]
    pub perturbation: f64,
    /// Scale of the teacher's encoder weights; larger is more nonlinear.
    #[serde(default = "default_gain")]
    pub teacher_gain: f64,
}

pub const MIN_VAL_SIZE: usize = 32;

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 {
            return Err(Error::InvalidConfig("train_size must be >= 1".into()));
        }
        if self.val_size < MIN_VAL_SIZE || self.test_size() < MIN_VAL_SIZE {
            return Err(Error::InvalidConfig(format!(
                "val_size and test_size must be >= {MIN_VAL_SIZE} (got {}, {})",
                self.val_size,
                self.test_size()
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.perturbation >= 0.0) || !(self.teacher_gain > 0.0) {
            return Err(Error::InvalidConfig(
                "noise_std and perturbation must be >= 0, teacher_gain > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn test_size(&self) -> usize {
        self.test_size.unwrap_or(self.val_size)
    }
}

/// A block of rows: inputs and targets stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub rows: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn input_row(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.input_dim..(r + 1) * self.input_dim]
    }

    pub fn target_row(&self, r: usize) -> &[f64] {
        &self.targets[r * self.output_dim..(r + 1) * self.output_dim]
    }

    /// Gathers the given rows into a batch for `task`.
    pub fn batch(&self, rows: &[usize], task: usize) -> super::Batch {
        let mut inputs = Vec::with_capacity(rows.len() * self.input_dim);
        let mut targets = Vec::with_capacity(rows.len() * self.output_dim);
        for &r in rows {
            inputs.extend_from_slice(self.input_row(r));
            targets.extend_from_slice(self.target_row(r));
        }
        super::Batch::new(inputs, targets, rows.len(), task)
    }

    /// The first `n` rows (or all of them).
    pub fn head_rows(&self, n: usize) -> Dataset {
        let n = n.min(self.rows);
        Dataset {
            inputs: self.inputs[..n * self.input_dim].to_vec(),
            targets: self.targets[..n * self.output_dim].to_vec(),
            rows: n,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            seed: self.seed,
        }
    }

    /// Writes the dataset as four little-endian u64 header words
    /// `(rows, input_dim, output_dim, seed)` followed by each row's inputs
    /// then targets as little-endian f64.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for word in [self.rows as u64, self.input_dim as u64, self.output_dim as u64, self.seed] {
            w.write_all(&word.to_le_bytes())?;
        }
        for r in 0..self.rows {
            for v in self.input_row(r).iter().chain(self.target_row(r)) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let malformed = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 32 {
            return Err(malformed(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        let (rows, input_dim, output_dim, seed) = (word(0) as usize, word(1) as usize, word(2) as usize, word(3));
        let expected = 32 + rows * (input_dim + output_dim) * 8;
        if bytes.len() != expected {
            return Err(malformed(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut inputs = Vec::with_capacity(rows * input_dim);
        let mut targets = Vec::with_capacity(rows * output_dim);
        let mut values = bytes[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for _ in 0..rows {
            inputs.extend(values.by_ref().take(input_dim));
            targets.extend(values.by_ref().take(output_dim));
        }
        Ok(Self {
            inputs,
            targets,
            rows,
            input_dim,
            output_dim,
            seed,
        })
    }
}

/// Train, validation ("dev") and test splits of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussians(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

/// Teacher network for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    dims: MlpSpec,
}

impl Teacher {
    pub fn new(spec: &SyntheticTaskSpec, dims: &MlpSpec) -> Self {
        let (d_in, d_h, d_out) = (dims.input_dim, dims.hidden_dim, dims.output_dim);
        let enc_std = spec.teacher_gain / (d_in as f64).sqrt();
        let mut family = rng_for(spec.family_seed, STREAM_FAMILY);
        let shared_w1 = gaussians(&mut family, d_h * d_in, enc_std);
        let shared_b1 = gaussians(&mut family, d_h, 0.5);
        let mut own = rng_for(spec.teacher_seed, STREAM_TEACHER);
        let w1 = shared_w1
            .iter()
            .zip(gaussians(&mut own, d_h * d_in, enc_std * spec.perturbation))
            .map(|(a, b)| a + b)
            .collect();
        let b1 = shared_b1
            .iter()
            .zip(gaussians(&mut own, d_h, 0.5 * spec.perturbation))
            .map(|(a, b)| a + b)
            .collect();
        let w2 = gaussians(&mut own, d_out * d_h, 1.0 / (d_h as f64).sqrt());
        let b2 = gaussians(&mut own, d_out, 0.1);
        Self {
            w1,
            b1,
            w2,
            b2,
            dims: *dims,
        }
    }

    pub fn predict(&self, x: &[f64], out: &mut [f64]) {
        let (d_in, d_h) = (self.dims.input_dim, self.dims.hidden_dim);
        let h: Vec<f64> = (0..d_h)
            .map(|j| {
                let z: f64 = self.w1[j * d_in..(j + 1) * d_in].iter().zip(x).map(|(a, b)| a * b).sum();
                (z + self.b1[j]).tanh()
            })
            .collect();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.w2[k * d_h..(k + 1) * d_h].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + self.b2[k];
        }
    }
}

fn draw_split(teacher: &Teacher, spec: &SyntheticTaskSpec, rows: usize, stream: u64) -> Dataset {
    let dims = teacher.dims;
    let mut rng = rng_for(spec.teacher_seed, stream);
    let inputs = gaussians(&mut rng, rows * dims.input_dim, 1.0);
    let mut targets = vec![0.0; rows * dims.output_dim];
    for r in 0..rows {
        let out = &mut targets[r * dims.output_dim..(r + 1) * dims.output_dim];
        teacher.predict(&inputs[r * dims.input_dim..(r + 1) * dims.input_dim], out);
        for t in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *t += spec.noise_std * z;
        }
    }
    Dataset {
        inputs,
        targets,
        rows,
        input_dim: dims.input_dim,
        output_dim: dims.output_dim,
        seed: spec.teacher_seed,
    }
}

/// Generates all three splits; a pure function of `(spec, dims)`.
pub fn generate_task(spec: &SyntheticTaskSpec, dims: &MlpSpec) -> Result<TaskData> {
    spec.validate()?;
    dims.validate()?;
    let teacher = Teacher::new(spec, dims);
    Ok(TaskData {
        train: draw_split(&teacher, spec, spec.train_size, STREAM_TRAIN),
        val: draw_split(&teacher, spec, spec.val_size, STREAM_VAL),
        test: draw_split(&teacher, spec, spec.test_size(), STREAM_TEST),
    })
}

/// Maps a validation MSE to a bounded, increasing score in `(0, 100]`.
pub fn score_from_loss(val_mse: f64) -> f64 {
    100.0 / (1.0 + val_mse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64, train: usize) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            teacher_seed: seed,
            train_size: train,
            val_size: 64,
            test_size: None,
            noise_std: 0.1,
            family_seed: 0,
            perturbation: 0.2,
            teacher_gain: 1.0,
        }
    }

    const DIMS: MlpSpec = MlpSpec { input_dim: 3, hidden_dim: 4, output_dim: 2 };

    #[test]
    fn deterministic() {
        let a = generate_task(&spec(5, 100), &DIMS).unwrap();
        let b = generate_task(&spec(5, 100), &DIMS).unwrap();
        assert_eq!(a, b);
        let c = generate_task(&spec(6, 100), &DIMS).unwrap();
        assert_ne!(a.train.inputs, c.train.inputs);
    }

    #[test]
    fn size_imbalance() {
        let small = generate_task(&spec(1, 1_000), &DIMS).unwrap();
        let large = generate_task(&spec(2, 40_000), &DIMS).unwrap();
        assert_eq!(large.train.rows / small.train.rows, 40);
        assert_eq!(small.val.rows, 64);
        assert_eq!(small.test.rows, 64);
    }

    #[test]
    fn splits_are_disjoint_draws() {
        let d = generate_task(&spec(3, 64), &DIMS).unwrap();
        assert_ne!(d.train.inputs, d.val.inputs);
        assert_ne!(d.val.inputs, d.test.inputs);
    }

    #[test]
    fn shared_family_differs_only_by_perturbation() {
        let mut a = spec(1, 10);
        let mut b = spec(2, 10);
        a.perturbation = 0.0;
        b.perturbation = 0.0;
        assert_eq!(Teacher::new(&a, &DIMS).w1, Teacher::new(&b, &DIMS).w1);
        b.perturbation = 0.3;
        assert_ne!(Teacher::new(&a, &DIMS).w1, Teacher::new(&b, &DIMS).w1);
    }

    #[test]
    fn val_size_floor() {
        let mut s = spec(1, 10);
        s.val_size = 31;
        assert!(generate_task(&s, &DIMS).is_err());
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_from_loss(0.0), 100.0);
        assert_eq!(score_from_loss(1.0), 50.0);
        assert_eq!(score_from_loss(3.0), 25.0);
        assert!(score_from_loss(0.5) > score_from_loss(0.6));
    }

    #[test]
    fn dump_and_load() {
        let d = generate_task(&spec(8, 50), &DIMS).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.bin");
        d.train.dump(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32 + 50 * 5 * 8);
        assert_eq!(Dataset::load(&path).unwrap(), d.train);
        std::fs::write(&path, [0u8; 40]).unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Format { .. })));
    }
}
