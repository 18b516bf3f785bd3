use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{MlpSpec, ParamVector};

/// A parameter snapshot taken during training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamVector,
}

/// Keeps the most recent `capacity` checkpoints.
#[derive(Clone, Debug)]
pub struct CheckpointRing {
    capacity: usize,
    items: VecDeque<Checkpoint>,
}

impl CheckpointRing {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, checkpoint: Checkpoint) -> Result<()> {
        if let Some(last) = self.items.back() {
            if checkpoint.step <= last.step {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint step {} does not follow {}",
                    checkpoint.step, last.step
                )));
            }
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(checkpoint);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.items.back().map(|c| c.step)
    }

    pub fn average(&self) -> Result<ParamVector> {
        let items: Vec<_> = self.items.iter().cloned().collect();
        average_checkpoints(&items)
    }
}

/// Element-wise mean of the snapshots' parameters.
pub fn average_checkpoints(checkpoints: &[Checkpoint]) -> Result<ParamVector> {
    let first = checkpoints.first().ok_or(Error::Empty("checkpoints"))?;
    let layout = first.params.layout();
    if checkpoints.iter().any(|c| c.params.layout() != layout) {
        return Err(Error::LayoutMismatch);
    }
    if checkpoints.len() == 1 {
        return Ok(first.params.clone());
    }
    let mut sum = vec![0.0; first.params.len()];
    for c in checkpoints {
        sum.iter_mut().zip(c.params.values()).for_each(|(s, v)| *s += v);
    }
    let k = checkpoints.len() as f64;
    sum.iter_mut().for_each(|s| *s /= k);
    ParamVector::from_values(sum, layout.clone())
}

/// Writes parameters as four little-endian u64 header words
/// `(values, input_dim, hidden_dim, output_dim)` followed by the values as
/// little-endian f64, plus a `<path>.txt` sidecar with the step and config hash.
pub fn save_checkpoint(path: &Path, spec: &MlpSpec, checkpoint: &Checkpoint, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = [
        checkpoint.params.len() as u64,
        spec.input_dim as u64,
        spec.hidden_dim as u64,
        spec.output_dim as u64,
    ];
    for word in header {
        w.write_all(&word.to_le_bytes())?;
    }
    for v in checkpoint.params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = sidecar_path(path);
    std::fs::write(
        sidecar,
        format!("step={}\nconfig_hash={config_hash}\n", checkpoint.step),
    )?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".txt");
    name.into()
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(MlpSpec, Checkpoint, String)> {
    let malformed = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 {
        return Err(malformed("truncated header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes")) as usize;
    let spec = MlpSpec {
        input_dim: word(1),
        hidden_dim: word(2),
        output_dim: word(3),
    };
    let n_values = word(0);
    if bytes.len() != 32 + n_values * 8 {
        return Err(malformed(format!("expected {} value bytes", n_values * 8)));
    }
    let head = spec.head_len();
    let enc = spec.encoder_len();
    if head == 0 || n_values < enc || (n_values - enc) % head != 0 {
        return Err(malformed(format!("{n_values} values do not fit {spec:?}")));
    }
    let values = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = ParamVector::from_values(values, spec.layout((n_values - enc) / head))?;

    let sidecar = std::fs::read_to_string(sidecar_path(path))?;
    let mut step = None;
    let mut hash = None;
    for line in sidecar.lines() {
        match line.split_once('=') {
            Some(("step", v)) => step = v.parse().ok(),
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            _ => {}
        }
    }
    let step = step.ok_or_else(|| malformed("sidecar lacks a step".into()))?;
    let hash = hash.ok_or_else(|| malformed("sidecar lacks a config hash".into()))?;
    Ok((spec, Checkpoint { step, params }, hash))
}
