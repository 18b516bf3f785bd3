#![allow(dead_code)]

use mtsched::harness::RunConfig;
use serde_json::{json, Value};

/// A two-task config small enough to train in well under a second.
pub fn tiny_value(low_size: usize, high_size: usize) -> Value {
    let task = |name: &str, seed: u64, size: usize| {
        json!({
            "name": name,
            "data": {"teacher_seed": seed, "train_size": size, "val_size": 64, "noise_std": 0.1,
                     "family_seed": 3, "perturbation": 0.1},
            "baseline_steps": 300
        })
    };
    json!({
        "tasks": [task("low", 1, low_size), task("high", 2, high_size)],
        "model": {"input_dim": 6, "hidden_dim": 12, "output_dim": 2},
        "scheduler": {"kind": "uniform"},
        "lr_schedule": {"kind": "inverse_sqrt", "base": 0.2, "warmup_steps": 100},
        "total_steps": 400,
        "validation_every": 40,
        "checkpoint_every": 40,
        "checkpoints_to_average": 3,
        "batch_size": 16,
        "seed": 5
    })
}

pub fn tiny(scheduler: Value) -> RunConfig {
    let mut v = tiny_value(100, 4000);
    v["scheduler"] = scheduler;
    RunConfig::from_value(v).unwrap()
}
