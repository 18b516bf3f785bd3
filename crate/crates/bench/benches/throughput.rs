use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mtsched::model::{loss_and_grad, Batch};
use mtsched::optim::adam_step;
use mtsched::schedulers::{explicit_probabilities, explicit_weights, implicit_weights};
use mtsched::simdyn::{run_sim, DynamicsSpec, SimConfig, TaskDynamics};
use mtsched::{AdamConfig, AdamState, ExplicitConfig, ImplicitConfig, MlpSpec, RelativeScores, SchedulerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schedulers(c: &mut Criterion) {
    let scores = RelativeScores::new(vec![0.91, 0.97, 1.02, 0.85, 0.99, 0.93, 1.0, 0.88]).unwrap();
    let explicit = ExplicitConfig {
        alpha: 16.0,
        epsilon: 0.05,
    };
    let implicit = ImplicitConfig {
        alpha: 16.0,
        beta: 0.1,
        gamma: 0.5,
    };
    c.bench_function("explicit_probabilities/8", |b| {
        b.iter(|| explicit_probabilities(&explicit_weights(black_box(&scores), &explicit)).unwrap())
    });
    c.bench_function("implicit_weights/8", |b| {
        b.iter(|| implicit_weights(black_box(&scores), &implicit, 0))
    });
}

fn optimizer(c: &mut Criterion) {
    let n = 1 << 14;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let grads: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cfg = AdamConfig::default();
    c.bench_function("adam_step/16k", |b| {
        b.iter_batched_ref(
            || (AdamState::new(n), vec![0.0; n]),
            |(state, params)| adam_step(state, params, black_box(&grads), &cfg, 1.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn model(c: &mut Criterion) {
    let spec = MlpSpec {
        input_dim: 16,
        hidden_dim: 32,
        output_dim: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = spec.init_params(2, &mut rng);
    let rows = 32;
    let batch = Batch::new(
        (0..rows * 16).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..rows * 4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        rows,
        1,
    );
    c.bench_function("loss_and_grad/16x32x4/batch32", |b| {
        b.iter(|| loss_and_grad(black_box(&params), &spec, &batch).unwrap())
    });
}

fn simulator(c: &mut Criterion) {
    let task = TaskDynamics {
        ceiling: 1.0,
        learn_rate: 0.2,
        forget_rate: 0.05,
        initial_score: 0.5,
        baseline: None,
    };
    let spec = DynamicsSpec { tasks: vec![task; 4] };
    let cfg = SimConfig {
        total_steps: 10_000,
        validation_every: 50,
        scheduler: SchedulerConfig::Explicit(ExplicitConfig {
            alpha: 16.0,
            epsilon: 0.01,
        }),
        seed: 0,
        validation_noise: 0.01,
    };
    c.bench_function("run_sim/4 tasks/10k steps", |b| b.iter(|| run_sim(black_box(&spec), &cfg).unwrap()));
}

criterion_group!(benches, schedulers, optimizer, model, simulator);
criterion_main!(benches);
