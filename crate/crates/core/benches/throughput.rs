//! Sequential vs data-parallel execution of the two hot paths: the per-lane
//! enqueue lookahead and the k-sweep.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmal_core::harness::{generate_synthetic, k_sweep, replay, SyntheticSpec};
use mmal_core::{ControllerConfig, Exec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn lookahead(c: &mut Criterion) {
    let (s, events) = generate_synthetic(&SyntheticSpec {
        n_cars: 300,
        ..SyntheticSpec::default()
    });
    let cat = s.compile().unwrap();
    let mut group = c.benchmark_group("replay_300_cars");
    group.sample_size(10);
    for (name, exec) in MODES {
        let config = ControllerConfig {
            exec,
            ..ControllerConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &config, |b, &config| {
            b.iter(|| replay(&events, Arc::clone(&cat), s.config.buffer, config).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let (s, events) = generate_synthetic(&SyntheticSpec {
        n_cars: 200,
        ..SyntheticSpec::default()
    });
    let cat = s.compile().unwrap();
    let ks: Vec<usize> = (0..=5).collect();
    let mut group = c.benchmark_group("k_sweep_200_cars");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| k_sweep(&events, &s, &cat, &ks, &s.config.paintshop, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lookahead, sweep);
criterion_main!(benches);
