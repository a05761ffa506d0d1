//! End-to-end experiment throughput across the whole harness: generation,
//! per-slot auctions, queue updates, and dropout bookkeeping.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lepa_core::{run_experiment, Preset, ScenarioConfig};

fn experiment_horizon(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for horizon in [50u32, 100] {
        let mut config = ScenarioConfig::preset(Preset::I);
        config.horizon = horizon;
        group.bench_with_input(
            BenchmarkId::from_parameter(horizon),
            &config,
            |b, config| {
                b.iter(|| run_experiment(std::hint::black_box(config)).unwrap());
            },
        );
    }
    group.finish();
}

criterion_group!(benches, experiment_horizon);
criterion_main!(benches);
