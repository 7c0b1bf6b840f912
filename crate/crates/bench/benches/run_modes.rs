use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use actreplay_cli::config::BenchConfig;
use actreplay_cli::harness::{run_recorded, run_replay, run_untraced};
use actreplay_core::external::{RealEnv, TripwireEnv};

/// Untraced vs traced vs replayed wall time on a single worker thread, for
/// the two message-intensive workloads.
fn run_modes(c: &mut Criterion) {
    let scratch = tempfile::tempdir().unwrap();
    let configs = [
        BenchConfig::PingPong { rounds: 500 },
        BenchConfig::Counting { messages: 20_000 },
    ];
    for config in configs {
        let trace = scratch.path().join(format!("{}.trace", config.name()));
        let data = scratch.path().join(format!("{}.data", config.name()));
        let mut group = c.benchmark_group(config.name());
        group.sample_size(30);

        group.bench_function("untraced", |b| {
            b.iter(|| run_untraced(&config, 1, Arc::new(RealEnv::new())).unwrap())
        });
        group.bench_function("traced", |b| {
            b.iter(|| {
                run_recorded(&config, 1, None, &trace, &data, Arc::new(RealEnv::new())).unwrap()
            })
        });
        // Replay re-executes the same recording every iteration.
        run_recorded(&config, 1, None, &trace, &data, Arc::new(RealEnv::new())).unwrap();
        group.bench_function("replay", |b| {
            b.iter(|| run_replay(&trace, &data, 1, Arc::new(TripwireEnv)).unwrap())
        });
        group.finish();
    }
}

criterion_group!(benches, run_modes);
criterion_main!(benches);
