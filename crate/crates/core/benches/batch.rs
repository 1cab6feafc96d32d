use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use socsmo::harness::{run_batch_with, BatchConfig};
use socsmo::model::OcpCurves;
use socsmo::par::Execution;

fn batch(c: &mut Criterion) {
    let curves = OcpCurves::default();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for study in ["accuracy", "aging"] {
        let cfg = BatchConfig::builtin(study, 2024).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let id = BenchmarkId::new(format!("{exec:?}").to_lowercase(), study);
            group.bench_with_input(id, &cfg, |b, cfg| b.iter(|| run_batch_with(cfg, &curves, exec)));
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
