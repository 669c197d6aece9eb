use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ocm_core::detector::{DetectionScheme, DetectorArray};
use ocm_core::replication::{derive_spec, paper_scenarios, ExperimentConfig, OCM_PNR_COMPOSITE};
use ocm_core::simulate::{simulate_run, Execution};
use ocm_core::state::NoonStateSpec;

const EVENTS: u64 = 200_000;

fn executions() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { workers: None }),
    ]
}

fn pixel_array(c: &mut Criterion) {
    let spec = NoonStateSpec::new(2, 20.0, 1.0).unwrap();
    let array = DetectorArray::centered(0.02, 600).unwrap();
    let mut group = c.benchmark_group("ocm_pnr_array");
    group.throughput(Throughput::Elements(EVENTS));
    group.sample_size(10);
    for (name, exec) in executions() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_run(&spec, &DetectionScheme::OcmPnr, &array, EVENTS, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn fiber_pair_scan(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let spec = derive_spec(&cfg).unwrap();
    let grid = cfg.scan_grid().unwrap();
    let scenario = paper_scenarios(&cfg).into_iter().find(|s| s.name == OCM_PNR_COMPOSITE).unwrap();
    let mut group = c.benchmark_group("fiber_pair_scan");
    group.throughput(Throughput::Elements(EVENTS));
    group.sample_size(10);
    for (name, exec) in executions() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_run(&spec, &scenario.scheme, &grid, EVENTS, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pixel_array, fiber_pair_scan);
criterion_main!(benches);
