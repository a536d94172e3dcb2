use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use floorfield::scenario::preset_at;
use floorfield::sweep::{run_sweep, Repetitions, SweepOptions, SweepSpec};

fn small_sweep() -> SweepSpec {
    let template = preset_at("corridor_B", 0.5).unwrap();
    let mut spec = SweepSpec::new(template, vec![0.5, 1.5, 2.5], Repetitions::Fixed(4), 1);
    spec.steps = 300;
    spec
}

fn sweep(c: &mut Criterion) {
    let spec = small_sweep();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for parallel in [false, true] {
        let name = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::new(name, "B x3 x4"), &parallel, |b, &parallel| {
            b.iter(|| run_sweep(&spec, &SweepOptions { parallel, ..Default::default() }).unwrap())
        });
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for density in [0.5, 2.5] {
        let scenario = preset_at("corridor_A", density).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(density), &scenario, |b, s| {
            let mut sim = s.build(1).unwrap();
            b.iter(|| sim.step().unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, step);
criterion_main!(benches);
