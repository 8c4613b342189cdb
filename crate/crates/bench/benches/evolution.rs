use agediff_bench::{example1_linear, initial};
use agediff_core::{simulate, simulate_semilinear, SemilinearDeath};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate_nodes");
    for n_x in [49, 199, 799] {
        let op = example1_linear(n_x, 201);
        let v0 = vec![1.0; op.n_x()];
        group.bench_with_input(BenchmarkId::from_parameter(n_x), &op, |b, op| {
            b.iter(|| {
                let mut v = v0.clone();
                op.propagate_nodes(&mut v, 0, 200);
                v
            })
        });
    }
    group.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let op = example1_linear(49, 201);
    let phi = initial(&op);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("linear/49x201/t1", |b| b.iter(|| simulate(&op, &phi, 1.0, 50).unwrap()));
    let death = SemilinearDeath::logistic(1.0);
    group.bench_function("logistic/49x201/t1", |b| {
        b.iter(|| simulate_semilinear(&op, &phi, 1.0, 50, &death).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_propagate, bench_simulate);
criterion_main!(benches);
