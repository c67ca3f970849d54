use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pmm_core::algorithm::InnerSolver;
use pmm_core::bounds::BoundSummary;
use pmm_core::{run_pmmsopt, solve_subproblem, AlgoConfig, InstanceSpec, SampleStream, StochasticProgram};

fn subproblem(c: &mut Criterion) {
    let mut group = c.benchmark_group("subproblem");
    for (name, spec) in [
        ("scalar_toy", InstanceSpec::ScalarToy { noise_amp: 0.5 }),
        (
            "affine_qp_5x3",
            InstanceSpec::AffineQp {
                n: 5,
                p: 3,
                seed: 8,
                noise_amp: 0.3,
            },
        ),
    ] {
        let inst = spec.build().unwrap();
        let xi = SampleStream::new(1, 0).draw(&inst, 0);
        let x = vec![0.3; inst.dim()];
        let lambda = vec![0.5; inst.num_constraints()];
        let solver = InnerSolver::default();
        group.bench_function(name, |b| {
            b.iter(|| solve_subproblem(&inst, black_box(&x), &lambda, &xi, 0.01, 100.0, &solver).unwrap())
        });
    }
    group.finish();
}

fn full_run(c: &mut Criterion) {
    let inst = InstanceSpec::ScalarToy { noise_amp: 0.5 }.build().unwrap();
    let mut group = c.benchmark_group("run_pmmsopt");
    group.sample_size(10);
    for horizon in [100usize, 1000] {
        let cfg = AlgoConfig::theory_schedule(horizon).with_seed(3, 0);
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &cfg, |b, cfg| {
            b.iter(|| run_pmmsopt(&inst, cfg).unwrap())
        });
    }
    group.finish();
}

fn bounds(c: &mut Criterion) {
    let inst = InstanceSpec::AffineQp {
        n: 5,
        p: 3,
        seed: 8,
        noise_amp: 0.3,
    }
    .build()
    .unwrap();
    c.bench_function("bound_summary", |b| {
        b.iter(|| BoundSummary::compute(inst.constants(), 3, black_box(10_000), 0.05).unwrap())
    });
}

criterion_group!(benches, subproblem, full_run, bounds);
criterion_main!(benches);
