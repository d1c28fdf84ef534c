use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use secalloc_bench::{bid_duals, fixture, SIZES};
use secalloc_core::{
    assign_subcarrier, secrecy_rate_upper_bound, solve_average, solve_fsa, solve_suboptimal,
    BoundOptions, FsaScheme, SolverOptions,
};

fn bids(c: &mut Criterion) {
    let (cfg, ens) = fixture(0.5, 1);
    let real = &ens.realizations()[0];
    let duals = bid_duals();
    c.bench_function("assign_64_subcarriers", |b| {
        b.iter(|| {
            (0..64)
                .map(|s| {
                    assign_subcarrier(&real.column(s), &duals, &cfg, 0.1)
                        .unwrap()
                        .power
                })
                .sum::<f64>()
        })
    });
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solvers");
    g.sample_size(10);
    for m in SIZES {
        let (cfg, ens) = fixture(1.0, m);
        g.bench_with_input(BenchmarkId::new("optimal", m), &m, |b, _| {
            b.iter(|| solve_average(&ens, &cfg, &SolverOptions::default()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("suboptimal", m), &m, |b, _| {
            b.iter(|| solve_suboptimal(&ens, &cfg, 0.01).unwrap())
        });
        let low = cfg.clone().with_targets(0.3);
        g.bench_with_input(BenchmarkId::new("fsa2", m), &m, |b, _| {
            b.iter(|| solve_fsa(&ens, &low, FsaScheme::Fsa2, 0.01).unwrap())
        });
    }
    g.finish();
}

fn bound(c: &mut Criterion) {
    c.bench_function("feasibility_bound_64_8", |b| {
        b.iter(|| secrecy_rate_upper_bound(64, 8, 1.0, &BoundOptions::default()).unwrap())
    });
}

criterion_group!(benches, bids, solvers, bound);
criterion_main!(benches);
