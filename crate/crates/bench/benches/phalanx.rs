use criterion::{black_box, criterion_group, criterion_main, Criterion};
use phalanx::golden;
use phalanx::metrics::reordering;
use phalanx::simnet::run;
use phalanx::Strategy;
use phalanx_bench::{scenario, scrambled_trace};

fn metrics(c: &mut Criterion) {
    let trace = scrambled_trace(10_000);
    c.bench_function("reordering 10k", |b| b.iter(|| reordering(black_box(&trace))));
}

fn micro(c: &mut Criterion) {
    c.bench_function("golden walk-through", |b| b.iter(golden::walkthrough));
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulation");
    g.sample_size(10);
    for strategy in [Strategy::Anchor, Strategy::Timestamp] {
        let s = scenario(4, 200, strategy);
        g.bench_function(format!("n4 200 {strategy}"), |b| b.iter(|| run(black_box(&s)).unwrap()));
    }
    let s = scenario(16, 50, Strategy::Anchor);
    g.bench_function("n16 50 anchor", |b| b.iter(|| run(black_box(&s)).unwrap()));
    g.finish();
}

criterion_group!(benches, metrics, micro, simulation);
criterion_main!(benches);
