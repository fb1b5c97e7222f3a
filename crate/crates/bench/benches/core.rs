use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use discovery_bench::{baseline, cohort, replay_engine};
use discovery_core::budget::run_balanced_loop;
use discovery_core::continuation::thompson_replay;
use discovery_core::equilibrium::{implement_bounty, solve_best_response, solve_first_best};
use discovery_core::pass_frontier::binomial_tail_beta;
use discovery_core::telemetry::{fit_pass_curve, FitConfig};
use discovery_core::{BinomialBar, Budgets, LoopConfig, PassModel, SlotProbabilities, DEFAULT_TOL};

fn frontier(c: &mut Criterion) {
    let mut g = c.benchmark_group("frontier");
    for q in [10u32, 50, 200] {
        g.bench_with_input(BenchmarkId::new("tail", q), &q, |b, &q| {
            b.iter(|| binomial_tail_beta(black_box(q), q / 3, black_box(0.31)))
        });
    }
    let model = PassModel::binomial(10, 3);
    g.bench_function("slope", |b| b.iter(|| model.slope(black_box(0.3)).unwrap()));
    let pb = PassModel::poisson_binomial(SlotProbabilities::fixed(vec![0.3; 30], Some(vec![1.0; 30])), 9);
    g.bench_function("poisson_binomial_30", |b| b.iter(|| pb.eval(black_box(0.3)).unwrap()));
    g.finish();
}

fn equilibrium(c: &mut Criterion) {
    let s = baseline();
    c.bench_function("solve_best_response", |b| b.iter(|| solve_best_response(black_box(&s), DEFAULT_TOL).unwrap()));
    c.bench_function("first_best_and_bounty", |b| {
        b.iter(|| {
            let fb = solve_first_best(&s, DEFAULT_TOL).unwrap();
            implement_bounty(&s, fb.mu_fb, DEFAULT_TOL).unwrap()
        })
    });
}

fn budget(c: &mut Criterion) {
    let s = baseline();
    let cfg = LoopConfig { eta_q: 0.1, eta_b: 0.1, rho: 0.1, ..LoopConfig::default() };
    let mut g = c.benchmark_group("budget");
    g.sample_size(10);
    g.bench_function("balanced_loop", |b| {
        b.iter(|| run_balanced_loop(&s, &Budgets { r: 12.0, m: 50.0 }, &cfg).unwrap())
    });
    g.finish();
}

fn replay(c: &mut Criterion) {
    let cfg = replay_engine(1000);
    let bar = BinomialBar::new(10, 3);
    let mut g = c.benchmark_group("replay");
    g.sample_size(10);
    g.bench_function("thompson_1000", |b| b.iter(|| thompson_replay(black_box(0.33), &bar, &cfg).unwrap()));
    g.finish();
}

fn telemetry(c: &mut Criterion) {
    let recs = cohort(10_000, 1);
    let cfg = FitConfig::default();
    let mut g = c.benchmark_group("telemetry");
    g.sample_size(20);
    g.bench_function("fit_10000", |b| b.iter(|| fit_pass_curve(black_box(&recs), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, frontier, equilibrium, budget, replay, telemetry);
criterion_main!(benches);
