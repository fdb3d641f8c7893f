use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use floodcast_bench::{history, history_fit_inputs};
use floodcast_core::simnet::simulate;
use floodcast_core::synthetic::{demo_scenario, single_zone_rise};
use floodcast_core::{robust_fit, Predictor, PredictorConfig, Reading, RobustFitConfig};

fn regression(c: &mut Criterion) {
    let (x, y) = history_fit_inputs();
    let config = RobustFitConfig::default();
    c.bench_function("robust_fit_40x3", |b| b.iter(|| robust_fit(black_box(&x), black_box(&y), &config)));
}

fn predictor(c: &mut Criterion) {
    let past = history();
    let mut primed = Predictor::new(PredictorConfig::default()).expect("default config");
    primed.prime(&past).expect("history is valid");
    let next = past.last().map_or(0.0, |r| r.t) + 30.0;
    let reading = Reading::new(next, 18.0, 35.0, 300.0);
    c.bench_function("predictor_step", |b| {
        b.iter_batched(|| primed.clone(), |mut p| p.step(black_box(&reading)), BatchSize::SmallInput)
    });
}

fn simulation(c: &mut Criterion) {
    let single = single_zone_rise(1);
    let demo = demo_scenario();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("single_zone_rise", |b| b.iter(|| simulate(black_box(&single))));
    group.bench_function("demo", |b| b.iter(|| simulate(black_box(&demo))));
    group.finish();
}

criterion_group!(benches, regression, predictor, simulation);
criterion_main!(benches);
