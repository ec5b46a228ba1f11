use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use lclstm::ensemble::{bag, bootstrap_kappas};
use lclstm::lc::{fit_lc, LcFitOptions};
use lclstm::lstm::{train, LstmConfig};
use lclstm_bench::{ensemble, kappa_series, national_surface};

fn lee_carter(c: &mut Criterion) {
    let surface = national_surface();
    let opts = LcFitOptions::default();
    c.bench_function("lc_fit_101x69", |b| b.iter(|| fit_lc(black_box(&surface), &opts).unwrap()));

    let fit = fit_lc(&surface, &opts).unwrap();
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("kappas_b4", |b| b.iter(|| bootstrap_kappas(&surface, &fit, 4, 7, &opts).unwrap()));
    g.finish();
}

fn lstm(c: &mut Criterion) {
    let series = kappa_series(58);
    let mut g = c.benchmark_group("lstm_train");
    for units in [3usize, 20] {
        let cfg = LstmConfig { hidden_units: units, max_epochs: 100, patience: 100, ..Default::default() };
        g.bench_function(format!("units{units}_100_epochs"), |b| {
            b.iter(|| train(black_box(&cfg), &series, None).unwrap())
        });
    }
    g.finish();
}

fn bagging(c: &mut Criterion) {
    c.bench_function("bag_200x18", |b| {
        b.iter_batched(|| ensemble(200, 18), |d| bag(&d).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, lee_carter, lstm, bagging);
criterion_main!(benches);
