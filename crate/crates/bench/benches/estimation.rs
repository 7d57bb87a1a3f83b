use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use tailrate_bench::tandem_fixture;
use tailrate_core::estimate::SaturatedSample;
use tailrate_core::tailsim::{fit_tail_slope, sample_stationary_daters};
use tailrate_core::{HorizonPolicy, StreamKey};

fn lambda(c: &mut Criterion) {
    let (model, marks, _) = tandem_fixture(2);
    let mut group = c.benchmark_group("saturated_sample");
    group.sample_size(20);
    for n in [16, 64, 256] {
        group.bench_with_input(BenchmarkId::new("draw_10k", n), &n, |b, &n| {
            b.iter(|| SaturatedSample::draw(&model, &marks, n, 10_000, StreamKey::new(3, n as u64)).unwrap())
        });
    }
    let sample = SaturatedSample::draw(&model, &marks, 64, 10_000, StreamKey::new(3, 0)).unwrap();
    group.bench_function("lambda_eval", |b| b.iter(|| sample.lambda(black_box(0.5))));
    group.finish();
}

fn tail(c: &mut Criterion) {
    let (model, marks, arrival) = tandem_fixture(2);
    let mut group = c.benchmark_group("tail");
    group.sample_size(10);
    for (name, policy) in [("forward", HorizonPolicy::forward()), ("backward", HorizonPolicy::backward())] {
        group.bench_function(BenchmarkId::new("daters_10k", name), |b| {
            b.iter(|| sample_stationary_daters(&model, &marks, &arrival, 10_000, StreamKey::new(5, 0), policy).unwrap())
        });
    }
    let sample = sample_stationary_daters(&model, &marks, &arrival, 100_000, StreamKey::new(5, 1), HorizonPolicy::forward()).unwrap();
    group.bench_function("fit_slope_100k", |b| b.iter(|| fit_tail_slope(black_box(&sample.values), 0.95, 0.9999).unwrap()));
    group.finish();
}

criterion_group!(benches, lambda, tail);
criterion_main!(benches);
