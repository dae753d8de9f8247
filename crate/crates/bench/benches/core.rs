use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use survcobra::curves::{curve_distance, kaplan_meier};
use survcobra::learners::{fit, LearnerSpec};
use survcobra::{fit_cobra, CobraParams};
use survcobra_bench::{query_rows, synthetic};

fn bench_kaplan_meier(c: &mut Criterion) {
    let mut group = c.benchmark_group("kaplan_meier");
    for n in [500, 2000, 8000] {
        let data = synthetic(n, 1);
        let (times, events) = (data.times(), data.events());
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| kaplan_meier(black_box(&times), black_box(&events)).unwrap())
        });
    }
    group.finish();
}

fn bench_curve_distance(c: &mut Criterion) {
    let data = synthetic(2000, 2);
    let model = fit(&LearnerSpec::KnnSurvival { k: None }, &data).unwrap();
    let rows = query_rows(&data, 2);
    let a = model.predict_curve(&rows[0]).unwrap();
    let b = model.predict_curve(&rows[1]).unwrap();
    let t_max = data.max_time();
    c.bench_function("curve_distance", |bench| bench.iter(|| curve_distance(black_box(&a), black_box(&b), t_max).unwrap()));
}

fn bench_forest_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("forest_fit");
    group.sample_size(10);
    let data = synthetic(1000, 3);
    for n_trees in [10, 50] {
        let spec = LearnerSpec::RandomSurvivalForest {
            n_trees,
            mtry: None,
            min_leaf: 15,
            max_depth: None,
            bootstrap: true,
            seed: 7,
        };
        group.bench_with_input(BenchmarkId::from_parameter(n_trees), &spec, |b, spec| b.iter(|| fit(spec, &data).unwrap()));
    }
    group.finish();
}

fn bench_cobra_predict(c: &mut Criterion) {
    let data = synthetic(2000, 4);
    let params = CobraParams { epsilon: 0.05, alpha: 0.6, l_fraction: 0.5, roster: LearnerSpec::default_roster(4) };
    let model = fit_cobra(&data, &params, 9).unwrap();
    let queries = query_rows(&data, 50);
    let mut group = c.benchmark_group("cobra");
    group.throughput(Throughput::Elements(queries.len() as u64));
    group.bench_function("predict_batch", |b| b.iter(|| model.predict_batch(black_box(&queries)).unwrap()));
    let row = model.distances(&queries[0]).unwrap();
    group.bench_function("predict_from_distances", |b| b.iter(|| model.predict_from_distances(black_box(&row), 0.05, 0.6)));
    group.finish();
}

criterion_group!(benches, bench_kaplan_meier, bench_curve_distance, bench_forest_fit, bench_cobra_predict);
criterion_main!(benches);
