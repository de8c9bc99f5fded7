use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mrr_bench::{population, survey};
use mrr_core::estimators::{
    estimate_prevalence, fit_poisson_loglinear, lexis_expand, SplineControl,
};
use mrr_core::{ExperimentConfig, PrevalenceOracle, RateSet};

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_population");
    group.sample_size(10);
    for size in [50_000usize, 500_000] {
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, &size| {
            b.iter(|| population(black_box(size), 1))
        });
    }
    group.finish();
}

fn survey_and_estimate(c: &mut Criterion) {
    let pop = population(500_000, 1);
    let settings = ExperimentConfig::default().settings();
    let mut group = c.benchmark_group("survey");
    group.sample_size(10);
    for n in [5_000usize, 200_000] {
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("draw", n), &n, |b, &n| {
            b.iter(|| survey(&pop, n, 1))
        });
        let s = survey(&pop, n, 1);
        group.bench_with_input(BenchmarkId::new("lexis_poisson", n), &s, |b, s| {
            b.iter(|| {
                fit_poisson_loglinear(&lexis_expand(s, settings.band_width).unwrap()).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("prevalence_spline", n), &s, |b, s| {
            b.iter(|| {
                estimate_prevalence(s, settings.band_width, &SplineControl::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let rates = RateSet::long_term_care();
    c.bench_function("prevalence_oracle", |b| {
        b.iter(|| PrevalenceOracle::for_rates(black_box(&rates)).unwrap())
    });
}

criterion_group!(benches, simulate, survey_and_estimate, oracle);
criterion_main!(benches);
