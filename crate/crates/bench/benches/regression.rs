use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use orderinfo::regression::{ess_bulk, ess_tail, sample, simulate_dataset, split_rhat, standardize, FitConfig, MixedModelSpec, SdConvention, SimConfig};

fn regression(c: &mut Criterion) {
    let (records, _) = simulate_dataset(&SimConfig::default()).unwrap();
    let design = standardize(&records, SdConvention::Sample).unwrap();
    let spec = MixedModelSpec::default();

    let mut group = c.benchmark_group("sampler_2000_rows");
    group.sample_size(10);
    group.bench_function("4_chains_200_iterations", |b| {
        let cfg = FitConfig { warmup: 100, draws: 100, ..Default::default() };
        b.iter(|| sample(black_box(&design), &spec, &cfg).unwrap())
    });
    group.finish();

    let draws = sample(&design, &spec, &FitConfig { warmup: 200, draws: 1000, ..Default::default() }).unwrap();
    let chains = draws.chains_of(draws.param_index("beta_pmi").unwrap());
    c.bench_function("split_rhat_4x1000", |b| b.iter(|| split_rhat(black_box(&chains))));
    c.bench_function("ess_bulk_4x1000", |b| b.iter(|| ess_bulk(black_box(&chains))));
    c.bench_function("ess_tail_4x1000", |b| b.iter(|| ess_tail(black_box(&chains))));
}

criterion_group!(benches, regression);
criterion_main!(benches);
