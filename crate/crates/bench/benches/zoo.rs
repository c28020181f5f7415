use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rashomon_core::synthetic::{planted, PlantedSpec};
use rashomon_core::zoo::{self, Family, ModelSpec};

fn train(c: &mut Criterion) {
    let d = planted(&PlantedSpec { n: 512, ..PlantedSpec::default() }).unwrap();
    let y = d.labels.clone();
    let mut g = c.benchmark_group("train_512x10");
    g.sample_size(10);
    for family in Family::ALL {
        let spec = ModelSpec::new(family, 4);
        g.bench_function(BenchmarkId::from_parameter(family.name()), |b| {
            b.iter(|| zoo::train(&spec, d.features.view(), &y).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, train);
criterion_main!(benches);
