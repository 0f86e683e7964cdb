use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use neurodeploy::dataset::{generate, Backend, Selection};
use neurodeploy::gnn::{ModelConfig, RgcnModel};
use neurodeploy::refine::predict;
use neurodeploy::smt::encode;
use neurodeploy::*;

fn secure_web(offers: usize) -> DeploymentProblem {
    let catalog = catalog_cloud20().into_iter().take(offers).collect();
    DeploymentProblem::new(case_study("secure-web").unwrap(), catalog).unwrap()
}

fn encoding(c: &mut Criterion) {
    let web = secure_web(20);
    c.bench_function("encode/secure-web/cloud20", |b| {
        b.iter(|| encode(black_box(&web), &[]).unwrap())
    });
    let wp = DeploymentProblem::new(cases::wordpress(8), catalog_droplet27()).unwrap();
    c.bench_function("encode/wordpress8/droplet27", |b| {
        b.iter(|| encode(black_box(&wp), &[]).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let caps = OracleCaps {
        max_components: 5,
        max_vms: 6,
        max_offers: 7,
    };
    let app = case_study("secure-web").unwrap();
    let catalog = catalog_cloud20();
    let data = generate(
        &app,
        &catalog,
        7,
        Selection::Random { count: 5, seed: 1 },
        &Backend::Oracle(caps),
    )
    .unwrap();
    let sample = data.samples.first().expect("a feasible subset");
    let offers = catalog
        .iter()
        .filter(|o| sample.subset.contains(&o.id))
        .cloned()
        .collect();
    let problem = DeploymentProblem::new(app, offers).unwrap();
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("secure-web/7offers", |b| {
        b.iter(|| brute_force(black_box(&problem), caps).unwrap())
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let problem = secure_web(20);
    let model = RgcnModel::new(ModelConfig::new(problem.n_vms()), 0).unwrap();
    c.bench_function("predict/secure-web/cloud20", |b| {
        b.iter(|| predict(black_box(&problem), &model).unwrap())
    });
}

criterion_group!(benches, encoding, oracle, inference);
criterion_main!(benches);
