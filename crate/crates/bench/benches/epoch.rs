use bigi::eval::topk_evaluate;
use bigi::graph::split_train_test;
use bigi::numerics::{AdamConfig, ParamStore, Tape};
use bigi::trainer::{self, batch_loss, EpochPlan, ModelParams, Sampler};
use bigi_bench::{bench_config, full_split, random_graph};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn epoch(c: &mut Criterion) {
    let split = full_split(random_graph(600, 900, 6000, 1));
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for dim in [16, 32, 64] {
        let cfg = bench_config(dim);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &cfg, |b, cfg| {
            b.iter(|| trainer::train(&split, cfg).unwrap())
        });
    }
    group.finish();
}

fn batch_step(c: &mut Criterion) {
    let split = full_split(random_graph(600, 900, 6000, 1));
    let g = &split.train;
    let cfg = bench_config(32);
    let mut store = ParamStore::new();
    let params = ModelParams::init(&mut store, &cfg, g.num_u(), g.num_v());
    let mut sampler = Sampler::new(cfg.seed);
    let plan = EpochPlan::sample(g, &cfg, &mut sampler).unwrap();
    let batch = plan.batch(0, g, &cfg, &mut sampler).unwrap();
    let adam = AdamConfig::with_lr(cfg.lr);

    c.bench_function("batch_step/32", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, &store, &params, g, &plan.corrupted, &batch, &cfg).unwrap();
            tape.backward(loss.total, &mut store).unwrap();
            store.adam_step(&adam).unwrap();
        })
    });
}

fn evaluate(c: &mut Criterion) {
    let g = random_graph(600, 900, 6000, 2);
    let split = split_train_test(&g, 0.8, 1).unwrap();
    let model = trainer::train(&split, &bench_config(32)).unwrap();
    c.bench_function("topk_evaluate/32", |b| {
        b.iter(|| topk_evaluate(&model, &split, &[10]).unwrap())
    });
}

criterion_group!(benches, epoch, batch_step, evaluate);
criterion_main!(benches);
