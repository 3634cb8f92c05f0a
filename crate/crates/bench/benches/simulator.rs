use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pograph_bench::{bench_frame, random_point, unit_class};
use pograph_core::algorithms::{amb_sgd, sequential_sgd, StepSchedule};
use pograph_core::executor::execute;
use pograph_core::graphs::{build_intermittent, build_layer, build_path};
use pograph_core::instances::{chain_instance, coinflip_instance, Instance};
use pograph_core::prox::prox_max_affine;

fn graph_builders(c: &mut Criterion) {
    c.bench_function("build_path_4096", |b| {
        b.iter(|| black_box(build_path(4096).unwrap().depth()))
    });
    c.bench_function("build_intermittent_20x10x10", |b| {
        b.iter(|| black_box(build_intermittent(20, 10, 10).unwrap().depth()))
    });
    c.bench_function("build_layer_64x16", |b| {
        b.iter(|| black_box(build_layer(64, 16).unwrap().size()))
    });
}

fn prox_solvers(c: &mut Criterion) {
    let frame = bench_frame(256, 12);
    let offsets: Vec<f64> = (0..12).map(|r| 0.01 * r as f64).collect();
    let x = random_point(256, 7);
    c.bench_function("prox_max_affine_k12_m256", |b| {
        b.iter(|| {
            black_box(prox_max_affine(&frame.rows(), &offsets, 1.0, &x.view(), 20.0).unwrap())
        })
    });

    let inst = chain_instance(unit_class(), 8, 64, 3).unwrap();
    let y = random_point(64, 9);
    c.bench_function("chain_prox_numeric_d8", |b| {
        b.iter(|| black_box(inst.prox(&y.view(), 2.0, 1).unwrap()))
    });
}

fn executor_runs(c: &mut Criterion) {
    let graph = build_path(512);
    let graph = graph.unwrap();
    let inst = coinflip_instance(1.0, 1.0, 512, 0).unwrap();
    let prog = sequential_sgd(inst.class().clone(), &graph, 512, StepSchedule::default()).unwrap();
    c.bench_function("execute_path512_coinflip_sgd", |b| {
        b.iter_batched(
            || (),
            |_| black_box(execute(&graph, &prog, &inst, 1).unwrap().digest()),
            BatchSize::SmallInput,
        )
    });

    let graph = build_layer(48, 4).unwrap();
    let inst = chain_instance(unit_class(), 4, 64, 5).unwrap();
    let prog = amb_sgd(inst.class().clone(), &graph, None, None).unwrap();
    c.bench_function("execute_layer48x4_chain_amb", |b| {
        b.iter_batched(
            || (),
            |_| black_box(execute(&graph, &prog, &inst, 1).unwrap().digest()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, graph_builders, prox_solvers, executor_runs);
criterion_main!(benches);
