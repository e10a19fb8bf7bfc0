use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;

use fedrobust_bench::{mnist_like, random_params, small_federation, INPUT};
use fedrobust_core::geometry::{project_simplex, Purpose, RngStream};
use fedrobust_core::models::{loss_grad, ModelShape};
use fedrobust_core::numerics::DenseVector;
use fedrobust_core::Algorithm;

fn gradients(c: &mut Criterion) {
    let data = mnist_like(32, 1).unwrap();
    let batch = data.all();
    for (name, shape) in [("linear", ModelShape::linear(INPUT, 10)), ("mlp64", ModelShape::mlp(INPUT, 64, 10))] {
        let params = random_params(shape, 2).unwrap();
        c.bench_function(&format!("loss_grad/{name}/batch32"), |b| {
            b.iter(|| loss_grad(black_box(&params), black_box(&batch)).unwrap())
        });
    }
}

fn projections(c: &mut Criterion) {
    let mut rng = RngStream::for_purpose(4, Purpose::Custom(3), 0, 0);
    for n in [30, 1000] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        c.bench_function(&format!("project_simplex/{n}"), |b| b.iter(|| project_simplex(black_box(&x)).unwrap()));
    }
}

fn rounds(c: &mut Criterion) {
    let fed = small_federation(30, 20, 10).unwrap();
    let w0 = DenseVector::zeros(fed.dim());
    for alg in [Algorithm::Drdm, Algorithm::FedAvg] {
        c.bench_function(&format!("round/{alg}/n30_m20_tau10"), |b| {
            b.iter_batched(
                || fed.initial_state(w0.clone()).unwrap(),
                |(mut server, mut clients)| fed.run_round(alg, &mut server, &mut clients).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, gradients, projections, rounds);
criterion_main!(benches);
