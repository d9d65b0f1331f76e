//! Parallel vs sequential execution of the two hot paths: a conv2d forward
//! and backward pass, and the multi-coil acquisition operator.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use priorforge::autodiff::{Graph, Padding, ParamStore, Tensor};
use priorforge::mri::{adjoint_operator, forward_operator, ComplexImage, SamplingMask};
use priorforge::data::generate_csm;
use priorforge::par;
use priorforge::rng::SplitMix64;

fn random(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.next_f64() - 0.5).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_fwd_bwd");
    for &(ch, n) in &[(32usize, 64usize), (64, 64)] {
        let mut store = ParamStore::new();
        let w = store.add("w", random(vec![ch, ch, 3, 3], 1)).unwrap();
        let x = random(vec![1, ch, n, n], 2);
        for (label, on) in [("parallel", true), ("sequential", false)] {
            group.bench_with_input(BenchmarkId::new(label, format!("{ch}x{n}x{n}")), &on, |b, &on| {
                par::set_parallel(on);
                b.iter(|| {
                    let mut g = Graph::new();
                    let xv = g.constant(x.clone());
                    let wv = g.param(&store, w);
                    let y = g.conv2d(xv, wv, None, 1, Padding::SameZero).unwrap();
                    let loss = g.sum(y);
                    g.backward(loss, &mut store).unwrap();
                });
            });
        }
    }
    par::set_parallel(true);
    group.finish();
}

fn operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("mri_forward_adjoint");
    for &(coils, n) in &[(4usize, 64usize), (8, 256)] {
        let sens = generate_csm(coils, n).unwrap();
        let mask = SamplingMask::full(n, n);
        let mut rng = SplitMix64::new(3);
        let re = (0..n * n).map(|_| rng.next_f64()).collect();
        let im = (0..n * n).map(|_| rng.next_f64()).collect();
        let x = ComplexImage::from_parts(n, n, re, im).unwrap();
        for (label, on) in [("parallel", true), ("sequential", false)] {
            group.bench_with_input(BenchmarkId::new(label, format!("{coils}c_{n}")), &on, |b, &on| {
                par::set_parallel(on);
                b.iter(|| {
                    let k = forward_operator(&x, &sens, &mask).unwrap();
                    adjoint_operator(&k, &sens, &mask).unwrap()
                });
            });
        }
    }
    par::set_parallel(true);
    group.finish();
}

criterion_group!(benches, conv, operator);
criterion_main!(benches);
