use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orscale_core::matrixcore::{newton_schulz, polar_exact, svd};
use orscale_core::optim::step_layer;
use orscale_core::rng::{stream_rng, Stream};
use orscale_core::{HyperParams, LayerState, Matrix, Variant};

const SHAPES: [(usize, usize); 3] = [(16, 16), (64, 48), (128, 64)];

fn sample(m: usize, n: usize, n_id: u64) -> Matrix {
    let mut rng = stream_rng(0, Stream::Test(n_id));
    Matrix::gaussian(m, n, 1.0, &mut rng)
}

fn orthogonalization(c: &mut Criterion) {
    let mut g = c.benchmark_group("orthogonalize");
    for (m, n) in SHAPES {
        let a = sample(m, n, 1);
        let label = format!("{m}x{n}");
        g.bench_with_input(BenchmarkId::new("svd", &label), &a, |b, a| {
            b.iter(|| svd(black_box(a)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("polar_exact", &label), &a, |b, a| {
            b.iter(|| polar_exact(black_box(a)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("newton_schulz_5", &label), &a, |b, a| {
            b.iter(|| newton_schulz(black_box(a), 5))
        });
    }
    g.finish();
}

fn optimizer_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step_layer");
    let hp = HyperParams::orscale_lm();
    for (m, n) in SHAPES {
        let w = sample(m, n, 2);
        let grad = sample(m, n, 3);
        for v in [Variant::Muon, Variant::OrScale, Variant::OrScaleLm] {
            let cfg = v.config();
            g.bench_function(BenchmarkId::new(v.name(), format!("{m}x{n}")), |b| {
                let mut state = LayerState::new(&cfg, m, n);
                let mut t = 0;
                b.iter(|| {
                    t += 1;
                    step_layer(&cfg, &hp, &mut state, &w, black_box(&grad), t, 0).unwrap()
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, orthogonalization, optimizer_step);
criterion_main!(benches);
