use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use winoconv::{
    batched_gemm_with, build_plan, gemm, im2row, lowered_gemm, transform_input, transform_output,
    transform_weights, Beta, ConvLayerSpec, GemmConfig, GemmContext, Layout, Matrix, Padding, Tensor4D,
    Weights,
};

fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-1.0f32..=1.0)).collect()
}

fn bench_gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [64, 128, 256] {
        let a = Matrix::from_vec(n, n, random(&mut rng, n * n)).unwrap();
        let b = Matrix::from_vec(n, n, random(&mut rng, n * n)).unwrap();
        let mut out = Matrix::zeros(n, n);
        let config = GemmConfig {
            counters_enabled: false,
            ..GemmConfig::default()
        };
        group.throughput(Throughput::Elements((n * n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| gemm(&config, black_box(&a), black_box(&b), Beta::Zero, &mut out).unwrap())
        });
    }
    group.finish();
}

fn layer(name: &str, size: usize, channels: usize, k: (usize, usize)) -> ConvLayerSpec {
    ConvLayerSpec::new(name, (size, size, channels), channels, k).with_pad(Padding {
        top: k.0 / 2,
        bottom: k.0 / 2,
        left: k.1 / 2,
        right: k.1 / 2,
    })
}

fn bench_conv(c: &mut Criterion) {
    let cases = [
        (layer("3x3", 56, 64, (3, 3)), vec![(2, 2), (4, 4)]),
        (layer("5x5", 28, 32, (5, 5)), vec![(2, 2)]),
        (layer("1x7", 17, 48, (1, 7)), vec![(1, 2)]),
        (layer("7x1", 17, 48, (7, 1)), vec![(2, 1)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (spec, tiles) in cases {
        let input = Tensor4D::from_vec(
            spec.input_dims(1),
            Layout::Nhwc,
            random(&mut rng, spec.in_h * spec.in_w * spec.in_c),
        )
        .unwrap();
        let weights = Weights::new(
            spec.k_h,
            spec.k_w,
            spec.in_c,
            spec.out_m,
            random(&mut rng, spec.k_h * spec.k_w * spec.in_c * spec.out_m),
        )
        .unwrap();
        let (out_h, out_w) = spec.output_shape().unwrap();

        let mut group = c.benchmark_group(format!("conv/{}", spec.name));
        group.sample_size(20);
        group.bench_function("im2row", |bench| {
            bench.iter(|| {
                let lowered = im2row(black_box(&input), &spec).unwrap();
                lowered_gemm(
                    &lowered,
                    &weights,
                    &mut GemmContext::default(),
                    (1, out_h, out_w),
                    false,
                )
                .unwrap()
            })
        });
        for (m_h, m_w) in tiles {
            let plan = build_plan(&spec, m_h, m_w).unwrap();
            let transformed = transform_weights(&plan, &weights).unwrap();
            group.bench_function(plan.label(), |bench| {
                bench.iter(|| {
                    let a = transform_input(&plan, black_box(&input)).unwrap();
                    let prod =
                        batched_gemm_with(&a, &transformed, &mut GemmContext::default(), false).unwrap();
                    transform_output(&plan, &prod).unwrap()
                })
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench_gemm, bench_conv);
criterion_main!(benches);
