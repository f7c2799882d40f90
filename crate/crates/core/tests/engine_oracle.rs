use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use winoconv::{
    batched_gemm, build_plan, convolve, direct_conv_f64, im2row_conv, max_rel_error, transform_input,
    transform_weights, winograd_tolerance, ConvLayerSpec, GemmContext, Layout, Matrix, Padding, Tensor4D,
    TileMatrixBatch, TileRole, Weights, IM2ROW_TOLERANCE,
};

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, c: usize) -> Tensor4D {
    let data = (0..n * h * w * c).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
    Tensor4D::from_vec((n, h, w, c), Layout::Nhwc, data).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, k_h: usize, k_w: usize, c: usize, m: usize) -> Weights {
    let data = (0..k_h * k_w * c * m)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    Weights::new(k_h, k_w, c, m, data).unwrap()
}

fn winograd_error(spec: &ConvLayerSpec, m_h: usize, m_w: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_tensor(&mut rng, 1, spec.in_h, spec.in_w, spec.in_c);
    let weights = random_weights(&mut rng, spec.k_h, spec.k_w, spec.in_c, spec.out_m);
    let plan = build_plan(spec, m_h, m_w).unwrap();
    let out = convolve(&plan, &input, &weights).unwrap();
    let reference = direct_conv_f64(&input, &weights, spec).unwrap();
    max_rel_error(out.data(), &reference)
}

#[test]
fn six_by_six_layer_matches_direct() {
    let spec = ConvLayerSpec::new("small", (6, 6, 3), 4, (3, 3));
    let err = winograd_error(&spec, 2, 2, 7);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn every_variant_matches_direct() {
    let cases = [
        (
            ConvLayerSpec::new("3x3", (13, 11, 8), 6, (3, 3)).with_pad(Padding::uniform(1)),
            2,
            2,
        ),
        (
            ConvLayerSpec::new("3x3", (13, 11, 8), 6, (3, 3)).with_pad(Padding::uniform(1)),
            4,
            4,
        ),
        (
            ConvLayerSpec::new("5x5", (12, 9, 8), 5, (5, 5)).with_pad(Padding::uniform(2)),
            2,
            2,
        ),
        (
            ConvLayerSpec::new("1x7", (9, 17, 8), 5, (1, 7)).with_pad(Padding {
                top: 0,
                bottom: 0,
                left: 3,
                right: 3,
            }),
            1,
            2,
        ),
        (
            ConvLayerSpec::new("7x1", (17, 9, 8), 5, (7, 1)).with_pad(Padding {
                top: 3,
                bottom: 3,
                left: 0,
                right: 0,
            }),
            2,
            1,
        ),
    ];
    for (spec, m_h, m_w) in cases {
        let err = winograd_error(&spec, m_h, m_w, 11);
        assert!(
            err <= winograd_tolerance(m_h.max(m_w)),
            "{} m=({m_h},{m_w}): {err}",
            spec.name
        );
    }
}

#[test]
fn batched_plans_match_direct() {
    let spec = ConvLayerSpec::new("b", (7, 6, 3), 4, (3, 3)).with_pad(Padding::uniform(1));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = random_tensor(&mut rng, 3, 7, 6, 3);
    let weights = random_weights(&mut rng, 3, 3, 3, 4);
    let plan = winoconv::build_plan_with(
        &spec,
        2,
        2,
        winoconv::PlanOptions {
            batch: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(plan.regions(), 3 * 4 * 3);
    let out = convolve(&plan, &input, &weights).unwrap();
    let reference = direct_conv_f64(&input, &weights, &spec).unwrap();
    assert!(max_rel_error(out.data(), &reference) <= 1e-4);
}

#[test]
fn parallel_execution_matches_sequential() {
    let spec = ConvLayerSpec::new("p", (20, 18, 6), 7, (3, 3)).with_pad(Padding::uniform(1));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random_tensor(&mut rng, 1, 20, 18, 6);
    let weights = random_weights(&mut rng, 3, 3, 6, 7);
    let plan = build_plan(&spec, 4, 4).unwrap();
    let tw = transform_weights(&plan, &weights).unwrap();
    let seq = winoconv::convolve_prepared(
        &plan,
        &input,
        &tw,
        &mut GemmContext::default(),
        &Default::default(),
    )
    .unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let exec = winoconv::ExecOptions {
        parallel: true,
        ..Default::default()
    };
    let mut ctx = GemmContext::default();
    let par = pool
        .install(|| winoconv::convolve_prepared(&plan, &input, &tw, &mut ctx, &exec))
        .unwrap();
    assert_eq!(seq, par);
    assert_eq!(ctx.mac_count(), plan.gemm_macs());
}

#[test]
fn region_and_mac_accounting() {
    for (h, w, m) in [(6, 6, 2), (7, 9, 2), (12, 12, 4), (13, 10, 4)] {
        let spec = ConvLayerSpec::new("acct", (h, w, 3), 5, (3, 3));
        let plan = build_plan(&spec, m, m).unwrap();
        let (out_h, out_w) = spec.output_shape().unwrap();
        assert_eq!(plan.regions(), out_h.div_ceil(m) * out_w.div_ceil(m));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, 1, h, w, 3);
        let weights = random_weights(&mut rng, 3, 3, 3, 5);
        let tw = transform_weights(&plan, &weights).unwrap();
        let mut ctx = GemmContext::default();
        winoconv::convolve_prepared(&plan, &input, &tw, &mut ctx, &Default::default()).unwrap();
        let t = m + 2;
        assert_eq!(ctx.mac_count(), (t * t * plan.regions() * 3 * 5) as u64);
    }
}

#[test]
fn f4x4_uses_quarter_of_im2row_macs() {
    let spec = ConvLayerSpec::new("vggish", (16, 16, 8), 8, (3, 3)).with_pad(Padding::uniform(1));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = random_tensor(&mut rng, 1, 16, 16, 8);
    let weights = random_weights(&mut rng, 3, 3, 8, 8);

    let mut base = GemmContext::default();
    winoconv::im2row_conv_with(&input, &weights, &spec, &mut base).unwrap();
    assert_eq!(base.mac_count(), (16 * 16 * 9 * 8 * 8) as u64);

    let plan = build_plan(&spec, 4, 4).unwrap();
    let tw = transform_weights(&plan, &weights).unwrap();
    let mut ours = GemmContext::default();
    winoconv::convolve_prepared(&plan, &input, &tw, &mut ours, &Default::default()).unwrap();
    assert_eq!(ours.mac_count() * 4, base.mac_count());
}

/// Applies `bt · tile · btᵀ` in f64 from the exact matrices.
fn reference_tile(bt: &winoconv::RationalMatrix, tile: &[f64], t: usize) -> Vec<f64> {
    use num_traits::ToPrimitive;
    let b = |i: usize, j: usize| bt.get(i, j).to_f64().unwrap();
    let mut tmp = vec![0.0; t * t];
    for u in 0..t {
        for j in 0..t {
            tmp[u * t + j] = (0..t).map(|i| b(u, i) * tile[i * t + j]).sum();
        }
    }
    let mut out = vec![0.0; t * t];
    for u in 0..t {
        for v in 0..t {
            out[u * t + v] = (0..t).map(|j| tmp[u * t + j] * b(v, j)).sum();
        }
    }
    out
}

#[test]
fn scatter_then_identity_gemm_returns_input_tiles() {
    let spec = ConvLayerSpec::new("sg", (9, 9, 4), 4, (3, 3)).with_pad(Padding::uniform(1));
    let plan = build_plan(&spec, 2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let input = random_tensor(&mut rng, 1, 9, 9, 4);
    let a = transform_input(&plan, &input).unwrap();
    let ident = vec![Matrix::identity(4); plan.tile_area()];
    let b = TileMatrixBatch::from_matrices(TileRole::Weight, &ident).unwrap();
    let c = batched_gemm(&a, &b).unwrap();
    let (tiles_h, tiles_w) = plan.grid();
    for ti in 0..tiles_h {
        for tj in 0..tiles_w {
            let rho = ti * tiles_w + tj;
            let region = input.extract_region(0, (ti * 2) as isize - 1, (tj * 2) as isize - 1, 4, 4);
            for ch in 0..4 {
                let tile: Vec<f64> = (0..16).map(|k| region.get(k / 4, k % 4, ch) as f64).collect();
                let expected = reference_tile(plan.ts_h().bt(), &tile, 4);
                for (idx, want) in expected.iter().enumerate() {
                    // BT has entries in {-1, 0, 1}: sums of at most 16 inputs are exact enough.
                    assert!((c.get(idx, rho, ch) as f64 - want).abs() < 1e-6);
                    assert_eq!(c.get(idx, rho, ch), a.get(idx, rho, ch));
                }
            }
        }
    }
}

#[test]
fn single_channel_gemm_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a_m: Vec<Matrix> = (0..3)
        .map(|_| Matrix::from_vec(5, 1, (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let b_m: Vec<Matrix> = (0..3)
        .map(|_| Matrix::from_vec(1, 4, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let a = TileMatrixBatch::from_matrices(TileRole::Input, &a_m).unwrap();
    let b = TileMatrixBatch::from_matrices(TileRole::Weight, &b_m).unwrap();
    let c = batched_gemm(&a, &b).unwrap();
    for idx in 0..3 {
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(c.get(idx, i, j), a_m[idx].get(i, 0) * b_m[idx].get(0, j));
            }
        }
    }
}

#[test]
fn six_by_six_shapes_and_raw_file_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let original = random_tensor(&mut rng, 1, 6, 6, 3);
    let dir = std::env::temp_dir().join(format!("winoconv-six_by_six-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("input.bin");
    original.write_raw(std::fs::File::create(&path).unwrap()).unwrap();
    let input = Tensor4D::read_raw(std::fs::File::open(&path).unwrap()).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(input, original);

    let spec = ConvLayerSpec::new("small", (6, 6, 3), 4, (3, 3));
    let plan = build_plan(&spec, 2, 2).unwrap();
    let weights = random_weights(&mut rng, 3, 3, 3, 4);
    let b = transform_weights(&plan, &weights).unwrap();
    assert_eq!((b.count(), b.shape()), (16, (3, 4)));
    let a = transform_input(&plan, &input).unwrap();
    assert_eq!((a.count(), a.shape()), (16, (4, 3)));
    let mut ctx = GemmContext::default();
    let c = winoconv::batched_gemm_with(&a, &b, &mut ctx, false).unwrap();
    assert_eq!((c.count(), c.shape()), (16, (4, 4)));
    assert_eq!(ctx.mac_count(), 768);
    let out = winoconv::transform_output(&plan, &c).unwrap();
    assert_eq!(out.dims(), (1, 4, 4, 4).into());
}

#[test]
fn nchw_input_is_accepted() {
    let spec = ConvLayerSpec::new("nchw", (8, 8, 3), 2, (3, 3)).with_pad(Padding::uniform(1));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let input = random_tensor(&mut rng, 1, 8, 8, 3);
    let weights = random_weights(&mut rng, 3, 3, 3, 2);
    let plan = build_plan(&spec, 2, 2).unwrap();
    let a = convolve(&plan, &input, &weights).unwrap();
    let b = convolve(&plan, &input.convert_layout(Layout::Nchw), &weights).unwrap();
    assert_eq!(a, b);
}

fn small_layer() -> impl Strategy<Value = (ConvLayerSpec, usize, usize, u64)> {
    let kernel = prop_oneof![
        Just(((3usize, 3usize), (2usize, 2usize))),
        Just(((3, 3), (4, 4))),
        Just(((5, 5), (2, 2))),
        Just(((1, 7), (1, 2))),
        Just(((7, 1), (2, 1))),
    ];
    (
        kernel,
        1usize..=6,
        1usize..=6,
        0usize..=2,
        0usize..=2,
        1usize..=12,
        1usize..=12,
        any::<u64>(),
    )
        .prop_filter_map(
            "kernel must fit",
            |(((k_h, k_w), (m_h, m_w)), c, m, pad_h, pad_w, oh, ow, seed)| {
                let pad = Padding {
                    top: if k_h > 1 { pad_h } else { 0 },
                    bottom: if k_h > 1 { pad_h } else { 0 },
                    left: if k_w > 1 { pad_w } else { 0 },
                    right: if k_w > 1 { pad_w } else { 0 },
                };
                let in_h = (oh + k_h - 1).checked_sub(pad.top + pad.bottom)?;
                let in_w = (ow + k_w - 1).checked_sub(pad.left + pad.right)?;
                if in_h == 0 || in_w == 0 {
                    return None;
                }
                Some((
                    ConvLayerSpec::new("prop", (in_h, in_w, c), m, (k_h, k_w)).with_pad(pad),
                    m_h,
                    m_w,
                    seed,
                ))
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn winograd_and_im2row_match_oracle((spec, m_h, m_w, seed) in small_layer()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_tensor(&mut rng, 1, spec.in_h, spec.in_w, spec.in_c);
        let weights = random_weights(&mut rng, spec.k_h, spec.k_w, spec.in_c, spec.out_m);
        let reference = direct_conv_f64(&input, &weights, &spec).unwrap();

        let plan = build_plan(&spec, m_h, m_w).unwrap();
        let fast = convolve(&plan, &input, &weights).unwrap();
        let err = max_rel_error(fast.data(), &reference);
        prop_assert!(err <= winograd_tolerance(m_h.max(m_w)), "{:?}: {}", spec, err);

        let base = im2row_conv(&input, &weights, &spec).unwrap();
        prop_assert!(max_rel_error(base.data(), &reference) <= IM2ROW_TOLERANCE);
    }

    #[test]
    fn convolve_is_linear((spec, m_h, m_w, seed) in small_layer()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = random_tensor(&mut rng, 1, spec.in_h, spec.in_w, spec.in_c);
        let x2 = random_tensor(&mut rng, 1, spec.in_h, spec.in_w, spec.in_c);
        let w1 = random_weights(&mut rng, spec.k_h, spec.k_w, spec.in_c, spec.out_m);
        let w2 = random_weights(&mut rng, spec.k_h, spec.k_w, spec.in_c, spec.out_m);
        let plan = build_plan(&spec, m_h, m_w).unwrap();
        let tol = winograd_tolerance(m_h.max(m_w));
        let conv = |x: &Tensor4D, w: &Weights| convolve(&plan, x, w).unwrap().into_data();

        let x_sum: Vec<f32> = x1.data().iter().zip(x2.data()).map(|(a, b)| a + b).collect();
        let x_sum = Tensor4D::from_vec(x1.dims(), Layout::Nhwc, x_sum).unwrap();
        let lhs = conv(&x_sum, &w1);
        let rhs: Vec<f64> = conv(&x1, &w1).iter().zip(conv(&x2, &w1)).map(|(a, b)| (a + b) as f64).collect();
        prop_assert!(max_rel_error(&lhs, &rhs) <= tol);

        let w_sum: Vec<f32> = w1.data().iter().zip(w2.data()).map(|(a, b)| a + b).collect();
        let w_sum = Weights::new(spec.k_h, spec.k_w, spec.in_c, spec.out_m, w_sum).unwrap();
        let lhs = conv(&x1, &w_sum);
        let rhs: Vec<f64> = conv(&x1, &w1).iter().zip(conv(&x1, &w2)).map(|(a, b)| (a + b) as f64).collect();
        prop_assert!(max_rel_error(&lhs, &rhs) <= tol);
    }

    #[test]
    fn layout_round_trip_is_bit_identical(
        (n, h, w, c) in (1usize..=8, 1usize..=8, 1usize..=8, 1usize..=8),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, n, h, w, c);
        let back = t.convert_layout(Layout::Nchw).convert_layout(Layout::Nhwc);
        prop_assert_eq!(&back, &t);
        let nchw = t.convert_layout(Layout::Nchw);
        for (i, j, ch) in [(0, 0, 0), (h - 1, w - 1, c - 1), (h / 2, w / 3, c / 2)] {
            prop_assert_eq!(nchw.get(n - 1, i, j, ch), t.get(n - 1, i, j, ch));
        }
    }

    #[test]
    fn overlapping_regions_agree(
        seed in any::<u64>(),
        (r0, c0, r1, c1) in (-3isize..6, -3isize..6, -3isize..6, -3isize..6),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, 1, 6, 6, 2);
        let a = t.extract_region(0, r0, c0, 4, 4);
        let b = t.extract_region(0, r1, c1, 4, 4);
        for y in r0.max(r1)..(r0 + 4).min(r1 + 4) {
            for x in c0.max(c1)..(c0 + 4).min(c1 + 4) {
                for ch in 0..2 {
                    prop_assert_eq!(
                        a.get((y - r0) as usize, (x - c0) as usize, ch),
                        b.get((y - r1) as usize, (x - c1) as usize, ch)
                    );
                }
            }
        }
    }

    #[test]
    fn unpadded_unit_stride_output_shape(in_h in 1usize..40, in_w in 1usize..40, k_h in 1usize..8, k_w in 1usize..8) {
        prop_assume!(k_h <= in_h && k_w <= in_w);
        let spec = ConvLayerSpec::new("s", (in_h, in_w, 1), 1, (k_h, k_w));
        prop_assert_eq!(spec.output_shape().unwrap(), (in_h - k_h + 1, in_w - k_w + 1));
    }
}
