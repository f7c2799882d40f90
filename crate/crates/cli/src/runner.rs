//! Timing and checking of one layer under several convolution variants.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use winoconv::{
    baseline, build_plan, direct_conv_f64, im2row, max_rel_error, transform_input_with,
    transform_output_with, transform_weights, winograd_tolerance, ConvLayerSpec, ExecOptions, GemmConfig,
    GemmContext, Layout, Tensor4D, Weights, IM2ROW_TOLERANCE,
};

use crate::error::BenchError;
use crate::layers::Variant;

/// Seed used for inputs and filters unless `--seed` says otherwise.
pub const DEFAULT_SEED: u64 = 0x5eed_2019;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub reps: usize,
    /// Compare every variant against the direct-convolution oracle and
    /// enforce the tolerance policy.
    pub check: bool,
    pub seed: u64,
    pub threads: usize,
    pub gemm: GemmConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 5,
            check: false,
            seed: DEFAULT_SEED,
            threads: 1,
            gemm: GemmConfig::default(),
        }
    }
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub layer: String,
    pub variant: String,
    /// Median input-transform (or im2row lowering) time.
    pub t_in_ns: u64,
    pub t_gemm_ns: u64,
    /// Median output-transform time; zero for im2row, whose GEMM result is
    /// already the NHWC output.
    pub t_out_ns: u64,
    /// Median of the per-rep stage sums.
    pub t_total_ns: u64,
    pub macs: u64,
    /// [`max_rel_error`] against the direct oracle when checking, otherwise
    /// against the im2row result.
    pub max_rel_err: f64,
    /// Baseline total / this variant's total.
    pub speedup: f64,
}

impl BenchRecord {
    /// Error bound for this record's variant.
    pub fn tolerance(&self) -> f64 {
        match self.variant.parse::<Variant>().ok().and_then(Variant::winograd) {
            Some((_, (m_h, m_w))) => winograd_tolerance(m_h.max(m_w)),
            None => IM2ROW_TOLERANCE,
        }
    }

    pub fn within_tolerance(&self) -> bool {
        self.max_rel_err <= self.tolerance()
    }
}

/// A variant that was requested but cannot run on the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub layer: String,
    pub variant: Variant,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LayerRun {
    pub records: Vec<BenchRecord>,
    pub skipped: Vec<Skipped>,
}

fn median(mut samples: Vec<u64>) -> u64 {
    samples.sort_unstable();
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

#[derive(Default)]
struct Samples {
    input: Vec<u64>,
    gemm: Vec<u64>,
    output: Vec<u64>,
    total: Vec<u64>,
}

impl Samples {
    fn push(&mut self, input: u64, gemm: u64, output: u64) {
        self.input.push(input);
        self.gemm.push(gemm);
        self.output.push(output);
        self.total.push(input + gemm + output);
    }
}

struct Measured {
    samples: Samples,
    macs: u64,
    output: Tensor4D,
}

/// Deterministic input and filters for a layer.
pub fn layer_operands(spec: &ConvLayerSpec, seed: u64) -> (Tensor4D, Weights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<f32> = (0..spec.in_h * spec.in_w * spec.in_c)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    let weights: Vec<f32> = (0..spec.k_h * spec.k_w * spec.in_c * spec.out_m)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    (
        Tensor4D::from_vec(spec.input_dims(1), Layout::Nhwc, input).expect("sized from spec"),
        Weights::new(spec.k_h, spec.k_w, spec.in_c, spec.out_m, weights).expect("sized from spec"),
    )
}

fn measure_im2row(
    spec: &ConvLayerSpec,
    input: &Tensor4D,
    weights: &Weights,
    opts: &BenchOptions,
) -> Result<Measured, BenchError> {
    let (out_h, out_w) = spec.output_shape()?;
    let parallel = opts.threads > 1;
    let mut samples = Samples::default();
    let mut result = None;
    let mut macs = 0;
    for _ in 0..opts.reps {
        let mut ctx = GemmContext::new(opts.gemm);
        let start = Instant::now();
        let lowered = im2row(input, spec)?;
        let t_in = elapsed_ns(start);
        let start = Instant::now();
        let out = baseline::lowered_gemm(&lowered, weights, &mut ctx, (1, out_h, out_w), parallel)?;
        let t_gemm = elapsed_ns(start);
        samples.push(t_in, t_gemm, 0);
        macs = ctx.mac_count();
        result = Some(out);
    }
    Ok(Measured {
        samples,
        macs,
        output: result.expect("reps >= 1"),
    })
}

fn measure_winograd(
    spec: &ConvLayerSpec,
    tile: (usize, usize),
    input: &Tensor4D,
    weights: &Weights,
    opts: &BenchOptions,
) -> Result<Measured, BenchError> {
    let plan = build_plan(spec, tile.0, tile.1)?;
    // Filters are transformed once and reused, as for inference.
    let transformed = transform_weights(&plan, weights)?;
    let exec = ExecOptions {
        parallel: opts.threads > 1,
        gemm: opts.gemm,
    };
    let mut samples = Samples::default();
    let mut result = None;
    let mut macs = 0;
    for _ in 0..opts.reps {
        let mut ctx = GemmContext::new(opts.gemm);
        let start = Instant::now();
        let a = transform_input_with(&plan, input, &exec)?;
        let t_in = elapsed_ns(start);
        let start = Instant::now();
        let c = winoconv::batched_gemm_with(&a, &transformed, &mut ctx, exec.parallel)?;
        let t_gemm = elapsed_ns(start);
        let start = Instant::now();
        let out = transform_output_with(&plan, &c, &exec)?;
        let t_out = elapsed_ns(start);
        samples.push(t_in, t_gemm, t_out);
        macs = ctx.mac_count();
        result = Some(out);
    }
    Ok(Measured {
        samples,
        macs,
        output: result.expect("reps >= 1"),
    })
}

/// Runs `variants` (plus the im2row baseline, always) on `spec` and returns
/// one record per variant that applies. Inapplicable variants are listed in
/// [`LayerRun::skipped`].
pub fn run_layer_bench(
    spec: &ConvLayerSpec,
    variants: &[Variant],
    opts: &BenchOptions,
) -> Result<LayerRun, BenchError> {
    if opts.reps == 0 {
        return Err(BenchError::input("--reps must be at least 1"));
    }
    if opts.threads == 0 {
        return Err(BenchError::input("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| BenchError::input(format!("cannot start {} threads: {e}", opts.threads)))?;
    pool.install(|| run_in_pool(spec, variants, opts))
}

fn run_in_pool(
    spec: &ConvLayerSpec,
    variants: &[Variant],
    opts: &BenchOptions,
) -> Result<LayerRun, BenchError> {
    let (input, weights) = layer_operands(spec, opts.seed);
    let baseline = measure_im2row(spec, &input, &weights, opts)?;
    let reference: Vec<f64> = if opts.check {
        direct_conv_f64(&input, &weights, spec)?
    } else {
        baseline.output.data().iter().map(|&v| v as f64).collect()
    };
    let baseline_total = median(baseline.samples.total.clone()) as f64;

    let mut run = LayerRun::default();
    let mut ordered: Vec<Variant> = Vec::new();
    for &v in variants {
        if v != Variant::Im2row && !ordered.contains(&v) {
            ordered.push(v);
        }
    }
    ordered.push(Variant::Im2row);
    for variant in ordered {
        let measured = match variant.winograd() {
            None => None,
            Some((_, tile)) => {
                if let Some(reason) = variant.inapplicable_reason(spec) {
                    run.skipped.push(Skipped {
                        layer: spec.name.clone(),
                        variant,
                        reason,
                    });
                    continue;
                }
                Some(measure_winograd(spec, tile, &input, &weights, opts)?)
            }
        };
        let measured = measured.as_ref().unwrap_or(&baseline);
        let total = median(measured.samples.total.clone());
        run.records.push(BenchRecord {
            layer: spec.name.clone(),
            variant: variant.name().to_string(),
            t_in_ns: median(measured.samples.input.clone()),
            t_gemm_ns: median(measured.samples.gemm.clone()),
            t_out_ns: median(measured.samples.output.clone()),
            t_total_ns: total,
            macs: measured.macs,
            max_rel_err: max_rel_error(measured.output.data(), &reference),
            speedup: if variant == Variant::Im2row {
                1.0
            } else {
                baseline_total / (total.max(1) as f64)
            },
        });
    }
    Ok(run)
}

/// Fails with [`BenchError::Correctness`] naming every record over its bound.
pub fn enforce_tolerances(records: &[BenchRecord]) -> Result<(), BenchError> {
    let bad: Vec<String> = records
        .iter()
        .filter(|r| !r.within_tolerance())
        .map(|r| {
            format!(
                "{} {}: {:e} > {:e}",
                r.layer,
                r.variant,
                r.max_rel_err,
                r.tolerance()
            )
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(BenchError::Correctness(bad.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use winoconv::Padding;

    fn quick() -> BenchOptions {
        BenchOptions {
            reps: 1,
            check: true,
            ..BenchOptions::default()
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![5, 1, 3]), 3);
        assert_eq!(median(vec![4, 1, 3, 2]), 2);
        assert_eq!(median(vec![7]), 7);
    }

    #[test]
    fn baseline_only_has_unit_speedup() {
        let spec = ConvLayerSpec::new("l", (8, 8, 4), 4, (3, 3)).with_pad(Padding::uniform(1));
        let run = run_layer_bench(&spec, &[Variant::Im2row], &quick()).unwrap();
        assert_eq!(run.records.len(), 1);
        let r = &run.records[0];
        assert_eq!(r.variant, "im2row");
        assert_eq!(r.speedup, 1.0);
        assert_eq!(r.t_out_ns, 0);
        assert_eq!(r.macs, 8 * 8 * 9 * 4 * 4);
        assert!(r.within_tolerance());
    }

    #[test]
    fn records_checked_variants() {
        let spec = ConvLayerSpec::new("l", (16, 16, 8), 8, (3, 3)).with_pad(Padding::uniform(1));
        let run = run_layer_bench(&spec, &[Variant::F4x4_3x3, Variant::F2x2_5x5], &quick()).unwrap();
        assert_eq!(run.records.len(), 2);
        assert_eq!(run.skipped.len(), 1);
        assert_eq!(run.skipped[0].variant, Variant::F2x2_5x5);
        let wino = &run.records[0];
        assert_eq!(wino.variant, "f4x4_3x3");
        assert_eq!(wino.macs * 4, run.records[1].macs);
        assert!(wino.within_tolerance(), "{}", wino.max_rel_err);
        enforce_tolerances(&run.records).unwrap();
    }

    #[test]
    fn tolerance_violation_is_reported() {
        let mut r = BenchRecord {
            layer: "x".into(),
            variant: "f2x2_3x3".into(),
            t_in_ns: 0,
            t_gemm_ns: 0,
            t_out_ns: 0,
            t_total_ns: 0,
            macs: 0,
            max_rel_err: 2e-4,
            speedup: 1.0,
        };
        assert!(matches!(
            enforce_tolerances(&[r.clone()]),
            Err(BenchError::Correctness(_))
        ));
        r.variant = "f4x4_3x3".into();
        assert!(enforce_tolerances(&[r]).is_ok());
    }

    #[test]
    fn zero_reps_is_an_input_error() {
        let spec = ConvLayerSpec::new("l", (8, 8, 1), 1, (3, 3));
        let opts = BenchOptions { reps: 0, ..quick() };
        assert!(matches!(
            run_layer_bench(&spec, &[], &opts),
            Err(BenchError::Input { .. })
        ));
    }
}
