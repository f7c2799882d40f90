//! Reference convolutions: a naive direct loop nest (the correctness oracle)
//! and im2row lowering followed by a single GEMM (the comparison baseline).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gemm::{gemm_slices, Beta, GemmContext};
use crate::tensor::{ConvLayerSpec, Layout, Tensor4D, Weights};

fn check(input: &Tensor4D, weights: &Weights, spec: &ConvLayerSpec) -> Result<(usize, usize)> {
    spec.check_operands(input, weights)?;
    spec.output_shape()
}

/// `out(n,i,j,m) = Σ_{u,v,c} in(n, i·s+u−pad_t, j·s+v−pad_l, c) · w(u,v,c,m)`
/// with out-of-bounds reads as zero. Accumulates in `f64` and rounds once, so
/// its own error is negligible next to any `f32` kernel it checks.
pub fn direct_conv(input: &Tensor4D, weights: &Weights, spec: &ConvLayerSpec) -> Result<Tensor4D> {
    let out = direct_conv_f64(input, weights, spec)?;
    let (out_h, out_w) = spec.output_shape()?;
    let data = out.into_iter().map(|v| v as f32).collect();
    Tensor4D::from_vec((input.dims().n, out_h, out_w, spec.out_m), Layout::Nhwc, data)
}

/// Unrounded NHWC output of [`direct_conv`].
pub fn direct_conv_f64(input: &Tensor4D, weights: &Weights, spec: &ConvLayerSpec) -> Result<Vec<f64>> {
    let (out_h, out_w) = check(input, weights, spec)?;
    let d = input.dims();
    let (k_h, k_w, c_in, m_out) = weights.shape();
    let s = spec.stride as isize;
    let mut out = vec![0.0f64; d.n * out_h * out_w * m_out];
    let mut acc = vec![0.0f64; m_out];
    for n in 0..d.n {
        for i in 0..out_h {
            for j in 0..out_w {
                acc.fill(0.0);
                for u in 0..k_h {
                    let y = i as isize * s + u as isize - spec.pad.top as isize;
                    if y < 0 || y >= d.h as isize {
                        continue;
                    }
                    for v in 0..k_w {
                        let x = j as isize * s + v as isize - spec.pad.left as isize;
                        if x < 0 || x >= d.w as isize {
                            continue;
                        }
                        for c in 0..c_in {
                            let value = input.get(n, y as usize, x as usize, c) as f64;
                            for (m, a) in acc.iter_mut().enumerate() {
                                *a += value * weights.get(u, v, c, m) as f64;
                            }
                        }
                    }
                }
                let base = ((n * out_h + i) * out_w + j) * m_out;
                out[base..base + m_out].copy_from_slice(&acc);
            }
        }
    }
    Ok(out)
}

/// Input lowered to one row per output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    spec: ConvLayerSpec,
}

impl LoweredMatrix {
    /// `n · out_h · out_w`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `k_h · k_w · C`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The layer this matrix was lowered for.
    pub fn spec(&self) -> &ConvLayerSpec {
        &self.spec
    }
}

/// Row `ρ` (row-major over batch, output row, output column) holds the
/// receptive field of output pixel `ρ`; column `(u·k_w + v)·C + c` holds the
/// input at kernel offset `(u, v)`, channel `c`, or zero in the padding.
pub fn im2row(input: &Tensor4D, spec: &ConvLayerSpec) -> Result<LoweredMatrix> {
    let d = input.dims();
    if (d.h, d.w, d.c) != (spec.in_h, spec.in_w, spec.in_c) {
        return Err(Error::Size(format!(
            "input {:?} does not match layer {} ({}x{}x{})",
            d, spec.name, spec.in_h, spec.in_w, spec.in_c
        )));
    }
    let (out_h, out_w) = spec.output_shape()?;
    let (k_h, k_w, c) = (spec.k_h, spec.k_w, d.c);
    let rows = d.n * out_h * out_w;
    let cols = k_h * k_w * c;
    let mut data = vec![0.0; rows * cols];
    let s = spec.stride as isize;
    let mut rho = 0;
    for n in 0..d.n {
        for i in 0..out_h {
            for j in 0..out_w {
                let row = &mut data[rho * cols..(rho + 1) * cols];
                for u in 0..k_h {
                    // One kernel row is a k_w-wide window: a single zero-filled region copy.
                    let y = i as isize * s + u as isize - spec.pad.top as isize;
                    let x = j as isize * s - spec.pad.left as isize;
                    input.extract_region_into(n, y, x, 1, k_w, &mut row[u * k_w * c..(u + 1) * k_w * c]);
                }
                rho += 1;
            }
        }
    }
    Ok(LoweredMatrix {
        rows,
        cols,
        data,
        spec: spec.clone(),
    })
}

/// [`im2row_conv_with`] using a fresh default GEMM context.
pub fn im2row_conv(input: &Tensor4D, weights: &Weights, spec: &ConvLayerSpec) -> Result<Tensor4D> {
    im2row_conv_with(input, weights, spec, &mut GemmContext::default())
}

/// Baseline convolution: [`im2row`] then one
/// `[(out pixels) × (k_h·k_w·C)] · [(k_h·k_w·C) × M]` GEMM. HWIO weights are
/// already that right-hand matrix, and the product is already NHWC.
pub fn im2row_conv_with(
    input: &Tensor4D,
    weights: &Weights,
    spec: &ConvLayerSpec,
    ctx: &mut GemmContext,
) -> Result<Tensor4D> {
    let (out_h, out_w) = check(input, weights, spec)?;
    let lowered = im2row(input, spec)?;
    lowered_gemm(&lowered, weights, ctx, (input.dims().n, out_h, out_w), false)
}

/// GEMM half of the baseline, split out so it can be timed on its own. With
/// `parallel`, row blocks of the lowered matrix run on the current rayon pool.
pub fn lowered_gemm(
    lowered: &LoweredMatrix,
    weights: &Weights,
    ctx: &mut GemmContext,
    (n, out_h, out_w): (usize, usize, usize),
    parallel: bool,
) -> Result<Tensor4D> {
    let m = weights.shape().3;
    if lowered.cols != weights.data().len() / m.max(1) || lowered.rows != n * out_h * out_w {
        return Err(Error::Size(format!(
            "lowered {}x{} does not match weights {:?} / output {n}x{out_h}x{out_w}",
            lowered.rows,
            lowered.cols,
            weights.shape()
        )));
    }
    let mut out = vec![0.0; lowered.rows * m];
    let cfg = *ctx.config();
    let k = lowered.cols;
    if parallel && m > 0 && k > 0 {
        let rows_per_task = cfg.block_m;
        out.par_chunks_mut(rows_per_task * m)
            .zip(lowered.data.par_chunks(rows_per_task * k))
            .try_for_each(|(c_rows, a_rows)| {
                let rows = c_rows.len() / m;
                gemm_slices(&cfg, rows, k, m, a_rows, weights.data(), Beta::Zero, c_rows).map(|_| ())
            })?;
    } else {
        gemm_slices(
            &cfg,
            lowered.rows,
            k,
            m,
            &lowered.data,
            weights.data(),
            Beta::Zero,
            &mut out,
        )?;
    }
    ctx.add_macs((lowered.rows * k * m) as u64);
    Tensor4D::from_vec((n, out_h, out_w, m), Layout::Nhwc, out)
}
