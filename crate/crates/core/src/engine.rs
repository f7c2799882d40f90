//! Region-wise multi-channel Winograd convolution over NHWC tensors.
//!
//! The pipeline has three stages:
//!
//! 1. [`transform_input`] cuts the (implicitly zero-padded) input into
//!    overlapping `t_h × t_w` regions, maps every region into the transform
//!    domain with `BT_h · x · BT_wᵀ` and scatters element `(u, v)` of each
//!    transformed tile into GEMM operand `u·t_w + v`, row = region, column =
//!    channel. Because channels are innermost in NHWC, every scatter is a
//!    contiguous copy of `C` values.
//! 2. [`batched_gemm`] multiplies each of the `t_h·t_w` operands `[R×C]` with
//!    the matching transformed filter matrix `[C×M]`. This performs the
//!    element-wise products and the sum over input channels in one GEMM.
//! 3. [`transform_output`] gathers element `(u, v)` of each region's tile back
//!    from result matrix `u·t_w + v`, applies `AT_h · tile · AT_wᵀ` and writes
//!    the `m_h × m_w` block into the NHWC output, cropping ragged edge tiles.
//!
//! Filter transforms ([`transform_weights`]) depend only on the layer and can
//! be computed once and reused for every input.

use rayon::prelude::*;

use crate::cooktoom::{default_points, generate_1d_with, GenerateOptions, TransformSet};
use crate::error::{Error, Result};
use crate::gemm::{gemm_slices, Beta, GemmConfig, GemmContext, Matrix};
use crate::tensor::{ConvLayerSpec, Layout, Tensor4D, Weights};

/// Options for [`build_plan_with`].
#[derive(Debug, Clone, Copy)]
pub struct PlanOptions {
    /// Batch size the plan is built for.
    pub batch: usize,
    pub generate: GenerateOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            batch: 1,
            generate: GenerateOptions::default(),
        }
    }
}

/// Precomputed tile geometry and transforms for one layer and one
/// `F(m_h × m_w, k_h × k_w)` variant.
#[derive(Debug, Clone)]
pub struct WinogradPlan {
    spec: ConvLayerSpec,
    batch: usize,
    ts_h: TransformSet,
    ts_w: TransformSet,
    out: (usize, usize),
    grid: (usize, usize),
}

impl WinogradPlan {
    pub fn spec(&self) -> &ConvLayerSpec {
        &self.spec
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-axis transforms (identity for `1 × N` kernels).
    pub fn ts_h(&self) -> &TransformSet {
        &self.ts_h
    }

    /// Column-axis transforms (identity for `N × 1` kernels).
    pub fn ts_w(&self) -> &TransformSet {
        &self.ts_w
    }

    /// Output block computed per region, `(m_h, m_w)`.
    pub fn tile_out(&self) -> (usize, usize) {
        (self.ts_h.m(), self.ts_w.m())
    }

    /// Input region size, `(t_h, t_w)`.
    pub fn tile_in(&self) -> (usize, usize) {
        (self.ts_h.t(), self.ts_w.t())
    }

    /// Number of GEMMs per convolution, `t_h · t_w`.
    pub fn tile_area(&self) -> usize {
        self.ts_h.t() * self.ts_w.t()
    }

    /// `(out_h, out_w)`.
    pub fn output_hw(&self) -> (usize, usize) {
        self.out
    }

    /// Regions per axis, `(ceil(out_h / m_h), ceil(out_w / m_w))`.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Total region count `R` over the batch.
    pub fn regions(&self) -> usize {
        self.batch * self.grid.0 * self.grid.1
    }

    /// Multiply-accumulates performed by the batched GEMM stage.
    pub fn gemm_macs(&self) -> u64 {
        (self.tile_area() * self.regions() * self.spec.in_c * self.spec.out_m) as u64
    }

    /// Short label such as `F(4x4,3x3)` or `F(2,1x7)`.
    pub fn label(&self) -> String {
        let (k_h, k_w) = (self.spec.k_h, self.spec.k_w);
        let (m_h, m_w) = self.tile_out();
        if k_h == 1 {
            format!("F({m_w},1x{k_w})")
        } else if k_w == 1 {
            format!("F({m_h},{k_h}x1)")
        } else {
            format!("F({m_h}x{m_w},{k_h}x{k_w})")
        }
    }
}

/// [`build_plan_with`] for batch size 1 and default options.
pub fn build_plan(spec: &ConvLayerSpec, m_h: usize, m_w: usize) -> Result<WinogradPlan> {
    build_plan_with(spec, m_h, m_w, PlanOptions::default())
}

/// Binds a layer to an output tile size. A kernel axis of length 1 always uses
/// the identity transform (`m = 1` on that axis) whatever tile size is asked
/// for, so `1 × 7` layers are transformed along the columns only.
pub fn build_plan_with(
    spec: &ConvLayerSpec,
    m_h: usize,
    m_w: usize,
    options: PlanOptions,
) -> Result<WinogradPlan> {
    if spec.stride != 1 {
        return Err(Error::UnsupportedVariant(format!(
            "layer {}: Winograd plans need stride 1, got {}",
            spec.name, spec.stride
        )));
    }
    if options.batch == 0 {
        return Err(Error::Size("batch size must be positive".into()));
    }
    let out = spec.output_shape()?;
    let axis = |m: usize, k: usize| -> Result<TransformSet> {
        if k == 1 {
            return Ok(TransformSet::identity());
        }
        if m == 0 {
            return Err(Error::Construction("output tile size must be positive".into()));
        }
        generate_1d_with(m, k, &default_points(m + k - 2), options.generate)
    };
    let ts_h = axis(m_h, spec.k_h)?;
    let ts_w = axis(m_w, spec.k_w)?;
    let grid = (out.0.div_ceil(ts_h.m()), out.1.div_ceil(ts_w.m()));
    Ok(WinogradPlan {
        spec: spec.clone(),
        batch: options.batch,
        ts_h,
        ts_w,
        out,
        grid,
    })
}

/// Role of the matrices in a [`TileMatrixBatch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileRole {
    /// Transformed input regions, `R × C`.
    Input,
    /// Transformed filters, `C × M`.
    Weight,
    /// GEMM results, `R × M`.
    Output,
}

/// `count` same-shaped row-major matrices stored back to back, one per
/// transform-domain tile element.
#[derive(Debug, Clone, PartialEq)]
pub struct TileMatrixBatch {
    role: TileRole,
    count: usize,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl TileMatrixBatch {
    pub fn zeros(role: TileRole, count: usize, rows: usize, cols: usize) -> Self {
        Self {
            role,
            count,
            rows,
            cols,
            data: vec![0.0; count * rows * cols],
        }
    }

    pub fn from_matrices(role: TileRole, matrices: &[Matrix]) -> Result<Self> {
        let (rows, cols) = matrices.first().map_or((0, 0), Matrix::shape);
        let mut data = Vec::with_capacity(matrices.len() * rows * cols);
        for m in matrices {
            if m.shape() != (rows, cols) {
                return Err(Error::Size(format!(
                    "batch matrices must share a shape: {:?} vs {:?}",
                    m.shape(),
                    (rows, cols)
                )));
            }
            data.extend_from_slice(m.data());
        }
        Ok(Self {
            role,
            count: matrices.len(),
            rows,
            cols,
            data,
        })
    }

    pub fn role(&self) -> TileRole {
        self.role
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(rows, cols)` of every matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major data of matrix `idx`.
    pub fn matrix(&self, idx: usize) -> &[f32] {
        let len = self.rows * self.cols;
        &self.data[idx * len..(idx + 1) * len]
    }

    pub fn to_matrix(&self, idx: usize) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.matrix(idx).to_vec()).expect("shape")
    }

    #[inline]
    pub fn get(&self, idx: usize, row: usize, col: usize) -> f32 {
        self.data[(idx * self.rows + row) * self.cols + col]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn expect(&self, role: TileRole, count: usize, shape: (usize, usize)) -> Result<()> {
        if self.role != role || self.count != count || self.shape() != shape {
            return Err(Error::Size(format!(
                "expected {count} {role:?} matrices of {}x{}, got {} {:?} matrices of {}x{}",
                shape.0, shape.1, self.count, self.role, self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// Execution knobs shared by the pipeline stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Run regions and tile GEMMs on the current rayon pool.
    pub parallel: bool,
    pub gemm: GemmConfig,
}

/// `dst += coeff · src`, skipping the work for zero coefficients.
#[inline]
fn axpy(dst: &mut [f32], coeff: f32, src: &[f32]) {
    if coeff == 0.0 {
        return;
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += coeff * s;
    }
}

/// Applies `left · tile · rightᵀ` to a tile whose elements are vectors of
/// `lanes` values (channels). `tile` is `left.cols() × right.cols()`, the
/// result is `left.rows() × right.rows()`.
fn sandwich(
    left: &Matrix,
    right: &Matrix,
    tile: &[f32],
    lanes: usize,
    scratch: &mut Vec<f32>,
    out: &mut [f32],
) {
    let (rows_out, rows_in) = left.shape();
    let (cols_out, cols_in) = right.shape();
    debug_assert_eq!(tile.len(), rows_in * cols_in * lanes);
    debug_assert_eq!(out.len(), rows_out * cols_out * lanes);

    scratch.clear();
    scratch.resize(rows_out * cols_in * lanes, 0.0);
    for p in 0..rows_out {
        for i in 0..rows_in {
            let coeff = left.get(p, i);
            for j in 0..cols_in {
                let src = &tile[(i * cols_in + j) * lanes..][..lanes];
                axpy(&mut scratch[(p * cols_in + j) * lanes..][..lanes], coeff, src);
            }
        }
    }
    out.fill(0.0);
    for p in 0..rows_out {
        for q in 0..cols_out {
            let dst = &mut out[(p * cols_out + q) * lanes..][..lanes];
            for j in 0..cols_in {
                axpy(
                    dst,
                    right.get(q, j),
                    &scratch[(p * cols_in + j) * lanes..][..lanes],
                );
            }
        }
    }
}

/// Transforms every filter with `G_h · w · G_wᵀ` and scatters element
/// `(u, v)` into matrix `u·t_w + v` at row `c`, column `m`.
pub fn transform_weights(plan: &WinogradPlan, weights: &Weights) -> Result<TileMatrixBatch> {
    let spec = &plan.spec;
    let expected = (spec.k_h, spec.k_w, spec.in_c, spec.out_m);
    if weights.shape() != expected {
        return Err(Error::Size(format!(
            "weights {:?} do not match layer {} ({:?})",
            weights.shape(),
            spec.name,
            expected
        )));
    }
    let lanes = spec.in_c * spec.out_m;
    let tile_area = plan.tile_area();
    // With C·M lanes per element, the transformed tile is already laid out as
    // the whole batch: element (u, v) is the contiguous C×M matrix u·t_w + v.
    let mut scratch = Vec::new();
    let mut data = vec![0.0; tile_area * lanes];
    sandwich(
        plan.ts_h.g_f32(),
        plan.ts_w.g_f32(),
        weights.data(),
        lanes,
        &mut scratch,
        &mut data,
    );
    Ok(TileMatrixBatch {
        role: TileRole::Weight,
        count: tile_area,
        rows: spec.in_c,
        cols: spec.out_m,
        data,
    })
}

fn check_input(plan: &WinogradPlan, input: &Tensor4D) -> Result<()> {
    let d = input.dims();
    let spec = &plan.spec;
    if (d.n, d.h, d.w, d.c) != (plan.batch, spec.in_h, spec.in_w, spec.in_c) {
        return Err(Error::Size(format!(
            "input {:?} does not match layer {} ({}x{}x{}x{})",
            d, spec.name, plan.batch, spec.in_h, spec.in_w, spec.in_c
        )));
    }
    Ok(())
}

/// Transformed tiles for one row of regions: `tiles_w` tiles of
/// `tile_area × C` values each.
fn transform_region_row(plan: &WinogradPlan, input: &Tensor4D, n: usize, ti: usize, out: &mut [f32]) {
    let c = plan.spec.in_c;
    let (m_h, m_w) = plan.tile_out();
    let (t_h, t_w) = plan.tile_in();
    let tile_len = t_h * t_w * c;
    let mut region = vec![0.0; tile_len];
    let mut scratch = Vec::new();
    let row0 = (ti * m_h) as isize - plan.spec.pad.top as isize;
    for (tj, dst) in out.chunks_exact_mut(tile_len).enumerate() {
        let col0 = (tj * m_w) as isize - plan.spec.pad.left as isize;
        input.extract_region_into(n, row0, col0, t_h, t_w, &mut region);
        sandwich(
            plan.ts_h.bt_f32(),
            plan.ts_w.bt_f32(),
            &region,
            c,
            &mut scratch,
            dst,
        );
    }
}

/// [`transform_input_with`] using sequential execution.
pub fn transform_input(plan: &WinogradPlan, input: &Tensor4D) -> Result<TileMatrixBatch> {
    transform_input_with(plan, input, &ExecOptions::default())
}

/// Stage 1: region extraction, `BT_h · x · BT_wᵀ`, and scatter into
/// `tile_area` matrices of shape `R × C`. Regions are numbered row-major over
/// (batch, tile row, tile column); region `(i, j)` starts at input
/// coordinate `(i·m_h − pad_top, j·m_w − pad_left)`.
pub fn transform_input_with(
    plan: &WinogradPlan,
    input: &Tensor4D,
    exec: &ExecOptions,
) -> Result<TileMatrixBatch> {
    check_input(plan, input)?;
    let c = plan.spec.in_c;
    let (tiles_h, tiles_w) = plan.grid;
    let tile_area = plan.tile_area();
    let regions = plan.regions();
    let row_len = tiles_w * tile_area * c;

    let mut staged = vec![0.0; plan.batch * tiles_h * row_len];
    let work = |(row, chunk): (usize, &mut [f32])| {
        transform_region_row(plan, input, row / tiles_h, row % tiles_h, chunk);
    };
    if exec.parallel {
        staged.par_chunks_mut(row_len).enumerate().for_each(work);
    } else {
        staged.chunks_mut(row_len).enumerate().for_each(work);
    }

    let mut batch = TileMatrixBatch::zeros(TileRole::Input, tile_area, regions, c);
    for (rho, tile) in staged.chunks_exact(tile_area * c).enumerate() {
        for (idx, elem) in tile.chunks_exact(c).enumerate() {
            let dst = (idx * regions + rho) * c;
            batch.data[dst..dst + c].copy_from_slice(elem);
        }
    }
    Ok(batch)
}

/// [`batched_gemm_with`] using a fresh default context, sequentially.
pub fn batched_gemm(a: &TileMatrixBatch, b: &TileMatrixBatch) -> Result<TileMatrixBatch> {
    batched_gemm_with(a, b, &mut GemmContext::default(), false)
}

/// Stage 2: `C_i = A_i · B_i` for every tile element `i`, counting MACs in
/// `ctx`. With `parallel`, the independent GEMMs and row blocks within each
/// GEMM are spread over the current rayon pool.
pub fn batched_gemm_with(
    a: &TileMatrixBatch,
    b: &TileMatrixBatch,
    ctx: &mut GemmContext,
    parallel: bool,
) -> Result<TileMatrixBatch> {
    if a.count != b.count || a.cols != b.rows {
        return Err(Error::Size(format!(
            "batched gemm: {} of {}x{} against {} of {}x{}",
            a.count, a.rows, a.cols, b.count, b.rows, b.cols
        )));
    }
    let (r, c, m) = (a.rows, a.cols, b.cols);
    let mut out = TileMatrixBatch::zeros(TileRole::Output, a.count, r, m);
    let cfg = *ctx.config();
    if r * m > 0 {
        if parallel {
            let rows_per_task = cfg.block_m.max(1);
            out.data
                .par_chunks_mut(r * m)
                .zip(a.data.par_chunks(r * c.max(1)))
                .zip(b.data.par_chunks(c.max(1) * m))
                .try_for_each(|((cm, am), bm)| {
                    cm.par_chunks_mut(rows_per_task * m)
                        .zip(am.par_chunks(rows_per_task * c.max(1)))
                        .try_for_each(|(c_rows, a_rows)| {
                            let rows = c_rows.len() / m;
                            gemm_slices(&cfg, rows, c, m, &a_rows[..rows * c], bm, Beta::Zero, c_rows)
                                .map(|_| ())
                        })
                })?;
        } else {
            for idx in 0..a.count {
                let len_c = r * m;
                gemm_slices(
                    &cfg,
                    r,
                    c,
                    m,
                    a.matrix(idx),
                    b.matrix(idx),
                    Beta::Zero,
                    &mut out.data[idx * len_c..(idx + 1) * len_c],
                )?;
            }
        }
    }
    ctx.add_macs((a.count * r * c * m) as u64);
    Ok(out)
}

/// [`transform_output_with`] using sequential execution.
pub fn transform_output(plan: &WinogradPlan, cbatch: &TileMatrixBatch) -> Result<Tensor4D> {
    transform_output_with(plan, cbatch, &ExecOptions::default())
}

/// Stage 3: gather each region's `tile_area` values per output channel,
/// apply `AT_h · tile · AT_wᵀ` and write the block at output offset
/// `(i·m_h, j·m_w)`, cropped to the true output extent.
pub fn transform_output_with(
    plan: &WinogradPlan,
    cbatch: &TileMatrixBatch,
    exec: &ExecOptions,
) -> Result<Tensor4D> {
    let m = plan.spec.out_m;
    let regions = plan.regions();
    let tile_area = plan.tile_area();
    cbatch.expect(TileRole::Output, tile_area, (regions, m))?;

    let (out_h, out_w) = plan.out;
    let (m_h, m_w) = plan.tile_out();
    let (tiles_h, tiles_w) = plan.grid;
    let mut output = vec![0.0; plan.batch * out_h * out_w * m];
    // One chunk per region row: output rows [ti·m_h, ti·m_h + m_h) of image n
    // are contiguous in NHWC, so chunks are disjoint.
    let mut chunks: Vec<(usize, usize, &mut [f32])> = Vec::with_capacity(plan.batch * tiles_h);
    for (n, image) in output.chunks_mut(out_h * out_w * m).enumerate() {
        let mut rest = image;
        for ti in 0..tiles_h {
            let rows = m_h.min(out_h - ti * m_h);
            let (head, tail) = rest.split_at_mut(rows * out_w * m);
            chunks.push((n, ti, head));
            rest = tail;
        }
    }

    let work = |(n, ti, dst): (usize, usize, &mut [f32])| {
        let mut tile = vec![0.0; tile_area * m];
        let mut block = vec![0.0; m_h * m_w * m];
        let mut scratch = Vec::new();
        let rows = dst.len() / (out_w * m);
        for tj in 0..tiles_w {
            let rho = (n * tiles_h + ti) * tiles_w + tj;
            for idx in 0..tile_area {
                let src = (idx * regions + rho) * m;
                tile[idx * m..(idx + 1) * m].copy_from_slice(&cbatch.data[src..src + m]);
            }
            sandwich(
                plan.ts_h.at_f32(),
                plan.ts_w.at_f32(),
                &tile,
                m,
                &mut scratch,
                &mut block,
            );
            let cols = m_w.min(out_w - tj * m_w);
            for p in 0..rows {
                let start = (p * out_w + tj * m_w) * m;
                dst[start..start + cols * m].copy_from_slice(&block[p * m_w * m..(p * m_w + cols) * m]);
            }
        }
    };
    if exec.parallel {
        chunks.into_par_iter().for_each(work);
    } else {
        chunks.into_iter().for_each(work);
    }
    Tensor4D::from_vec((plan.batch, out_h, out_w, m), Layout::Nhwc, output)
}

/// [`convolve_prepared`] with filters transformed on the fly.
pub fn convolve(plan: &WinogradPlan, input: &Tensor4D, weights: &Weights) -> Result<Tensor4D> {
    let transformed = transform_weights(plan, weights)?;
    convolve_prepared(
        plan,
        input,
        &transformed,
        &mut GemmContext::default(),
        &ExecOptions::default(),
    )
}

/// Runs the three stages against filters already produced by
/// [`transform_weights`]; the same filter batch serves any number of inputs.
pub fn convolve_prepared(
    plan: &WinogradPlan,
    input: &Tensor4D,
    weights: &TileMatrixBatch,
    ctx: &mut GemmContext,
    exec: &ExecOptions,
) -> Result<Tensor4D> {
    weights.expect(
        TileRole::Weight,
        plan.tile_area(),
        (plan.spec.in_c, plan.spec.out_m),
    )?;
    let a = transform_input_with(plan, input, exec)?;
    let c = batched_gemm_with(&a, weights, ctx, exec.parallel)?;
    transform_output_with(plan, &c, exec)
}
