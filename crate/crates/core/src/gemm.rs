//! Row-major single-precision GEMM with cache blocking and MAC counting.

use crate::error::{Error, Result};

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Size(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Whether [`gemm`] overwrites or accumulates into the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beta {
    /// `c = a · b`
    Zero,
    /// `c = a · b + c`
    One,
}

/// Loop blocking for [`gemm`].
///
/// The defaults keep a `block_k × block_n` panel of B (64 × 128 floats,
/// 32 KiB) resident in a typical L1 data cache while `block_m` rows of A
/// stream past it. Each B row segment spans eight 64-byte cache lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmConfig {
    pub block_m: usize,
    pub block_n: usize,
    pub block_k: usize,
    pub counters_enabled: bool,
}

impl Default for GemmConfig {
    fn default() -> Self {
        Self {
            block_m: 64,
            block_n: 128,
            block_k: 64,
            counters_enabled: true,
        }
    }
}

impl GemmConfig {
    fn validate(&self) -> Result<()> {
        if self.block_m == 0 || self.block_n == 0 || self.block_k == 0 {
            return Err(Error::Size(format!("block sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// A GEMM execution context carrying its own MAC counter. Contexts are
/// cheap; use one per thread and sum the counts.
#[derive(Debug, Clone, Default)]
pub struct GemmContext {
    config: GemmConfig,
    macs: u64,
}

impl GemmContext {
    pub fn new(config: GemmConfig) -> Self {
        Self { config, macs: 0 }
    }

    pub fn config(&self) -> &GemmConfig {
        &self.config
    }

    /// `c = a · b (+ c)`; see [`gemm`].
    pub fn gemm(&mut self, a: &Matrix, b: &Matrix, beta: Beta, c: &mut Matrix) -> Result<()> {
        let macs = gemm(&self.config, a, b, beta, c)?;
        self.macs += macs;
        Ok(())
    }

    /// Multiply-accumulates since the last reset.
    pub fn mac_count(&self) -> u64 {
        self.macs
    }

    pub fn reset_counters(&mut self) {
        self.macs = 0;
    }

    /// Adds MACs performed elsewhere (e.g. by worker threads).
    pub fn add_macs(&mut self, macs: u64) {
        if self.config.counters_enabled {
            self.macs += macs;
        }
    }
}

/// `c = a · b` (`Beta::Zero`) or `c += a · b` (`Beta::One`) for row-major
/// `a: p×q`, `b: q×s`, `c: p×s`. Returns the number of multiply-accumulates
/// performed (`p·q·s`), or 0 when counters are disabled.
pub fn gemm(config: &GemmConfig, a: &Matrix, b: &Matrix, beta: Beta, c: &mut Matrix) -> Result<u64> {
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(Error::Size(format!(
            "gemm ({}x{}) * ({}x{}) -> ({}x{})",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )));
    }
    gemm_slices(
        config,
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        &b.data,
        beta,
        &mut c.data,
    )
}

/// Slice form of [`gemm`]: `a` is `p×q`, `b` is `q×s`, `c` is `p×s`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_slices(
    config: &GemmConfig,
    p: usize,
    q: usize,
    s: usize,
    a: &[f32],
    b: &[f32],
    beta: Beta,
    c: &mut [f32],
) -> Result<u64> {
    config.validate()?;
    if a.len() != p * q || b.len() != q * s || c.len() != p * s {
        return Err(Error::Size(format!(
            "gemm buffers {}/{}/{} do not match {p}x{q} * {q}x{s}",
            a.len(),
            b.len(),
            c.len()
        )));
    }
    if beta == Beta::Zero {
        c.fill(0.0);
    }
    if p > 0 && q > 0 && s > 0 {
        blocked(config, p, q, s, a, b, c);
    }
    Ok(if config.counters_enabled {
        (p * q * s) as u64
    } else {
        0
    })
}

fn blocked(cfg: &GemmConfig, p: usize, q: usize, s: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    for jc in (0..s).step_by(cfg.block_n) {
        let jn = (jc + cfg.block_n).min(s);
        for pc in (0..q).step_by(cfg.block_k) {
            let kn = (pc + cfg.block_k).min(q);
            for ic in (0..p).step_by(cfg.block_m) {
                let im = (ic + cfg.block_m).min(p);
                let mut i = ic;
                while i + 4 <= im {
                    kernel_4rows(q, s, a, b, c, i, pc..kn, jc..jn);
                    i += 4;
                }
                for i in i..im {
                    kernel_1row(q, s, a, b, c, i, pc..kn, jc..jn);
                }
            }
        }
    }
}

type Span = std::ops::Range<usize>;

#[inline]
#[allow(clippy::too_many_arguments)]
fn kernel_1row(q: usize, s: usize, a: &[f32], b: &[f32], c: &mut [f32], i: usize, ks: Span, js: Span) {
    let c_row = &mut c[i * s + js.start..i * s + js.end];
    for k in ks {
        let aik = a[i * q + k];
        let b_row = &b[k * s + js.start..k * s + js.end];
        for (cv, &bv) in c_row.iter_mut().zip(b_row) {
            *cv += aik * bv;
        }
    }
}

/// Updates four consecutive rows of C per pass so each B row segment is
/// loaded once for four FMAs.
#[inline]
#[allow(clippy::too_many_arguments)]
fn kernel_4rows(q: usize, s: usize, a: &[f32], b: &[f32], c: &mut [f32], i: usize, ks: Span, js: Span) {
    let width = js.end - js.start;
    let (_, rest) = c.split_at_mut(i * s);
    let (r0, rest) = rest.split_at_mut(s);
    let (r1, rest) = rest.split_at_mut(s);
    let (r2, rest) = rest.split_at_mut(s);
    let r3 = &mut rest[..s];
    let c0 = &mut r0[js.clone()];
    let c1 = &mut r1[js.clone()];
    let c2 = &mut r2[js.clone()];
    let c3 = &mut r3[js.clone()];
    for k in ks {
        let a0 = a[i * q + k];
        let a1 = a[(i + 1) * q + k];
        let a2 = a[(i + 2) * q + k];
        let a3 = a[(i + 3) * q + k];
        let b_row = &b[k * s + js.start..k * s + js.start + width];
        for x in 0..width {
            let bv = b_row[x];
            c0[x] += a0 * bv;
            c1[x] += a1 * bv;
            c2[x] += a2 * bv;
            c3[x] += a3 * bv;
        }
    }
}
