//! Dense 4-D tensors, filter banks and convolution layer geometry.
//!
//! Tensors are stored as a flat `f32` buffer with an explicit [`Layout`] tag.
//! NHWC is the native layout of the engine: the channels of one pixel are
//! contiguous, so a region of pixels can be moved with whole-channel copies.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Memory order of a [`Tensor4D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Channels innermost: offset `((n·h + i)·w + j)·c + ch`.
    Nhwc,
    /// Planes contiguous: offset `((n·c + ch)·h + i)·w + j`.
    Nchw,
}

impl Layout {
    fn tag(self) -> u8 {
        match self {
            Layout::Nhwc => 0,
            Layout::Nchw => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Layout::Nhwc),
            1 => Ok(Layout::Nchw),
            other => Err(Error::Input(format!("unknown layout tag {other}"))),
        }
    }
}

/// Logical extent of a tensor, independent of its layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub const fn new(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self { n, h, w, c }
    }

    pub fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<(usize, usize, usize, usize)> for Dims {
    fn from((n, h, w, c): (usize, usize, usize, usize)) -> Self {
        Self { n, h, w, c }
    }
}

/// Initial contents for [`Tensor4D::new`].
#[derive(Debug, Clone)]
pub enum Fill {
    Constant(f32),
    /// Values already laid out in the tensor's declared layout.
    Values(Vec<f32>),
}

/// A dense 4-D `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4D {
    dims: Dims,
    layout: Layout,
    data: Vec<f32>,
}

impl Tensor4D {
    pub fn new(dims: impl Into<Dims>, layout: Layout, fill: Fill) -> Result<Self> {
        let dims = dims.into();
        let data = match fill {
            Fill::Constant(v) => vec![v; dims.len()],
            Fill::Values(values) => {
                if values.len() != dims.len() {
                    return Err(Error::Size(format!(
                        "tensor {:?} needs {} values, got {}",
                        dims,
                        dims.len(),
                        values.len()
                    )));
                }
                values
            }
        };
        Ok(Self { dims, layout, data })
    }

    pub fn zeros(dims: impl Into<Dims>, layout: Layout) -> Self {
        let dims = dims.into();
        Self {
            dims,
            layout,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_vec(dims: impl Into<Dims>, layout: Layout, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, layout, Fill::Values(data))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Flat offset of logical element `(n, i, j, ch)` under this tensor's layout.
    #[inline]
    pub fn offset(&self, n: usize, i: usize, j: usize, ch: usize) -> usize {
        offset_of(self.dims, self.layout, n, i, j, ch)
    }

    #[inline]
    pub fn get(&self, n: usize, i: usize, j: usize, ch: usize) -> f32 {
        self.data[self.offset(n, i, j, ch)]
    }

    /// Re-orders the buffer into `target`, preserving every logical value.
    pub fn convert_layout(&self, target: Layout) -> Tensor4D {
        if target == self.layout {
            return self.clone();
        }
        let d = self.dims;
        let mut data = vec![0.0; d.len()];
        for n in 0..d.n {
            for i in 0..d.h {
                for j in 0..d.w {
                    for ch in 0..d.c {
                        data[offset_of(d, target, n, i, j, ch)] = self.get(n, i, j, ch);
                    }
                }
            }
        }
        Tensor4D {
            dims: d,
            layout: target,
            data,
        }
    }

    /// Copies the `rows × cols` pixel window of batch element `n` whose top-left
    /// corner is at `(row0, col0)`. Coordinates outside the tensor read as zero,
    /// which is how padding and ragged edge tiles are realized.
    pub fn extract_region(&self, n: usize, row0: isize, col0: isize, rows: usize, cols: usize) -> Region {
        let mut data = vec![0.0; rows * cols * self.dims.c];
        self.extract_region_into(n, row0, col0, rows, cols, &mut data);
        Region {
            rows,
            cols,
            channels: self.dims.c,
            data,
        }
    }

    /// Like [`extract_region`](Self::extract_region) but writes into a caller
    /// buffer of length `rows · cols · c` (pixel-major, channels innermost).
    pub fn extract_region_into(
        &self,
        n: usize,
        row0: isize,
        col0: isize,
        rows: usize,
        cols: usize,
        out: &mut [f32],
    ) {
        let d = self.dims;
        let c = d.c;
        assert_eq!(out.len(), rows * cols * c, "region buffer length");
        out.fill(0.0);
        if n >= d.n {
            return;
        }
        for r in 0..rows {
            let i = row0 + r as isize;
            if i < 0 || i >= d.h as isize {
                continue;
            }
            let i = i as usize;
            // Columns [lo, hi) of the window fall inside the tensor.
            let lo = (-col0).clamp(0, cols as isize) as usize;
            let hi = (d.w as isize - col0).clamp(0, cols as isize) as usize;
            if lo >= hi {
                continue;
            }
            match self.layout {
                Layout::Nhwc => {
                    let j0 = (col0 + lo as isize) as usize;
                    let src = self.offset(n, i, j0, 0);
                    let len = (hi - lo) * c;
                    let dst = (r * cols + lo) * c;
                    out[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
                }
                Layout::Nchw => {
                    for k in lo..hi {
                        let j = (col0 + k as isize) as usize;
                        let dst = (r * cols + k) * c;
                        for ch in 0..c {
                            out[dst + ch] = self.get(n, i, j, ch);
                        }
                    }
                }
            }
        }
    }

    /// Serializes in the raw tensor format: four little-endian `u32` dims
    /// (n, h, w, c), one layout byte (0 = NHWC, 1 = NCHW), then the buffer as
    /// little-endian `f32` in layout order.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        for dim in [self.dims.n, self.dims.h, self.dims.w, self.dims.c] {
            let dim = u32::try_from(dim).map_err(|_| Error::Size(format!("dimension {dim} exceeds u32")))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        w.write_all(&[self.layout.tag()])?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Inverse of [`write_raw`](Self::write_raw).
    pub fn read_raw<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 17];
        r.read_exact(&mut header)
            .map_err(|e| Error::Input(format!("truncated tensor header: {e}")))?;
        let dim = |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap()) as usize;
        let dims = Dims::new(dim(0), dim(1), dim(2), dim(3));
        let layout = Layout::from_tag(header[16])?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != dims.len() * 4 {
            return Err(Error::Size(format!(
                "tensor {:?} needs {} payload bytes, got {}",
                dims,
                dims.len() * 4,
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { dims, layout, data })
    }
}

#[inline]
fn offset_of(d: Dims, layout: Layout, n: usize, i: usize, j: usize, ch: usize) -> usize {
    match layout {
        Layout::Nhwc => ((n * d.h + i) * d.w + j) * d.c + ch,
        Layout::Nchw => ((n * d.c + ch) * d.h + i) * d.w + j,
    }
}

/// A window of pixels copied out of a tensor, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Region {
    #[inline]
    pub fn get(&self, r: usize, col: usize, ch: usize) -> f32 {
        self.data[(r * self.cols + col) * self.channels + ch]
    }
}

/// Convolution filters in `k_h × k_w × C × M` order (HWIO): for a fixed
/// kernel offset the `C × M` block is contiguous and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    k_h: usize,
    k_w: usize,
    c: usize,
    m: usize,
    data: Vec<f32>,
}

impl Weights {
    pub fn new(k_h: usize, k_w: usize, c: usize, m: usize, data: Vec<f32>) -> Result<Self> {
        let expected = k_h * k_w * c * m;
        if data.len() != expected {
            return Err(Error::Size(format!(
                "weights {k_h}x{k_w}x{c}x{m} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { k_h, k_w, c, m, data })
    }

    pub fn zeros(k_h: usize, k_w: usize, c: usize, m: usize) -> Self {
        Self {
            k_h,
            k_w,
            c,
            m,
            data: vec![0.0; k_h * k_w * c * m],
        }
    }

    /// `(k_h, k_w, C, M)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.k_h, self.k_w, self.c, self.m)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize, m: usize) -> f32 {
        self.data[((u * self.k_w + v) * self.c + c) * self.m + m]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: usize, m: usize, value: f32) {
        self.data[((u * self.k_w + v) * self.c + c) * self.m + m] = value;
    }

    /// The contiguous `C × M` block for kernel offset `(u, v)`.
    pub fn tap(&self, u: usize, v: usize) -> &[f32] {
        let len = self.c * self.m;
        let start = (u * self.k_w + v) * len;
        &self.data[start..start + len]
    }
}

/// Zero padding applied around the input, in pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

/// Shape of one convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConvLayerSpec {
    pub name: String,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_m: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub pad: Padding,
    pub stride: usize,
}

impl ConvLayerSpec {
    /// A stride-1, unpadded layer.
    pub fn new(
        name: impl Into<String>,
        (in_h, in_w, in_c): (usize, usize, usize),
        out_m: usize,
        (k_h, k_w): (usize, usize),
    ) -> Self {
        Self {
            name: name.into(),
            in_h,
            in_w,
            in_c,
            out_m,
            k_h,
            k_w,
            pad: Padding::default(),
            stride: 1,
        }
    }

    pub fn with_pad(mut self, pad: Padding) -> Self {
        self.pad = pad;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Output spatial extent `(out_h, out_w)`.
    pub fn output_shape(&self) -> Result<(usize, usize)> {
        conv_output_shape(self)
    }

    /// Input tensor dims for a batch of `n`.
    pub fn input_dims(&self, n: usize) -> Dims {
        Dims::new(n, self.in_h, self.in_w, self.in_c)
    }

    /// Checks an input tensor and filter bank against this layer.
    pub fn check_operands(&self, input: &Tensor4D, weights: &Weights) -> Result<()> {
        let d = input.dims();
        if (d.h, d.w, d.c) != (self.in_h, self.in_w, self.in_c) {
            return Err(Error::Size(format!(
                "layer {} expects input {}x{}x{}, got {}x{}x{}",
                self.name, self.in_h, self.in_w, self.in_c, d.h, d.w, d.c
            )));
        }
        let expected = (self.k_h, self.k_w, self.in_c, self.out_m);
        if weights.shape() != expected {
            return Err(Error::Size(format!(
                "layer {} expects weights {:?}, got {:?}",
                self.name,
                expected,
                weights.shape()
            )));
        }
        Ok(())
    }
}

/// Standard convolution output geometry:
/// `out = floor((in + pad_lo + pad_hi − k) / stride) + 1` per axis.
pub fn conv_output_shape(spec: &ConvLayerSpec) -> Result<(usize, usize)> {
    if spec.k_h == 0 || spec.k_w == 0 {
        return Err(Error::Shape(format!("layer {}: empty kernel", spec.name)));
    }
    if spec.stride == 0 {
        return Err(Error::Shape(format!(
            "layer {}: stride must be positive",
            spec.name
        )));
    }
    let axis = |input: usize, lo: usize, hi: usize, k: usize| -> Option<usize> {
        let padded = input + lo + hi;
        (padded >= k).then(|| (padded - k) / spec.stride + 1)
    };
    let out_h = axis(spec.in_h, spec.pad.top, spec.pad.bottom, spec.k_h);
    let out_w = axis(spec.in_w, spec.pad.left, spec.pad.right, spec.k_w);
    match (out_h, out_w) {
        (Some(h), Some(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::Shape(format!(
            "layer {}: kernel {}x{} does not fit padded input {}x{}",
            spec.name,
            spec.k_h,
            spec.k_w,
            spec.in_h + spec.pad.top + spec.pad.bottom,
            spec.in_w + spec.pad.left + spec.pad.right
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fill() {
        let t = Tensor4D::new((1, 2, 2, 1), Layout::Nhwc, Fill::Constant(0.0)).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn fill_length_mismatch() {
        let err = Tensor4D::new((1, 2, 2, 1), Layout::Nhwc, Fill::Values(vec![1.0; 3]));
        assert!(matches!(err, Err(Error::Size(_))));
    }

    #[test]
    fn single_pixel_layouts_coincide() {
        let t = Tensor4D::from_vec((1, 1, 1, 4), Layout::Nhwc, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.convert_layout(Layout::Nchw).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn two_pixels_two_channels() {
        // pixels a, b; channels 0, 1
        let (a0, a1, b0, b1) = (1.0, 2.0, 3.0, 4.0);
        let t = Tensor4D::from_vec((1, 1, 2, 2), Layout::Nhwc, vec![a0, a1, b0, b1]).unwrap();
        let nchw = t.convert_layout(Layout::Nchw);
        assert_eq!(nchw.data(), &[a0, b0, a1, b1]);
        assert_eq!(nchw.convert_layout(Layout::Nhwc), t);
    }

    #[test]
    fn same_layout_conversion_is_a_copy() {
        let t = Tensor4D::from_vec((1, 2, 1, 2), Layout::Nchw, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.convert_layout(Layout::Nchw), t);
    }

    #[test]
    fn output_shapes() {
        let valid = ConvLayerSpec::new("v", (6, 6, 3), 4, (3, 3));
        assert_eq!(conv_output_shape(&valid).unwrap(), (4, 4));

        let same = ConvLayerSpec::new("s", (4, 4, 1), 1, (3, 3)).with_pad(Padding::uniform(1));
        assert_eq!(conv_output_shape(&same).unwrap(), (4, 4));

        let too_small = ConvLayerSpec::new("t", (2, 2, 1), 1, (3, 3));
        assert!(matches!(conv_output_shape(&too_small), Err(Error::Shape(_))));

        let strided = ConvLayerSpec::new("st", (7, 8, 1), 1, (3, 3)).with_stride(2);
        assert_eq!(conv_output_shape(&strided).unwrap(), (3, 3));

        let rect = ConvLayerSpec::new("r", (17, 17, 1), 1, (1, 7)).with_pad(Padding {
            top: 0,
            bottom: 0,
            left: 3,
            right: 3,
        });
        assert_eq!(conv_output_shape(&rect).unwrap(), (17, 17));
    }

    fn ramp(h: usize, w: usize, c: usize) -> Tensor4D {
        let data = (0..h * w * c).map(|v| v as f32 + 1.0).collect();
        Tensor4D::from_vec((1, h, w, c), Layout::Nhwc, data).unwrap()
    }

    #[test]
    fn interior_region_is_a_copy() {
        let t = ramp(6, 6, 2);
        let r = t.extract_region(0, 1, 2, 4, 4);
        for i in 0..4 {
            for j in 0..4 {
                for c in 0..2 {
                    assert_eq!(r.get(i, j, c), t.get(0, i + 1, j + 2, c));
                }
            }
        }
    }

    #[test]
    fn region_over_top_left_corner() {
        let t = ramp(4, 4, 1);
        let r = t.extract_region(0, -1, -1, 4, 4);
        for k in 0..4 {
            assert_eq!(r.get(0, k, 0), 0.0);
            assert_eq!(r.get(k, 0, 0), 0.0);
        }
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(r.get(i, j, 0), t.get(0, i - 1, j - 1, 0));
            }
        }
    }

    #[test]
    fn region_fully_outside() {
        let t = ramp(4, 4, 3);
        assert!(t.extract_region(0, 10, 0, 2, 2).data.iter().all(|&v| v == 0.0));
        assert!(t.extract_region(0, 0, -5, 3, 3).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nchw_region_matches_nhwc_region() {
        let t = ramp(5, 4, 3);
        let nchw = t.convert_layout(Layout::Nchw);
        assert_eq!(
            t.extract_region(0, -1, 2, 4, 4),
            nchw.extract_region(0, -1, 2, 4, 4)
        );
    }

    #[test]
    fn raw_format_layout() {
        let t = Tensor4D::from_vec((1, 1, 1, 2), Layout::Nchw, vec![1.5, -2.0]).unwrap();
        let mut buf = Vec::new();
        t.write_raw(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 1 + 8);
        assert_eq!(&buf[..16], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(buf[16], 1);
        assert_eq!(&buf[17..21], &1.5f32.to_le_bytes());
        assert_eq!(Tensor4D::read_raw(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn raw_format_rejects_bad_payload() {
        let t = Tensor4D::zeros((1, 2, 2, 1), Layout::Nhwc);
        let mut buf = Vec::new();
        t.write_raw(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(Tensor4D::read_raw(buf.as_slice()), Err(Error::Size(_))));
        buf[16] = 7;
        assert!(matches!(Tensor4D::read_raw(buf.as_slice()), Err(Error::Input(_))));
    }

    #[test]
    fn weights_indexing_is_hwio() {
        let w = Weights::new(1, 2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(w.get(0, 1, 1, 2), 11.0);
        assert_eq!(w.tap(0, 1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert!(Weights::new(3, 3, 1, 1, vec![0.0; 8]).is_err());
    }
}
