//! Multi-channel Winograd / Cook-Toom convolution for NHWC tensors.
//!
//! * [`tensor`]: tensors, filter banks and layer geometry.
//! * [`cooktoom`]: exact construction and verification of `F(m, r)` transforms.
//! * [`gemm`]: blocked row-major GEMM with MAC counting.
//! * [`engine`]: the transform → batched GEMM → inverse transform pipeline.
//! * [`baseline`]: direct convolution oracle and the im2row + GEMM baseline.
//!
//! ```
//! use winoconv::{build_plan, convolve, direct_conv, ConvLayerSpec, Layout, Tensor4D, Weights};
//!
//! let spec = ConvLayerSpec::new("demo", (6, 6, 3), 4, (3, 3));
//! let input = Tensor4D::from_vec((1, 6, 6, 3), Layout::Nhwc, (0..108).map(|v| v as f32 / 100.0).collect())?;
//! let weights = Weights::new(3, 3, 3, 4, vec![0.1; 108])?;
//! let plan = build_plan(&spec, 2, 2)?;
//! let fast = convolve(&plan, &input, &weights)?;
//! let slow = direct_conv(&input, &weights, &spec)?;
//! assert!(fast.data().iter().zip(slow.data()).all(|(a, b)| (a - b).abs() < 1e-4));
//! # Ok::<(), winoconv::Error>(())
//! ```

pub mod accuracy;
pub mod baseline;
pub mod cooktoom;
pub mod engine;
mod error;
pub mod gemm;
pub mod tensor;

pub use accuracy::{max_rel_error, winograd_tolerance, IM2ROW_TOLERANCE};
pub use baseline::{
    direct_conv, direct_conv_f64, im2row, im2row_conv, im2row_conv_with, lowered_gemm, LoweredMatrix,
};
pub use cooktoom::{
    default_points, generate_1d, generate_1d_with, verify_transform_set, GenerateOptions, RationalMatrix,
    TransformSet, VerifyReport,
};
pub use engine::{
    batched_gemm, batched_gemm_with, build_plan, build_plan_with, convolve, convolve_prepared,
    transform_input, transform_input_with, transform_output, transform_output_with, transform_weights,
    ExecOptions, PlanOptions, TileMatrixBatch, TileRole, WinogradPlan,
};
pub use error::{Error, Result};
pub use gemm::{gemm, Beta, GemmConfig, GemmContext, Matrix};
pub use tensor::{conv_output_shape, ConvLayerSpec, Dims, Fill, Layout, Padding, Region, Tensor4D, Weights};

/// Exact rational type used by [`cooktoom`].
pub use num_rational::BigRational;
