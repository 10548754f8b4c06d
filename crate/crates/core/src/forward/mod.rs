//! Forward model `y = A x` in three equivalent realizations:
//! delay-sum (matrix-free), direct convolution and FFT convolution, each with
//! its exact adjoint.

mod conv;
mod data;
mod fft;
mod kernel;
mod matrix_free;
mod operator;

pub use conv::{
    adjoint_conv, embed, extract, forward_conv, full_slice_conv, full_slice_correlate, FullSlice,
};
pub use data::{cast_cube, cast_rf, CavitationCube, RfData};
pub use fft::{adjoint_conv_fft, forward_conv_fft, next_smooth_len, FftConvolver};
pub use kernel::{build_kernel, calibrate_extraction, ConvKernel, KernelEntry};
pub use matrix_free::{adjoint_matrix_free, forward_matrix_free};
pub use operator::{
    make_operator, ConvOperator, FftOperator, LinearOperator, MatrixFreeOperator, OperatorKind,
};
