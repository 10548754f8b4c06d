use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::conv::{adjoint_conv, forward_conv};
use super::data::{CavitationCube, RfData};
use super::fft::FftConvolver;
use super::kernel::{build_kernel, ConvKernel};
use super::matrix_free::{adjoint_matrix_free, forward_matrix_free};
use crate::error::{PamError, Result};
use crate::geometry::{DelayTable, Geometry};
use crate::scalar::Scalar;

/// A forward model `A` together with its adjoint `A^T`.
pub trait LinearOperator<T: Scalar>: Send + Sync {
    /// `(nx, nz, nt)` of the source domain.
    fn cube_shape(&self) -> (usize, usize, usize);

    /// `(sensors, nt)` of the measurement domain.
    fn rf_shape(&self) -> (usize, usize);

    fn apply(&self, x: &CavitationCube<T>) -> Result<RfData<T>>;

    fn adjoint(&self, y: &RfData<T>) -> Result<CavitationCube<T>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    MatrixFree,
    Conv,
    Fft,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 3] = [OperatorKind::MatrixFree, OperatorKind::Conv, OperatorKind::Fft];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::MatrixFree => "matrix-free",
            OperatorKind::Conv => "conv",
            OperatorKind::Fft => "fft",
        }
    }
}

impl FromStr for OperatorKind {
    type Err = PamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix-free" | "matrixfree" => Ok(OperatorKind::MatrixFree),
            "conv" => Ok(OperatorKind::Conv),
            "fft" => Ok(OperatorKind::Fft),
            other => Err(PamError::Config(format!("unknown operator '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatrixFreeOperator {
    table: DelayTable,
}

impl MatrixFreeOperator {
    pub fn new(table: DelayTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &DelayTable {
        &self.table
    }
}

impl<T: Scalar> LinearOperator<T> for MatrixFreeOperator {
    fn cube_shape(&self) -> (usize, usize, usize) {
        let (nx, nz) = self.table.grid_shape();
        (nx, nz, self.table.samples())
    }

    fn rf_shape(&self) -> (usize, usize) {
        (self.table.sensors(), self.table.samples())
    }

    fn apply(&self, x: &CavitationCube<T>) -> Result<RfData<T>> {
        forward_matrix_free(x, &self.table)
    }

    fn adjoint(&self, y: &RfData<T>) -> Result<CavitationCube<T>> {
        adjoint_matrix_free(y, &self.table)
    }
}

/// Direct spatial-domain convolution with the sparse kernel.
#[derive(Clone, Debug)]
pub struct ConvOperator {
    kernel: ConvKernel,
}

impl ConvOperator {
    pub fn new(kernel: ConvKernel) -> Self {
        Self { kernel }
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }
}

impl<T: Scalar> LinearOperator<T> for ConvOperator {
    fn cube_shape(&self) -> (usize, usize, usize) {
        let k = &self.kernel;
        (k.grid_nx(), k.axial_size(), k.samples())
    }

    fn rf_shape(&self) -> (usize, usize) {
        (self.kernel.sensors(), self.kernel.samples())
    }

    fn apply(&self, x: &CavitationCube<T>) -> Result<RfData<T>> {
        forward_conv(x, &self.kernel)
    }

    fn adjoint(&self, y: &RfData<T>) -> Result<CavitationCube<T>> {
        adjoint_conv(y, &self.kernel)
    }
}

#[derive(Debug)]
pub struct FftOperator<T: Scalar> {
    kernel: ConvKernel,
    plan: FftConvolver<T>,
}

impl<T: Scalar> FftOperator<T> {
    pub fn new(kernel: ConvKernel) -> Self {
        let plan = FftConvolver::new(&kernel);
        Self { kernel, plan }
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }
}

impl<T: Scalar> LinearOperator<T> for FftOperator<T> {
    fn cube_shape(&self) -> (usize, usize, usize) {
        let k = &self.kernel;
        (k.grid_nx(), k.axial_size(), k.samples())
    }

    fn rf_shape(&self) -> (usize, usize) {
        (self.kernel.sensors(), self.kernel.samples())
    }

    fn apply(&self, x: &CavitationCube<T>) -> Result<RfData<T>> {
        self.plan.forward(x, &self.kernel)
    }

    fn adjoint(&self, y: &RfData<T>) -> Result<CavitationCube<T>> {
        self.plan.adjoint(y, &self.kernel)
    }
}

/// Builds the requested operator for a geometry (kernel-based kinds require pitch matching).
pub fn make_operator<T: Scalar>(
    kind: OperatorKind,
    geometry: &Geometry,
    table: &DelayTable,
) -> Result<Box<dyn LinearOperator<T>>> {
    Ok(match kind {
        OperatorKind::MatrixFree => Box::new(MatrixFreeOperator::new(table.clone())),
        OperatorKind::Conv => Box::new(ConvOperator::new(build_kernel(
            table,
            &geometry.array,
            &geometry.grid,
            &geometry.acq,
        )?)),
        OperatorKind::Fft => Box::new(FftOperator::<T>::new(build_kernel(
            table,
            &geometry.array,
            &geometry.grid,
            &geometry.acq,
        )?)),
    })
}
