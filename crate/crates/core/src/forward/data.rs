use crate::error::{dim_err, PamError, Result};
use crate::scalar::Scalar;

/// Source datacube `X` of shape `nx x nz x nt`.
///
/// Stored pixel-major with time contiguous: sample `k` of pixel `n = j*nx + i`
/// lives at `n * nt + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CavitationCube<T> {
    nx: usize,
    nz: usize,
    nt: usize,
    values: Vec<T>,
}

impl<T: Scalar> CavitationCube<T> {
    pub fn zeros(nx: usize, nz: usize, nt: usize) -> Self {
        Self {
            nx,
            nz,
            nt,
            values: vec![T::zero(); nx * nz * nt],
        }
    }

    pub fn from_vec(nx: usize, nz: usize, nt: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != nx * nz * nt {
            return dim_err(format!(
                "cube {nx}x{nz}x{nt} needs {} values, got {}",
                nx * nz * nt,
                values.len()
            ));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(PamError::Numerical {
                iteration: 0,
                message: format!("cube entry {p} is not finite"),
            });
        }
        Ok(Self { nx, nz, nt, values })
    }

    /// Cube with the same shape as `self`, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.nx, self.nz, self.nt)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn pixels(&self) -> usize {
        self.nx * self.nz
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.nz, self.nt)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.values[(j * self.nx + i) * self.nt + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        self.values[(j * self.nx + i) * self.nt + k] = v;
    }

    /// Temporal waveform of flattened pixel `n`.
    pub fn pixel(&self, n: usize) -> &[T] {
        &self.values[n * self.nt..(n + 1) * self.nt]
    }

    pub fn pixel_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.values[n * self.nt..(n + 1) * self.nt]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            nx: self.nx,
            nz: self.nz,
            nt: self.nt,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Recorded RF matrix `Y` of shape `sensors x nt`, row-major by sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RfData<T> {
    sensors: usize,
    nt: usize,
    values: Vec<T>,
}

impl<T: Scalar> RfData<T> {
    pub fn zeros(sensors: usize, nt: usize) -> Self {
        Self {
            sensors,
            nt,
            values: vec![T::zero(); sensors * nt],
        }
    }

    pub fn from_vec(sensors: usize, nt: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != sensors * nt {
            return dim_err(format!(
                "RF data {sensors}x{nt} needs {} values, got {}",
                sensors * nt,
                values.len()
            ));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(PamError::Numerical {
                iteration: 0,
                message: format!("RF entry {p} is not finite"),
            });
        }
        Ok(Self { sensors, nt, values })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.sensors, self.nt)
    }

    pub fn get(&self, m: usize, k: usize) -> T {
        self.values[m * self.nt + k]
    }

    pub fn set(&mut self, m: usize, k: usize, v: T) {
        self.values[m * self.nt + k] = v;
    }

    pub fn row(&self, m: usize) -> &[T] {
        &self.values[m * self.nt..(m + 1) * self.nt]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [T] {
        &mut self.values[m * self.nt..(m + 1) * self.nt]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Converts between sample types, e.g. to run the `f32` path on `f64` data.
pub fn cast_cube<S: Scalar, T: Scalar>(x: &CavitationCube<S>) -> CavitationCube<T> {
    CavitationCube {
        nx: x.nx,
        nz: x.nz,
        nt: x.nt,
        values: x.values.iter().map(|v| T::of(v.as_f64())).collect(),
    }
}

pub fn cast_rf<S: Scalar, T: Scalar>(y: &RfData<S>) -> RfData<T> {
    RfData {
        sensors: y.sensors,
        nt: y.nt,
        values: y.values.iter().map(|v| T::of(v.as_f64())).collect(),
    }
}
