//! Direct (spatial-domain) evaluation of the axial sum of 2D full-mode
//! convolutions, the extraction crop, and their adjoints.

use rayon::prelude::*;

use super::data::{CavitationCube, RfData};
use super::kernel::ConvKernel;
use crate::error::{PamError, Result};
use crate::scalar::Scalar;

/// Lateral-temporal slice of the full-mode convolution output,
/// `(N_x + N_w - 1) x (2 N_t - 1)`, row-major by lateral position.
#[derive(Clone, Debug, PartialEq)]
pub struct FullSlice<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> FullSlice<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn for_kernel(kernel: &ConvKernel) -> Self {
        Self::zeros(kernel.full_rows(), kernel.full_cols())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, p: usize, t: usize) -> T {
        self.values[p * self.cols + t]
    }

    pub fn set(&mut self, p: usize, t: usize, v: T) {
        self.values[p * self.cols + t] = v;
    }

    pub fn row(&self, p: usize) -> &[T] {
        &self.values[p * self.cols..(p + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }
}

/// Axial slice `N_z` of the 3D full-mode convolution of the datacube with the
/// kernel, i.e. `sum_a K[:, a, :] * X[:, N_z - 1 - a, :]`.
pub fn full_slice_conv<T: Scalar>(x: &CavitationCube<T>, kernel: &ConvKernel) -> Result<FullSlice<T>> {
    kernel.check_cube(x.nx(), x.nz(), x.nt())?;
    let (nx, nt) = (x.nx(), x.nt());
    let mut out = FullSlice::for_kernel(kernel);
    let cols = out.cols;
    out.values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(p, row)| {
            for a in 0..kernel.axial_size() {
                let j = kernel.pixel_row(a);
                for &(w, tau) in kernel.axial_entries(a) {
                    let w = w as usize;
                    if p < w || p - w >= nx {
                        continue;
                    }
                    let src = x.pixel(j * nx + (p - w));
                    let tau = tau as usize;
                    for (o, &v) in row[tau..tau + nt].iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
        });
    Ok(out)
}

/// Crops the `N_m x N_t` measurement window out of a full slice.
pub fn extract<T: Scalar>(full: &FullSlice<T>, kernel: &ConvKernel) -> Result<RfData<T>> {
    if full.rows != kernel.full_rows() || full.cols != kernel.full_cols() {
        return Err(PamError::Dimension(format!(
            "full slice is {}x{}, expected {}x{}",
            full.rows,
            full.cols,
            kernel.full_rows(),
            kernel.full_cols()
        )));
    }
    let (nm, nt) = (kernel.sensors(), kernel.samples());
    let start = kernel.extraction_offset();
    let mut y = RfData::zeros(nm, nt);
    for m in 0..nm {
        y.row_mut(m).copy_from_slice(&full.row(start + m)[..nt]);
    }
    Ok(y)
}

/// Adjoint of [`extract`]: zero full slice with `y` placed in the measurement window.
pub fn embed<T: Scalar>(y: &RfData<T>, kernel: &ConvKernel) -> Result<FullSlice<T>> {
    kernel.check_rf(y.sensors(), y.nt())?;
    let mut full = FullSlice::for_kernel(kernel);
    let start = kernel.extraction_offset();
    let (cols, nt) = (full.cols, y.nt());
    for m in 0..y.sensors() {
        let p = start + m;
        full.values[p * cols..p * cols + nt].copy_from_slice(y.row(m));
    }
    Ok(full)
}

/// Convolutional forward model: extraction of the axial convolution sum.
pub fn forward_conv<T: Scalar>(x: &CavitationCube<T>, kernel: &ConvKernel) -> Result<RfData<T>> {
    let full = full_slice_conv(x, kernel)?;
    extract(&full, kernel)
}

/// Adjoint of the full-slice convolution: correlates a full slice with every
/// kernel axial slice and writes the result back onto the paired datacube row.
pub fn full_slice_correlate<T: Scalar>(full: &FullSlice<T>, kernel: &ConvKernel) -> Result<CavitationCube<T>> {
    if full.rows != kernel.full_rows() || full.cols != kernel.full_cols() {
        return Err(PamError::Dimension("full slice does not match kernel".into()));
    }
    let (nx, nz, nt) = (kernel.grid_nx(), kernel.axial_size(), kernel.samples());
    let mut x = CavitationCube::zeros(nx, nz, nt);
    x.as_mut_slice()
        .par_chunks_mut(nt)
        .enumerate()
        .for_each(|(n, wave)| {
            let (i, j) = (n % nx, n / nx);
            let a = nz - 1 - j;
            for &(w, tau) in kernel.axial_entries(a) {
                let src = &full.row(w as usize + i)[tau as usize..tau as usize + nt];
                for (o, &v) in wave.iter_mut().zip(src) {
                    *o += v;
                }
            }
        });
    Ok(x)
}

/// Adjoint of [`forward_conv`]: embed, then correlate with the kernel.
pub fn adjoint_conv<T: Scalar>(y: &RfData<T>, kernel: &ConvKernel) -> Result<CavitationCube<T>> {
    kernel.check_rf(y.sensors(), y.nt())?;
    let (nx, nz, nt) = (kernel.grid_nx(), kernel.axial_size(), kernel.samples());
    let start = kernel.extraction_offset();
    let rows = start..start + y.sensors();
    // same correlation as `full_slice_correlate(embed(y))`, skipping the rows
    // of the embedded slice that are identically zero
    let mut x = CavitationCube::zeros(nx, nz, nt);
    x.as_mut_slice()
        .par_chunks_mut(nt)
        .enumerate()
        .for_each(|(n, wave)| {
            let (i, j) = (n % nx, n / nx);
            let a = nz - 1 - j;
            for &(w, tau) in kernel.axial_entries(a) {
                let p = w as usize + i;
                if !rows.contains(&p) {
                    continue;
                }
                let tau = tau as usize;
                let src = &y.row(p - start)[tau..];
                for (o, &v) in wave.iter_mut().zip(src) {
                    *o += v;
                }
            }
        });
    Ok(x)
}
