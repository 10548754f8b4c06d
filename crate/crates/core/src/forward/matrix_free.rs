//! Delay-sum realization of `y = A x` and its exact adjoint.
//!
//! No pitch matching is required; this pair is the reference every other
//! operator is checked against.

use rayon::prelude::*;

use super::data::{CavitationCube, RfData};
use crate::error::{PamError, Result};
use crate::geometry::DelayTable;
use crate::scalar::Scalar;

/// Pixels scattered per pass over the sensor rows; keeps a block of
/// waveforms cache-resident while every sensor reads it.
const PIXEL_BLOCK: usize = 16;

fn check(table: &DelayTable, pixels: usize, nt: usize) -> Result<()> {
    if table.pixels() != pixels || table.samples() != nt {
        return Err(PamError::Dimension(format!(
            "data has {pixels} pixels x {nt} samples, delay table has {} x {}",
            table.pixels(),
            table.samples()
        )));
    }
    Ok(())
}

/// `Y[m][k] = sum_n x_n[k - delta(m, n)]`; samples landing past the record are dropped.
pub fn forward_matrix_free<T: Scalar>(x: &CavitationCube<T>, table: &DelayTable) -> Result<RfData<T>> {
    let nt = x.nt();
    check(table, x.pixels(), nt)?;
    let mut y = RfData::zeros(table.sensors(), nt);
    for block in (0..x.pixels()).step_by(PIXEL_BLOCK) {
        let end = (block + PIXEL_BLOCK).min(x.pixels());
        y.as_mut_slice()
            .par_chunks_mut(nt)
            .enumerate()
            .for_each(|(m, row)| {
                let delays = table.row(m);
                for n in block..end {
                    let d = delays[n] as usize;
                    if d >= nt {
                        continue;
                    }
                    for (out, &v) in row[d..].iter_mut().zip(x.pixel(n)) {
                        *out += v;
                    }
                }
            });
    }
    Ok(y)
}

/// `x_n[k] = sum_m Y[m][k + delta(m, n)]` over in-record samples.
pub fn adjoint_matrix_free<T: Scalar>(
    y: &RfData<T>,
    table: &DelayTable,
) -> Result<CavitationCube<T>> {
    let (nx, nz) = table.grid_shape();
    let nt = y.nt();
    if y.sensors() != table.sensors() {
        return Err(PamError::Dimension(format!(
            "RF has {} sensors, delay table has {}",
            y.sensors(),
            table.sensors()
        )));
    }
    check(table, nx * nz, nt)?;
    let mut x = CavitationCube::zeros(nx, nz, nt);
    x.as_mut_slice()
        .par_chunks_mut(nt)
        .enumerate()
        .for_each(|(n, wave)| {
            for m in 0..table.sensors() {
                let d = table.get(m, n) as usize;
                if d >= nt {
                    continue;
                }
                for (out, &v) in wave.iter_mut().zip(&y.row(m)[d..]) {
                    *out += v;
                }
            }
        });
    Ok(x)
}
