use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PamError, Result};
use crate::forward::{CavitationCube, LinearOperator, RfData};
use crate::scalar::Scalar;

use super::vecops::{norm, norm_sq};

/// `scale * A` for a borrowed operator `A`.
pub struct ScaledOperator<'a, T: Scalar> {
    inner: &'a dyn LinearOperator<T>,
    scale: T,
}

impl<'a, T: Scalar> ScaledOperator<'a, T> {
    pub fn new(inner: &'a dyn LinearOperator<T>, scale: f64) -> Self {
        Self {
            inner,
            scale: T::of(scale),
        }
    }
}

impl<T: Scalar> LinearOperator<T> for ScaledOperator<'_, T> {
    fn cube_shape(&self) -> (usize, usize, usize) {
        self.inner.cube_shape()
    }

    fn rf_shape(&self) -> (usize, usize) {
        self.inner.rf_shape()
    }

    fn apply(&self, x: &CavitationCube<T>) -> Result<RfData<T>> {
        let mut y = self.inner.apply(x)?;
        y.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
        Ok(y)
    }

    fn adjoint(&self, y: &RfData<T>) -> Result<CavitationCube<T>> {
        let mut x = self.inner.adjoint(y)?;
        x.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
        Ok(x)
    }
}

/// Spectral norm `‖A‖₂` by power iteration on `A^T A` from a seeded Gaussian start.
///
/// Stops when the estimate changes by less than `rel_tol` between iterations.
pub fn operator_norm<T: Scalar>(
    op: &dyn LinearOperator<T>,
    max_iter: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<f64> {
    let (nx, nz, nt) = op.cube_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (0..nx * nz * nt)
        .map(|_| T::of(StandardNormal.sample(&mut rng)))
        .collect();
    let mut v = CavitationCube::from_vec(nx, nz, nt, start)?;
    let mut estimate = 0.0;
    for it in 1..=max_iter.max(1) {
        let n = norm(v.as_slice());
        if n == 0.0 || !n.is_finite() {
            return Err(PamError::Numerical {
                iteration: it,
                message: format!("power iteration vector norm is {n}"),
            });
        }
        let inv = T::of(1.0 / n);
        v.as_mut_slice().iter_mut().for_each(|x| *x *= inv);
        let av = op.apply(&v)?;
        let next = norm_sq(av.as_slice()).sqrt();
        v = op.adjoint(&av)?;
        if it > 1 && (next - estimate).abs() <= rel_tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

/// Root-mean-square column norm `‖A‖_F / sqrt(cols)`, estimated from one
/// seeded Gaussian probe as `‖A v‖ / ‖v‖`.
pub fn rms_column_norm<T: Scalar>(op: &dyn LinearOperator<T>, seed: u64) -> Result<f64> {
    let (nx, nz, nt) = op.cube_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = (0..nx * nz * nt)
        .map(|_| T::of(StandardNormal.sample(&mut rng)))
        .collect();
    let v = CavitationCube::from_vec(nx, nz, nt, probe)?;
    let av = op.apply(&v)?;
    Ok((norm_sq(av.as_slice()) / norm_sq(v.as_slice())).sqrt())
}
