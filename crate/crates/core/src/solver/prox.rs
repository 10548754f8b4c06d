use crate::error::{PamError, Result};
use crate::forward::{CavitationCube, LinearOperator, RfData};
use crate::scalar::Scalar;

/// `sign(v) * max(|v| - tau, 0)`.
pub fn soft_threshold_scalar<T: Scalar>(v: T, tau: T) -> T {
    let mag = v.abs() - tau;
    if mag > T::zero() {
        mag.copysign(v)
    } else {
        T::zero()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(PamError::Config(format!("soft threshold must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// Elementwise proximal map of `tau * ‖·‖₁`.
pub fn soft_threshold<T: Scalar>(v: &CavitationCube<T>, tau: f64) -> Result<CavitationCube<T>> {
    check_tau(tau)?;
    let t = T::of(tau);
    Ok(v.map(|x| soft_threshold_scalar(x, t)))
}

/// Writes `soft_threshold(src, tau)` into `dst` without allocating.
pub fn soft_threshold_into<T: Scalar>(src: &[T], tau: f64, dst: &mut [T]) -> Result<()> {
    check_tau(tau)?;
    let t = T::of(tau);
    use rayon::prelude::*;
    dst.par_iter_mut()
        .zip(src.par_iter())
        .for_each(|(d, &s)| *d = soft_threshold_scalar(s, t));
    Ok(())
}

/// `q`-quantile with linear interpolation between order statistics
/// (`h = q (n - 1)`). Reorders `values`.
pub fn quantile(values: &mut [f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(PamError::Config("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(PamError::Config(format!("quantile level must lie in [0, 1], got {q}")));
    }
    let n = values.len();
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut a, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return Ok(a);
    }
    let b = rest.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(a + frac * (b - a))
}

/// Sparsity weight `quantile(|A^T y|, q)`.
pub fn lambda_heuristic<T: Scalar>(y: &RfData<T>, op: &dyn LinearOperator<T>, q: f64) -> Result<f64> {
    if y.as_slice().is_empty() {
        return Err(PamError::Dimension("lambda heuristic needs non-empty RF data".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(PamError::Config(format!("lambda quantile must lie in (0, 1), got {q}")));
    }
    let back = op.adjoint(y)?;
    let mut mags: Vec<f64> = back.as_slice().iter().map(|v| v.as_f64().abs()).collect();
    quantile(&mut mags, q)
}
