//! Conjugate gradients on the shifted normal equations `(A^T A + σ I) x = b`.

use crate::error::{PamError, Result};
use crate::forward::{CavitationCube, LinearOperator};
use crate::scalar::Scalar;

use super::vecops::{axpy, dot, norm, update};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖(A^T A + σ I) x - b‖ / ‖b‖` from the recursive residual.
    pub relative_residual: f64,
    pub converged: bool,
}

fn check(shift: f64, tol: f64, max_iter: usize) -> Result<()> {
    if !(shift >= 0.0) || !shift.is_finite() {
        return Err(PamError::Config(format!("CG shift must be finite and >= 0, got {shift}")));
    }
    if !(tol > 0.0) {
        return Err(PamError::Config(format!("CG tolerance must be > 0, got {tol}")));
    }
    if max_iter == 0 {
        return Err(PamError::Config("CG iteration cap must be >= 1".into()));
    }
    Ok(())
}

fn normal_apply<T: Scalar>(
    op: &dyn LinearOperator<T>,
    v: &CavitationCube<T>,
    shift: T,
) -> Result<CavitationCube<T>> {
    let mut out = op.adjoint(&op.apply(v)?)?;
    if shift != T::zero() {
        axpy(shift, v.as_slice(), out.as_mut_slice());
    }
    Ok(out)
}

/// Solves from `x = 0`.
pub fn cg_normal_equations<T: Scalar>(
    op: &dyn LinearOperator<T>,
    rhs: &CavitationCube<T>,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(CavitationCube<T>, CgOutcome)> {
    let mut x = rhs.zeros_like();
    let (outcome, _) = cg_solve(op, rhs, shift, tol, max_iter, &mut x, false)?;
    Ok((x, outcome))
}

/// Solves starting from the current contents of `x`.
pub fn cg_normal_equations_warm<T: Scalar>(
    op: &dyn LinearOperator<T>,
    rhs: &CavitationCube<T>,
    shift: f64,
    tol: f64,
    max_iter: usize,
    x: &mut CavitationCube<T>,
) -> Result<CgOutcome> {
    cg_solve(op, rhs, shift, tol, max_iter, x, true).map(|(o, _)| o)
}

/// Core iteration; also returns the final recursive residual `b - (A^T A + σ I) x`.
pub(crate) fn cg_solve<T: Scalar>(
    op: &dyn LinearOperator<T>,
    rhs: &CavitationCube<T>,
    shift: f64,
    tol: f64,
    max_iter: usize,
    x: &mut CavitationCube<T>,
    warm: bool,
) -> Result<(CgOutcome, CavitationCube<T>)> {
    check(shift, tol, max_iter)?;
    if !rhs.same_shape(x) {
        return Err(PamError::Dimension("CG right-hand side and iterate differ in shape".into()));
    }
    if !rhs.is_finite() {
        return Err(PamError::Numerical {
            iteration: 0,
            message: "non-finite right-hand side".into(),
        });
    }
    let sigma = T::of(shift);
    let b_norm = norm(rhs.as_slice());
    if b_norm == 0.0 {
        x.as_mut_slice().iter_mut().for_each(|v| *v = T::zero());
        let outcome = CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
        return Ok((outcome, rhs.zeros_like()));
    }

    let mut r = rhs.clone();
    if warm {
        let ax = normal_apply(op, x, sigma)?;
        update(r.as_mut_slice(), ax.as_slice(), |r, a| r - a);
    } else {
        x.as_mut_slice().iter_mut().for_each(|v| *v = T::zero());
    }
    let mut rr = dot(r.as_slice(), r.as_slice());
    let target = tol * b_norm;
    if rr.sqrt() <= target {
        let outcome = CgOutcome {
            iterations: 0,
            relative_residual: rr.sqrt() / b_norm,
            converged: true,
        };
        return Ok((outcome, r));
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let q = normal_apply(op, &p, sigma)?;
        let pq = dot(p.as_slice(), q.as_slice());
        let alpha = rr / pq;
        if !alpha.is_finite() || pq <= 0.0 {
            return Err(PamError::Numerical {
                iteration: it,
                message: format!("CG breakdown: p^T (A^T A + sigma I) p = {pq}"),
            });
        }
        axpy(T::of(alpha), p.as_slice(), x.as_mut_slice());
        axpy(T::of(-alpha), q.as_slice(), r.as_mut_slice());
        let rr_new = dot(r.as_slice(), r.as_slice());
        if !rr_new.is_finite() {
            return Err(PamError::Numerical {
                iteration: it,
                message: "non-finite CG residual".into(),
            });
        }
        if rr_new.sqrt() <= target {
            let outcome = CgOutcome {
                iterations: it,
                relative_residual: rr_new.sqrt() / b_norm,
                converged: true,
            };
            return Ok((outcome, r));
        }
        let beta = T::of(rr_new / rr);
        update(p.as_mut_slice(), r.as_slice(), |p, r| r + beta * p);
        rr = rr_new;
    }
    let outcome = CgOutcome {
        iterations: max_iter,
        relative_residual: rr.sqrt() / b_norm,
        converged: false,
    };
    Ok((outcome, r))
}
