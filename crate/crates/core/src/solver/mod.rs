//! Sparse + ReD regularized inversion by ADMM:
//!
//! `min_x ½‖y - A x‖² + λ‖x‖₁ + (μ/2) xᵀ(x - f(x))`
//!
//! split as `x = z1` (ℓ1 term) and `x = z2` (ReD term) with scaled duals.

mod cg;
mod denoise;
mod prox;
mod scaled;
pub(crate) mod vecops;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cg::{cg_normal_equations, cg_normal_equations_warm, CgOutcome};
pub use denoise::{Denoiser, DenoiserConfig, GaussianSmooth, Identity, Median3d, TvDenoise};
pub use scaled::{operator_norm, rms_column_norm, ScaledOperator};
pub use prox::{lambda_heuristic, quantile, soft_threshold, soft_threshold_into, soft_threshold_scalar};

use crate::error::{PamError, Result};
use crate::forward::{CavitationCube, LinearOperator, RfData};
use crate::scalar::Scalar;
use vecops::{dist_sq, dot, l1, norm_sq, update, zip_map};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Fixed sparsity weight; `None` uses `quantile(|A^T y|, lambda_quantile)`.
    pub lambda: Option<f64>,
    pub lambda_quantile: f64,
    pub mu: f64,
    pub rho: f64,
    pub max_iter: usize,
    /// Relative tolerance on both primal and dual residuals.
    pub tol: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Fixed-point denoiser applications per ReD update.
    pub red_inner: usize,
    pub denoiser: DenoiserConfig,
    /// Operator rescaling applied before solving; λ, μ and ρ refer to the
    /// rescaled problem.
    pub normalize: Normalization,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            lambda_quantile: 0.95,
            mu: 0.0,
            rho: 0.25,
            max_iter: 100,
            tol: 1e-4,
            cg_tol: 1e-6,
            cg_max_iter: 50,
            red_inner: 1,
            denoiser: DenoiserConfig::default(),
            normalize: Normalization::Spectral,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PamError::Config(msg));
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return bad(format!("lambda must be finite and >= 0, got {l}"));
            }
        }
        if !(self.lambda_quantile > 0.0 && self.lambda_quantile < 1.0) {
            return bad(format!("lambda_quantile must lie in (0, 1), got {}", self.lambda_quantile));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be finite and >= 0, got {}", self.mu));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be finite and > 0, got {}", self.rho));
        }
        if !(self.tol > 0.0) || !(self.cg_tol > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if self.max_iter == 0 || self.cg_max_iter == 0 || self.red_inner == 0 {
            return bad("iteration caps must be >= 1".into());
        }
        self.denoiser.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    /// Unit root-mean-square column norm.
    Columns,
    /// Unit spectral norm.
    #[default]
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub fidelity: f64,
    pub primal: f64,
    pub dual: f64,
    pub seconds: f64,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    /// Factor the operator was divided by (1 when disabled).
    pub operator_norm: f64,
    pub mu: f64,
    /// `½‖y‖²`, the fidelity of the zero start.
    pub initial_fidelity: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolveReport {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn final_fidelity(&self) -> f64 {
        self.iterations.last().map_or(self.initial_fidelity, |r| r.fidelity)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,objective,fidelity,primal,dual,seconds")?;
        for r in &self.iterations {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:.6}",
                r.iteration, r.objective, r.fidelity, r.primal, r.dual, r.seconds
            )?;
        }
        Ok(())
    }
}

fn check_shape<T: Scalar>(what: &str, got: &CavitationCube<T>, want: (usize, usize, usize)) -> Result<()> {
    if got.shape() != want {
        return Err(PamError::Dimension(format!(
            "{what} returned shape {:?}, expected {want:?}",
            got.shape()
        )));
    }
    Ok(())
}

/// ADMM with two auxiliary variables, CG x-update and fixed-point ReD update.
pub fn admm_spred<T: Scalar>(
    y: &RfData<T>,
    op: &dyn LinearOperator<T>,
    denoiser: &dyn Denoiser<T>,
    cfg: &SolverConfig,
) -> Result<(CavitationCube<T>, SolveReport)> {
    cfg.validate()?;
    if y.shape() != op.rf_shape() {
        return Err(PamError::Dimension(format!(
            "RF data is {:?}, operator expects {:?}",
            y.shape(),
            op.rf_shape()
        )));
    }
    if !y.is_finite() {
        return Err(PamError::Numerical {
            iteration: 0,
            message: "non-finite RF data".into(),
        });
    }
    let shape = op.cube_shape();
    let start = Instant::now();
    let op_norm = match cfg.normalize {
        Normalization::None => 1.0,
        Normalization::Columns => rms_column_norm(op, cfg.seed)?,
        Normalization::Spectral => operator_norm(op, 50, 1e-4, cfg.seed)?,
    };
    if !(op_norm > 0.0) {
        return Err(PamError::Numerical {
            iteration: 0,
            message: "operator has zero norm".into(),
        });
    }
    let scaled = ScaledOperator::new(op, 1.0 / op_norm);
    let op: &dyn LinearOperator<T> = &scaled;
    let rho = cfg.rho;
    let mu = cfg.mu;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => prox::lambda_heuristic(y, op, cfg.lambda_quantile)?,
    };
    let y_sq = norm_sq(y.as_slice());
    let b0 = op.adjoint(y)?;
    let b0_norm = norm_sq(b0.as_slice()).sqrt();

    let mut x = b0.zeros_like();
    let mut z1 = b0.zeros_like();
    let mut z2 = b0.zeros_like();
    let mut u1 = b0.zeros_like();
    let mut u2 = b0.zeros_like();
    let mut rhs = b0.zeros_like();
    let mut scratch = b0.zeros_like();
    let (rho_t, mu_t) = (T::of(rho), T::of(mu));
    let blend = T::of(1.0 / (mu + rho));

    let mut report = SolveReport {
        lambda,
        operator_norm: op_norm,
        mu,
        initial_fidelity: 0.5 * y_sq,
        ..Default::default()
    };

    for it in 1..=cfg.max_iter {
        // x-update: (A^T A + 2ρ I) x = A^T y + ρ (z1 - u1) + ρ (z2 - u2)
        zip_map(z1.as_slice(), u1.as_slice(), rhs.as_mut_slice(), |z, u| z - u);
        update(rhs.as_mut_slice(), z2.as_slice(), |r, z| r + z);
        update(rhs.as_mut_slice(), u2.as_slice(), |r, u| r - u);
        update(rhs.as_mut_slice(), b0.as_slice(), |r, b| rho_t * r + b);
        let (cg, resid) = cg::cg_solve(op, &rhs, 2.0 * rho, cfg.cg_tol, cfg.cg_max_iter, &mut x, it > 1)?;

        // ½‖y - Ax‖² = ½‖y‖² - <A^T y, x> + ½<x, A^T A x>, with A^T A x = rhs - r - 2ρ x
        let ata_x = dot(x.as_slice(), rhs.as_slice()) - dot(x.as_slice(), resid.as_slice())
            - 2.0 * rho * norm_sq(x.as_slice());
        drop(resid);
        let fidelity = (0.5 * y_sq - dot(b0.as_slice(), x.as_slice()) + 0.5 * ata_x).max(0.0);

        // z1-update: soft threshold of x + u1
        let mut dz_sq_parts = z1.clone();
        zip_map(x.as_slice(), u1.as_slice(), scratch.as_mut_slice(), |x, u| x + u);
        soft_threshold_into(scratch.as_slice(), lambda / rho, z1.as_mut_slice())?;
        update(dz_sq_parts.as_mut_slice(), z1.as_slice(), |old, new| new - old);

        // z2-update: z <- (μ f(z) + ρ v) / (μ + ρ), v = x + u2
        zip_map(x.as_slice(), u2.as_slice(), scratch.as_mut_slice(), |x, u| x + u);
        let z2_old_diff = {
            let old = z2.clone();
            if mu == 0.0 {
                z2.as_mut_slice().copy_from_slice(scratch.as_slice());
            } else {
                for _ in 0..cfg.red_inner {
                    let fz = denoiser.denoise(&z2)?;
                    check_shape("denoiser", &fz, shape)?;
                    zip_map(fz.as_slice(), scratch.as_slice(), z2.as_mut_slice(), |f, v| {
                        (mu_t * f + rho_t * v) * blend
                    });
                }
            }
            let mut d = old;
            update(d.as_mut_slice(), z2.as_slice(), |old, new| new - old);
            d
        };
        // Δz1 + Δz2
        update(dz_sq_parts.as_mut_slice(), z2_old_diff.as_slice(), |a, b| a + b);
        let dual = rho * norm_sq(dz_sq_parts.as_slice()).sqrt();
        drop(dz_sq_parts);
        drop(z2_old_diff);

        let r1 = dist_sq(x.as_slice(), z1.as_slice());
        let r2 = dist_sq(x.as_slice(), z2.as_slice());
        let primal = (r1 + r2).sqrt();
        update(u1.as_mut_slice(), x.as_slice(), |u, x| u + x);
        update(u1.as_mut_slice(), z1.as_slice(), |u, z| u - z);
        update(u2.as_mut_slice(), x.as_slice(), |u, x| u + x);
        update(u2.as_mut_slice(), z2.as_slice(), |u, z| u - z);

        let mut objective = fidelity + lambda * l1(x.as_slice());
        if mu > 0.0 {
            let fx = denoiser.denoise(&x)?;
            check_shape("denoiser", &fx, shape)?;
            let x_sq = norm_sq(x.as_slice());
            objective += 0.5 * mu * (x_sq - dot(x.as_slice(), fx.as_slice()));
        }
        if !objective.is_finite() {
            return Err(PamError::Numerical {
                iteration: it,
                message: format!("objective became {objective}"),
            });
        }
        let record = IterationRecord {
            iteration: it,
            objective,
            fidelity,
            primal,
            dual,
            seconds: start.elapsed().as_secs_f64(),
            cg_iterations: cg.iterations,
        };
        log::debug!(
            "admm {it}: obj {objective:.6e} fid {fidelity:.6e} primal {primal:.3e} dual {dual:.3e} cg {}",
            cg.iterations
        );
        report.iterations.push(record);

        let x_norm = norm_sq(x.as_slice()).sqrt();
        let z_norm = (norm_sq(z1.as_slice()) + norm_sq(z2.as_slice())).sqrt();
        let u_norm = (norm_sq(u1.as_slice()) + norm_sq(u2.as_slice())).sqrt();
        let primal_scale = (2f64.sqrt() * x_norm).max(z_norm).max(f64::MIN_POSITIVE);
        let dual_scale = (rho * u_norm).max(b0_norm).max(f64::MIN_POSITIVE);
        if primal <= cfg.tol * primal_scale && dual <= cfg.tol * dual_scale {
            report.converged = true;
            break;
        }
    }
    // back to the units of the unnormalized operator
    let inv = T::of(1.0 / op_norm);
    x.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    Ok((x, report))
}

/// Fraction of RF energy left unexplained, `‖y - A x‖² / ‖y‖²`.
pub fn relative_misfit<T: Scalar>(y: &RfData<T>, op: &dyn LinearOperator<T>, x: &CavitationCube<T>) -> Result<f64> {
    let ax = op.apply(x)?;
    let y_sq = norm_sq(y.as_slice());
    if y_sq == 0.0 {
        return Ok(0.0);
    }
    Ok(dist_sq(ax.as_slice(), y.as_slice()) / y_sq)
}

#[cfg(test)]
mod tests;
