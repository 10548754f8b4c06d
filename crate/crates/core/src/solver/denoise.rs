//! Plug-in denoisers for the ReD prior. All built-ins are deterministic,
//! shape-preserving and map zero to zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::forward::CavitationCube;
use crate::scalar::Scalar;

pub trait Denoiser<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn denoise(&self, x: &CavitationCube<T>) -> Result<CavitationCube<T>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DenoiserConfig {
    Identity,
    /// Separable Gaussian; widths in pixels and samples, 0 disables an axis.
    Gaussian {
        sigma_spatial: f64,
        sigma_temporal: f64,
    },
    /// Chambolle total-variation denoising.
    Tv {
        weight: f64,
        iterations: usize,
        #[serde(default)]
        temporal: bool,
    },
    Median {
        radius: usize,
    },
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig::Gaussian {
            sigma_spatial: 1.0,
            sigma_temporal: 0.0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PamError::Config(msg));
        match *self {
            DenoiserConfig::Identity => Ok(()),
            DenoiserConfig::Gaussian {
                sigma_spatial,
                sigma_temporal,
            } => {
                if !(sigma_spatial >= 0.0 && sigma_temporal >= 0.0)
                    || !sigma_spatial.is_finite()
                    || !sigma_temporal.is_finite()
                {
                    return bad(format!(
                        "gaussian widths must be finite and >= 0, got {sigma_spatial}, {sigma_temporal}"
                    ));
                }
                Ok(())
            }
            DenoiserConfig::Tv { weight, iterations, .. } => {
                if !(weight > 0.0) || !weight.is_finite() {
                    return bad(format!("tv weight must be finite and > 0, got {weight}"));
                }
                if iterations == 0 {
                    return bad("tv iterations must be >= 1".into());
                }
                Ok(())
            }
            DenoiserConfig::Median { radius } => {
                if radius == 0 {
                    return bad("median radius must be >= 1".into());
                }
                Ok(())
            }
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Denoiser<T>>> {
        self.validate()?;
        Ok(match *self {
            DenoiserConfig::Identity => Box::new(Identity),
            DenoiserConfig::Gaussian {
                sigma_spatial,
                sigma_temporal,
            } => Box::new(GaussianSmooth::new(sigma_spatial, sigma_temporal)?),
            DenoiserConfig::Tv {
                weight,
                iterations,
                temporal,
            } => Box::new(TvDenoise {
                weight,
                iterations,
                temporal,
            }),
            DenoiserConfig::Median { radius } => Box::new(Median3d { radius }),
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl<T: Scalar> Denoiser<T> for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn denoise(&self, x: &CavitationCube<T>) -> Result<CavitationCube<T>> {
        Ok(x.clone())
    }
}

/// Separable Gaussian smoothing with replicate padding, truncated at 3 sigma.
#[derive(Clone, Debug)]
pub struct GaussianSmooth {
    spatial: Vec<f64>,
    temporal: Vec<f64>,
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|o| (-0.5 * (o as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

impl GaussianSmooth {
    pub fn new(sigma_spatial: f64, sigma_temporal: f64) -> Result<Self> {
        DenoiserConfig::Gaussian {
            sigma_spatial,
            sigma_temporal,
        }
        .validate()?;
        Ok(Self {
            spatial: gaussian_taps(sigma_spatial),
            temporal: gaussian_taps(sigma_temporal),
        })
    }
}

/// Blurs whole time rows along a spatial axis: `stride` is 1 for lateral, `nx` for axial.
fn smooth_rows<T: Scalar>(src: &[T], dst: &mut [T], nx: usize, nz: usize, nt: usize, lateral: bool, taps: &[f64]) {
    let r = (taps.len() / 2) as i64;
    let taps: Vec<T> = taps.iter().map(|&t| T::of(t)).collect();
    dst.par_chunks_mut(nt).enumerate().for_each(|(n, out)| {
        let (i, j) = ((n % nx) as i64, (n / nx) as i64);
        out.iter_mut().for_each(|v| *v = T::zero());
        for (o, &w) in (-r..=r).zip(&taps) {
            let m = if lateral {
                j * nx as i64 + (i + o).clamp(0, nx as i64 - 1)
            } else {
                (j + o).clamp(0, nz as i64 - 1) * nx as i64 + i
            } as usize;
            for (d, &s) in out.iter_mut().zip(&src[m * nt..(m + 1) * nt]) {
                *d += w * s;
            }
        }
    });
}

fn smooth_time<T: Scalar>(data: &mut [T], nt: usize, taps: &[f64]) {
    let r = (taps.len() / 2) as i64;
    let taps: Vec<T> = taps.iter().map(|&t| T::of(t)).collect();
    data.par_chunks_mut(nt).for_each_init(
        || vec![T::zero(); nt],
        |buf, row| {
            buf.copy_from_slice(row);
            for (k, out) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (o, &w) in (-r..=r).zip(&taps) {
                    acc += w * buf[(k as i64 + o).clamp(0, nt as i64 - 1) as usize];
                }
                *out = acc;
            }
        },
    );
}

impl<T: Scalar> Denoiser<T> for GaussianSmooth {
    fn name(&self) -> String {
        "gaussian".into()
    }

    fn denoise(&self, x: &CavitationCube<T>) -> Result<CavitationCube<T>> {
        let (nx, nz, nt) = x.shape();
        let mut out = x.clone();
        if self.spatial.len() > 1 {
            let mut tmp = x.zeros_like();
            smooth_rows(x.as_slice(), tmp.as_mut_slice(), nx, nz, nt, true, &self.spatial);
            smooth_rows(tmp.as_slice(), out.as_mut_slice(), nx, nz, nt, false, &self.spatial);
        }
        if self.temporal.len() > 1 {
            smooth_time(out.as_mut_slice(), nt, &self.temporal);
        }
        Ok(out)
    }
}

/// Chambolle's dual projection algorithm for isotropic TV, over the two
/// spatial axes or all three axes.
#[derive(Clone, Debug)]
pub struct TvDenoise {
    pub weight: f64,
    pub iterations: usize,
    pub temporal: bool,
}

struct Dims {
    nx: usize,
    nz: usize,
    nt: usize,
}

impl Dims {
    /// Flat strides and extents of the active axes.
    fn axes(&self, temporal: bool) -> Vec<(usize, usize)> {
        let mut axes = vec![(self.nt, self.nx), (self.nx * self.nt, self.nz)];
        if temporal {
            axes.push((1, self.nt));
        }
        axes
    }

    /// Coordinate of flat index `idx` along an axis with the given stride and extent.
    fn coord(idx: usize, stride: usize, extent: usize) -> usize {
        (idx / stride) % extent
    }
}

impl TvDenoise {
    pub fn total_variation<T: Scalar>(&self, x: &CavitationCube<T>) -> f64 {
        let (nx, nz, nt) = x.shape();
        let axes = Dims { nx, nz, nt }.axes(self.temporal);
        let v = x.as_slice();
        (0..v.len())
            .into_par_iter()
            .map(|idx| {
                axes.iter()
                    .map(|&(s, e)| {
                        if Dims::coord(idx, s, e) + 1 < e {
                            (v[idx + s].as_f64() - v[idx].as_f64()).powi(2)
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }
}

impl<T: Scalar> Denoiser<T> for TvDenoise {
    fn name(&self) -> String {
        "tv".into()
    }

    fn denoise(&self, x: &CavitationCube<T>) -> Result<CavitationCube<T>> {
        let (nx, nz, nt) = x.shape();
        let len = x.as_slice().len();
        if len == 0 {
            return Ok(x.clone());
        }
        let temporal = self.temporal;
        let tau = if temporal { 1.0 / 12.0 } else { 1.0 / 8.0 };
        let g: Vec<f64> = x.as_slice().par_iter().map(|v| v.as_f64() / self.weight).collect();
        // dual field, one component per axis, laid out like the cube (time contiguous)
        let mut px = vec![0.0f64; len];
        let mut pz = vec![0.0f64; len];
        let mut pt = if temporal { vec![0.0f64; len] } else { Vec::new() };
        let mut div = vec![0.0f64; len];

        fn at(v: &[f64], m: usize, nt: usize) -> &[f64] {
            &v[m * nt..(m + 1) * nt]
        }
        let divergence = |px: &[f64], pz: &[f64], pt: &[f64], out: &mut [f64]| {
            out.par_chunks_mut(nt).enumerate().for_each(|(n, row)| {
                let (i, j) = (n % nx, n / nx);
                row.fill(0.0);
                if i + 1 < nx {
                    row.iter_mut().zip(at(px, n, nt)).for_each(|(o, p)| *o += p);
                }
                if i > 0 {
                    row.iter_mut().zip(at(px, n - 1, nt)).for_each(|(o, p)| *o -= p);
                }
                if j + 1 < nz {
                    row.iter_mut().zip(at(pz, n, nt)).for_each(|(o, p)| *o += p);
                }
                if j > 0 {
                    row.iter_mut().zip(at(pz, n - nx, nt)).for_each(|(o, p)| *o -= p);
                }
                if temporal {
                    let p = at(pt, n, nt);
                    for k in 0..nt {
                        if k + 1 < nt {
                            row[k] += p[k];
                        }
                        if k > 0 {
                            row[k] -= p[k - 1];
                        }
                    }
                }
            });
        };

        for _ in 0..self.iterations {
            divergence(&px, &pz, &pt, &mut div);
            div.par_iter_mut().zip(g.par_iter()).for_each(|(d, g)| *d -= g);
            let w = &div;
            let step = |n: usize, rx: &mut [f64], rz: &mut [f64], rt: Option<&mut [f64]>| {
                let (i, j) = (n % nx, n / nx);
                let here = &w[n * nt..(n + 1) * nt];
                let right = (i + 1 < nx).then(|| &w[(n + 1) * nt..(n + 2) * nt]);
                let below = (j + 1 < nz).then(|| &w[(n + nx) * nt..(n + nx + 1) * nt]);
                let mut rt = rt;
                for k in 0..nt {
                    let gx = right.map_or(0.0, |r| r[k] - here[k]);
                    let gz = below.map_or(0.0, |b| b[k] - here[k]);
                    let gt = if temporal && k + 1 < nt { here[k + 1] - here[k] } else { 0.0 };
                    let scale = 1.0 / (1.0 + tau * (gx * gx + gz * gz + gt * gt).sqrt());
                    rx[k] = (rx[k] + tau * gx) * scale;
                    rz[k] = (rz[k] + tau * gz) * scale;
                    if let Some(rt) = rt.as_deref_mut() {
                        rt[k] = (rt[k] + tau * gt) * scale;
                    }
                }
            };
            if temporal {
                px.par_chunks_mut(nt)
                    .zip(pz.par_chunks_mut(nt))
                    .zip(pt.par_chunks_mut(nt))
                    .enumerate()
                    .for_each(|(n, ((rx, rz), rt))| step(n, rx, rz, Some(rt)));
            } else {
                px.par_chunks_mut(nt)
                    .zip(pz.par_chunks_mut(nt))
                    .enumerate()
                    .for_each(|(n, (rx, rz))| step(n, rx, rz, None));
            }
        }
        divergence(&px, &pz, &pt, &mut div);
        let values = x
            .as_slice()
            .par_iter()
            .zip(div.par_iter())
            .map(|(&v, &dv)| T::of(v.as_f64() - self.weight * dv))
            .collect();
        CavitationCube::from_vec(nx, nz, nt, values)
    }
}

/// Median over the `(2r+1)^3` neighbourhood clipped to the cube.
#[derive(Clone, Debug)]
pub struct Median3d {
    pub radius: usize,
}

impl<T: Scalar> Denoiser<T> for Median3d {
    fn name(&self) -> String {
        "median".into()
    }

    fn denoise(&self, x: &CavitationCube<T>) -> Result<CavitationCube<T>> {
        let (nx, nz, nt) = x.shape();
        let r = self.radius as i64;
        let mut out = x.zeros_like();
        out.as_mut_slice()
            .par_chunks_mut(nt)
            .enumerate()
            .for_each_init(Vec::new, |buf: &mut Vec<T>, (n, row)| {
                let (i, j) = ((n % nx) as i64, (n / nx) as i64);
                for (k, o) in row.iter_mut().enumerate() {
                    buf.clear();
                    for jj in (j - r).max(0)..=(j + r).min(nz as i64 - 1) {
                        for ii in (i - r).max(0)..=(i + r).min(nx as i64 - 1) {
                            let px = x.pixel(jj as usize * nx + ii as usize);
                            let lo = (k as i64 - r).max(0) as usize;
                            let hi = (k as i64 + r).min(nt as i64 - 1) as usize;
                            buf.extend_from_slice(&px[lo..=hi]);
                        }
                    }
                    let mid = buf.len() / 2;
                    let (_, &mut m, _) = buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                    *o = m;
                }
            });
        Ok(out)
    }
}
