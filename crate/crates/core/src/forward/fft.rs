//! FFT evaluation of the convolutional forward model and its adjoint.
//!
//! Each axial slice pair is transformed once (real FFT along time, complex FFT
//! along the lateral axis), products are accumulated in the frequency domain,
//! and a single inverse transform is applied to the measurement rows.
//! Transform sizes hold the full `(N_x + N_w - 1) x (2 N_t - 1)` convolution,
//! rounded up to 2-3-5 smooth lengths, so circular wrap-around never reaches
//! the extracted window.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::data::{CavitationCube, RfData};
use super::kernel::ConvKernel;
use crate::error::{PamError, Result};
use crate::scalar::Scalar;

/// Smallest `m >= n` whose only prime factors are 2, 3 and 5.
pub fn next_smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Cached FFT plans and twiddles for one kernel geometry.
pub struct FftConvolver<T: Scalar> {
    nx: usize,
    nz: usize,
    nt: usize,
    sensors: usize,
    lateral_len: usize,
    temporal_len: usize,
    bins: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    lateral_fwd: Arc<dyn Fft<T>>,
    lateral_inv: Arc<dyn Fft<T>>,
    twiddles: Vec<Complex<T>>,
}

impl<T: Scalar> std::fmt::Debug for FftConvolver<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver")
            .field("lateral_len", &self.lateral_len)
            .field("temporal_len", &self.temporal_len)
            .finish()
    }
}

impl<T: Scalar> FftConvolver<T> {
    pub fn new(kernel: &ConvKernel) -> Self {
        let lateral_len = next_smooth_len(kernel.full_rows());
        let mut temporal_len = next_smooth_len(kernel.full_cols());
        while temporal_len % 2 != 0 {
            temporal_len = next_smooth_len(temporal_len + 1);
        }
        let mut real = RealFftPlanner::<T>::new();
        let mut cplx = FftPlanner::<T>::new();
        let twiddles = (0..temporal_len)
            .map(|t| {
                let phase = -2.0 * std::f64::consts::PI * t as f64 / temporal_len as f64;
                Complex::new(T::of(phase.cos()), T::of(phase.sin()))
            })
            .collect();
        Self {
            nx: kernel.grid_nx(),
            nz: kernel.axial_size(),
            nt: kernel.samples(),
            sensors: kernel.sensors(),
            lateral_len,
            temporal_len,
            bins: temporal_len / 2 + 1,
            r2c: real.plan_fft_forward(temporal_len),
            c2r: real.plan_fft_inverse(temporal_len),
            lateral_fwd: cplx.plan_fft_forward(lateral_len),
            lateral_inv: cplx.plan_fft_inverse(lateral_len),
            twiddles,
        }
    }

    /// Padded transform sizes `(lateral, temporal)`.
    pub fn transform_size(&self) -> (usize, usize) {
        (self.lateral_len, self.temporal_len)
    }

    fn check_kernel(&self, kernel: &ConvKernel) -> Result<()> {
        if (kernel.grid_nx(), kernel.axial_size(), kernel.samples(), kernel.sensors())
            != (self.nx, self.nz, self.nt, self.sensors)
        {
            return Err(PamError::Dimension(
                "kernel does not match the geometry this FFT plan was built for".into(),
            ));
        }
        Ok(())
    }

    /// Writes the real FFT of each `rows[r]` (zero-padded) into column `r` of a bin-major buffer.
    fn temporal_forward<'a>(&self, rows: impl IndexedParallelIterator<Item = (usize, &'a [T])>, out: &mut [Complex<T>]) {
        let (b, l1, l2) = (self.bins, self.lateral_len, self.temporal_len);
        let spectra: Vec<(usize, Vec<Complex<T>>)> = rows
            .map_init(
                || (vec![T::zero(); l2], vec![Complex::default(); self.r2c.get_scratch_len()]),
                |(input, scratch), (r, src)| {
                    input[..src.len()].copy_from_slice(src);
                    input[src.len()..].iter_mut().for_each(|v| *v = T::zero());
                    let mut spec = vec![Complex::default(); b];
                    self.r2c
                        .process_with_scratch(input, &mut spec, scratch)
                        .expect("buffer sizes match the plan");
                    (r, spec)
                },
            )
            .collect();
        out.iter_mut().for_each(|c| *c = Complex::default());
        for (r, spec) in spectra {
            for (f, v) in spec.into_iter().enumerate() {
                out[f * l1 + r] = v;
            }
        }
    }

    /// Bin-major 2D spectrum of kernel axial slice `a`.
    fn kernel_spectrum(&self, kernel: &ConvKernel, a: usize, out: &mut [Complex<T>]) {
        let (l1, l2) = (self.lateral_len, self.temporal_len);
        let entries = kernel.axial_entries(a);
        // each kernel row is one-hot in time, so its DFT along time is a single twiddle
        out.par_chunks_mut(l1).enumerate().for_each_init(
            || vec![Complex::default(); self.lateral_fwd.get_inplace_scratch_len()],
            |scratch, (f, col)| {
                col.iter_mut().for_each(|c| *c = Complex::default());
                for &(w, tau) in entries {
                    col[w as usize] += self.twiddles[(f * tau as usize) % l2];
                }
                self.lateral_fwd.process_with_scratch(col, scratch);
            },
        );
    }

    fn lateral_forward(&self, buf: &mut [Complex<T>]) {
        buf.par_chunks_mut(self.lateral_len).for_each_init(
            || vec![Complex::default(); self.lateral_fwd.get_inplace_scratch_len()],
            |scratch, col| self.lateral_fwd.process_with_scratch(col, scratch),
        );
    }

    /// Inverse 2D transform of lateral rows `rows`, returning the first `N_t` samples of each.
    fn inverse_rows(&self, spec: &[Complex<T>], rows: std::ops::Range<usize>, out: &mut [T]) {
        let (b, l1, l2, nt) = (self.bins, self.lateral_len, self.temporal_len, self.nt);
        let scale = T::one() / (T::of(l1 as f64) * T::of(l2 as f64));
        out.par_chunks_mut(nt).zip(rows.into_par_iter()).for_each_init(
            || {
                (
                    vec![Complex::default(); b],
                    vec![T::zero(); l2],
                    vec![Complex::default(); self.c2r.get_scratch_len()],
                )
            },
            |(bins, time, scratch), (dst, p)| {
                for (f, v) in bins.iter_mut().enumerate() {
                    *v = spec[f * l1 + p];
                }
                // the row is real: DC and Nyquist bins carry no imaginary part
                bins[0].im = T::zero();
                bins[b - 1].im = T::zero();
                self.c2r
                    .process_with_scratch(bins, time, scratch)
                    .expect("buffer sizes match the plan");
                for (d, &v) in dst.iter_mut().zip(time.iter()) {
                    *d = v * scale;
                }
            },
        );
    }

    pub fn forward(&self, x: &CavitationCube<T>, kernel: &ConvKernel) -> Result<RfData<T>> {
        self.check_kernel(kernel)?;
        kernel.check_cube(x.nx(), x.nz(), x.nt())?;
        let (nx, nz, nt) = (self.nx, self.nz, self.nt);
        let len = self.bins * self.lateral_len;
        let mut acc = vec![Complex::<T>::default(); len];
        let mut data = vec![Complex::<T>::default(); len];
        let mut kspec = vec![Complex::<T>::default(); len];
        for a in 0..nz {
            let j = nz - 1 - a;
            let rows = (0..nx).into_par_iter().map(|i| (i, x.pixel(j * nx + i)));
            self.temporal_forward(rows, &mut data);
            self.lateral_forward(&mut data);
            self.kernel_spectrum(kernel, a, &mut kspec);
            acc.par_iter_mut()
                .zip(data.par_iter())
                .zip(kspec.par_iter())
                .for_each(|((s, &d), &k)| *s += d * k);
        }
        acc.par_chunks_mut(self.lateral_len).for_each_init(
            || vec![Complex::default(); self.lateral_inv.get_inplace_scratch_len()],
            |scratch, col| self.lateral_inv.process_with_scratch(col, scratch),
        );
        let mut y = RfData::zeros(self.sensors, nt);
        let start = kernel.extraction_offset();
        self.inverse_rows(&acc, start..start + self.sensors, y.as_mut_slice());
        Ok(y)
    }

    pub fn adjoint(&self, y: &RfData<T>, kernel: &ConvKernel) -> Result<CavitationCube<T>> {
        self.check_kernel(kernel)?;
        kernel.check_rf(y.sensors(), y.nt())?;
        let (nx, nz, nt) = (self.nx, self.nz, self.nt);
        let len = self.bins * self.lateral_len;
        let start = kernel.extraction_offset();

        // spectrum of the embedded measurement slice
        let mut yspec = vec![Complex::<T>::default(); len];
        let rows = (0..self.sensors).into_par_iter().map(|m| (start + m, y.row(m)));
        self.temporal_forward(rows, &mut yspec);
        self.lateral_forward(&mut yspec);

        let mut kspec = vec![Complex::<T>::default(); len];
        let mut prod = vec![Complex::<T>::default(); len];
        let mut x = CavitationCube::zeros(nx, nz, nt);
        for a in 0..nz {
            let j = nz - 1 - a;
            self.kernel_spectrum(kernel, a, &mut kspec);
            prod.par_chunks_mut(self.lateral_len)
                .zip(yspec.par_chunks(self.lateral_len))
                .zip(kspec.par_chunks(self.lateral_len))
                .for_each_init(
                    || vec![Complex::default(); self.lateral_inv.get_inplace_scratch_len()],
                    |scratch, ((p, ys), ks)| {
                        for ((o, &yv), &kv) in p.iter_mut().zip(ys).zip(ks) {
                            *o = kv.conj() * yv;
                        }
                        self.lateral_inv.process_with_scratch(p, scratch);
                    },
                );
            let dst = &mut x.as_mut_slice()[j * nx * nt..(j + 1) * nx * nt];
            self.inverse_rows(&prod, 0..nx, dst);
        }
        Ok(x)
    }
}

/// One-shot FFT forward model; plan once with [`FftConvolver`] for repeated use.
pub fn forward_conv_fft<T: Scalar>(x: &CavitationCube<T>, kernel: &ConvKernel) -> Result<RfData<T>> {
    FftConvolver::new(kernel).forward(x, kernel)
}

pub fn adjoint_conv_fft<T: Scalar>(y: &RfData<T>, kernel: &ConvKernel) -> Result<CavitationCube<T>> {
    FftConvolver::new(kernel).adjoint(y, kernel)
}
