//! Sparse binary convolution kernel of the pitch-matched forward model.
//!
//! The kernel has logical shape `N_w x N_z x N_t` with `N_w = N_x + 2*ceil(N_m/2)`.
//! Each `(lateral, axial)` position carries exactly one unit entry, in the
//! temporal slice equal to its delay, or none when the delay falls outside the
//! record.
//!
//! Coordinates are stored in convolution orientation:
//!
//! * lateral coordinate `w` holds the pixel-minus-sensor offset `center - w`
//!   (the kernel is mirrored so that the lateral sum is a true convolution);
//! * axial coordinate `a` holds pixel row `N_z - 1 - a`, so that kernel slice
//!   `a` is paired with datacube row `N_z - 1 - a` in the axial sum.

use crate::error::{PamError, Result};
use crate::geometry::{
    central_sensor_index, validate_pitch_matching, AcquisitionConfig, DelayTable, ImageGrid,
    PitchMatch, SensorArray,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct KernelEntry {
    pub lateral: u32,
    pub axial: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    lateral_size: usize,
    nx: usize,
    nz: usize,
    nt: usize,
    sensors: usize,
    first_lattice_index: i64,
    center: i64,
    extraction_offset: usize,
    /// Unit entries of temporal slice `k`, sorted.
    slices: Vec<Vec<KernelEntry>>,
    /// `(lateral, delay)` pairs of axial slice `a`, sorted by lateral coordinate.
    by_axial: Vec<Vec<(u32, u32)>>,
}

impl ConvKernel {
    /// `N_w`.
    pub fn lateral_size(&self) -> usize {
        self.lateral_size
    }

    pub fn axial_size(&self) -> usize {
        self.nz
    }

    pub fn samples(&self) -> usize {
        self.nt
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn grid_nx(&self) -> usize {
        self.nx
    }

    /// Grid lateral index of the first sensor.
    pub fn first_lattice_index(&self) -> i64 {
        self.first_lattice_index
    }

    /// Lateral kernel coordinate of zero pixel-to-sensor offset.
    pub fn center(&self) -> i64 {
        self.center
    }

    /// First lateral row of the full convolution slice that maps to sensor 0.
    pub fn extraction_offset(&self) -> usize {
        self.extraction_offset
    }

    /// Rows of the full-mode convolution slice, `N_x + N_w - 1`.
    pub fn full_rows(&self) -> usize {
        self.nx + self.lateral_size - 1
    }

    /// Columns of the full-mode convolution slice, `2 N_t - 1`.
    pub fn full_cols(&self) -> usize {
        2 * self.nt - 1
    }

    pub fn slice(&self, k: usize) -> &[KernelEntry] {
        &self.slices[k]
    }

    pub fn axial_entries(&self, a: usize) -> &[(u32, u32)] {
        &self.by_axial[a]
    }

    /// Total number of unit entries.
    pub fn nnz(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }

    /// Pixel lateral index minus sensor lattice index for kernel column `w`.
    pub fn offset_of(&self, w: usize) -> i64 {
        self.center - w as i64
    }

    /// Datacube row paired with kernel axial slice `a`.
    pub fn pixel_row(&self, a: usize) -> usize {
        self.nz - 1 - a
    }

    /// Whether the pixel at lateral `offset` from the sensor, on row `row`, is in slice `k`.
    pub fn contains(&self, offset: i64, row: usize, k: usize) -> bool {
        let w = self.center - offset;
        if w < 0 || w as usize >= self.lateral_size || row >= self.nz || k >= self.nt {
            return false;
        }
        let e = KernelEntry {
            lateral: w as u32,
            axial: (self.nz - 1 - row) as u32,
        };
        self.slices[k].binary_search(&e).is_ok()
    }

    pub(crate) fn check_cube(&self, nx: usize, nz: usize, nt: usize) -> Result<()> {
        if (nx, nz, nt) != (self.nx, self.nz, self.nt) {
            return Err(PamError::Dimension(format!(
                "cube {nx}x{nz}x{nt} does not match kernel geometry {}x{}x{}",
                self.nx, self.nz, self.nt
            )));
        }
        Ok(())
    }

    pub(crate) fn check_rf(&self, sensors: usize, nt: usize) -> Result<()> {
        if (sensors, nt) != (self.sensors, self.nt) {
            return Err(PamError::Dimension(format!(
                "RF {sensors}x{nt} does not match kernel geometry {}x{}",
                self.sensors, self.nt
            )));
        }
        Ok(())
    }
}

/// Builds the binary kernel from the delay table of a pitch-matched geometry.
///
/// Every lateral offset spanned by some (sensor, pixel) pair is included, so the
/// kernel is wider than the grid seen from the central sensor alone. Restricted
/// to in-grid offsets of the central sensor, slice `k` is exactly its
/// contributor set. The table must be shift-invariant: pairs with equal offsets
/// must carry equal delays.
pub fn build_kernel(
    table: &DelayTable,
    array: &SensorArray,
    grid: &ImageGrid,
    acq: &AcquisitionConfig,
) -> Result<ConvKernel> {
    let first = match validate_pitch_matching(array, grid) {
        PitchMatch::Matched {
            first_lattice_index,
        } => first_lattice_index,
        failure => {
            return Err(PamError::Model(format!(
                "convolutional model requires validate_pitch_matching to pass: {failure}"
            )))
        }
    };
    let (nm, nx, nz, nt) = (array.count(), grid.nx, grid.nz, acq.samples);
    if table.sensors() != nm || table.pixels() != grid.len() || table.samples() != nt {
        return Err(PamError::Dimension(format!(
            "delay table {}x{} (N_t={}) does not match geometry {}x{} (N_t={})",
            table.sensors(),
            table.pixels(),
            table.samples(),
            nm,
            grid.len(),
            nt
        )));
    }

    let half = central_sensor_index(nm);
    let lateral_size = nx + 2 * half;
    let o_min = -(first + nm as i64 - 1);
    let o_max = nx as i64 - 1 - first;
    let span = (o_max - o_min + 1) as usize;
    // offset 0 lands on column N_x - first, which puts sensor 0 at full-slice row N_x
    let center = nx as i64 - first;

    const UNSET: u32 = u32::MAX;
    let mut law = vec![UNSET; span * nz];
    let central = half - 1;
    // central sensor first so that its delays define the in-grid part of the kernel
    let order = std::iter::once(central).chain((0..nm).filter(|&m| m != central));
    for m in order {
        let s = first + m as i64;
        for (n, &d) in table.row(m).iter().enumerate() {
            let (i, j) = grid.coords(n);
            let o = i as i64 - s;
            let slot = &mut law[(o - o_min) as usize * nz + j];
            if *slot == UNSET {
                *slot = d;
            } else if *slot != d {
                return Err(PamError::Model(format!(
                    "delay table is not shift-invariant: sensor {m}, pixel {n} has delay {d} \
                     but offset {o} on row {j} was {}",
                    *slot
                )));
            }
        }
    }

    let mut slices = vec![Vec::new(); nt];
    let mut by_axial = vec![Vec::new(); nz];
    for oi in 0..span {
        let o = o_min + oi as i64;
        let w = center - o;
        debug_assert!(w >= 0 && (w as usize) < lateral_size);
        for j in 0..nz {
            let d = law[oi * nz + j];
            if d == UNSET || d as usize >= nt {
                continue;
            }
            let a = nz - 1 - j;
            slices[d as usize].push(KernelEntry {
                lateral: w as u32,
                axial: a as u32,
            });
            by_axial[a].push((w as u32, d));
        }
    }
    slices.iter_mut().for_each(|s| s.sort_unstable());
    by_axial.iter_mut().for_each(|s| s.sort_unstable());

    let mut kernel = ConvKernel {
        lateral_size,
        nx,
        nz,
        nt,
        sensors: nm,
        first_lattice_index: first,
        center,
        extraction_offset: nx,
        slices,
        by_axial,
    };
    kernel.extraction_offset = calibrate_extraction(&kernel, table)?;
    Ok(kernel)
}

/// Finds the lateral extraction offset by matching a single-pixel impulse
/// pushed through the convolutional path against the delay-sum response.
///
/// Candidates are all windows of `N_m` rows inside the full slice; the analytic
/// offset `N_x` is preferred when several windows match (e.g. an impulse whose
/// response falls entirely outside the record).
pub fn calibrate_extraction(kernel: &ConvKernel, table: &DelayTable) -> Result<usize> {
    let (nx, nz, nt, nm) = (kernel.nx, kernel.nz, kernel.nt, kernel.sensors);
    // impulse at t = 0 on the pixel whose slowest sensor is fastest
    let n = (0..nx * nz)
        .min_by_key(|&n| (0..nm).map(|m| table.get(m, n)).max().unwrap_or(0))
        .unwrap_or(0);
    let (i, j) = (n % nx, n / nx);

    let mut expected: Vec<(usize, usize)> = (0..nm)
        .filter(|&m| (table.get(m, n) as usize) < nt)
        .map(|m| (m, table.get(m, n) as usize))
        .collect();
    expected.sort_unstable();

    // full-slice response of the impulse: kernel slice a = nz-1-j shifted by i
    let a = nz - 1 - j;
    let response: Vec<(usize, usize)> = kernel.by_axial[a]
        .iter()
        .map(|&(w, tau)| (w as usize + i, tau as usize))
        .collect();

    let rows = kernel.full_rows();
    let matches: Vec<usize> = (0..=rows - nm)
        .filter(|&start| {
            let mut window: Vec<(usize, usize)> = response
                .iter()
                .filter(|(p, t)| *p >= start && *p < start + nm && *t < nt)
                .map(|&(p, t)| (p - start, t))
                .collect();
            window.sort_unstable();
            window == expected
        })
        .collect();

    if matches.contains(&nx) {
        Ok(nx)
    } else if matches.len() == 1 {
        Ok(matches[0])
    } else if matches.is_empty() {
        Err(PamError::Model(
            "extraction calibration failed: no window reproduces the delay-sum impulse response"
                .into(),
        ))
    } else {
        Err(PamError::Model(format!(
            "extraction calibration is ambiguous: {} candidate windows",
            matches.len()
        )))
    }
}
