//! Acquisition geometry: linear sensor arrays, reconstruction grids and the
//! integer time-of-flight law shared by every forward operator.
//!
//! Indices are zero-based throughout. Pixel `n` of an [`ImageGrid`] maps to
//! lateral index `i = n % nx` and axial index `j = n / nx`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};

/// Tolerance (in metres) for pitch equality and lattice alignment.
pub const LATTICE_TOLERANCE: f64 = 1e-12;

/// Linear array of sensors at `(x_m, 0, z_m)`, equispaced along `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorArray {
    positions: Vec<[f64; 3]>,
    pitch: f64,
}

impl SensorArray {
    /// Coplanar array at `z = 0` with `count` sensors starting at `first_x`.
    pub fn linear(count: usize, pitch: f64, first_x: f64) -> Result<Self> {
        Self::linear_at_depth(count, pitch, first_x, 0.0)
    }

    pub fn linear_at_depth(count: usize, pitch: f64, first_x: f64, z: f64) -> Result<Self> {
        let positions = (0..count)
            .map(|m| [first_x + m as f64 * pitch, 0.0, z])
            .collect();
        Self::from_positions(positions, pitch)
    }

    /// Arbitrary sensor depths are accepted; lateral spacing must equal `pitch`.
    pub fn from_positions(positions: Vec<[f64; 3]>, pitch: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(PamError::Config("sensor array must contain at least one sensor".into()));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(PamError::Config(format!("sensor pitch must be positive, got {pitch}")));
        }
        for (m, p) in positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(PamError::Config(format!("sensor {m} has a non-finite coordinate")));
            }
            if p[1] != 0.0 {
                return Err(PamError::Config(format!(
                    "sensor {m} has azimuthal coordinate {} (must be 0)",
                    p[1]
                )));
            }
        }
        for (m, w) in positions.windows(2).enumerate() {
            let gap = (w[1][0] - w[0][0]).abs();
            if (gap - pitch).abs() > LATTICE_TOLERANCE {
                return Err(PamError::Config(format!(
                    "sensors {m} and {} are {gap:e} m apart, expected pitch {pitch:e} m",
                    m + 1
                )));
            }
        }
        Ok(Self { positions, pitch })
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn position(&self, m: usize) -> [f64; 3] {
        self.positions[m]
    }
}

/// Lateral-axial reconstruction grid at azimuthal offset `y0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub x_origin: f64,
    pub z_origin: f64,
    pub lateral_pitch: f64,
    pub axial_pitch: f64,
    pub nx: usize,
    pub nz: usize,
    #[serde(default)]
    pub y0: f64,
}

impl ImageGrid {
    pub fn new(
        x_origin: f64,
        z_origin: f64,
        lateral_pitch: f64,
        axial_pitch: f64,
        nx: usize,
        nz: usize,
    ) -> Result<Self> {
        let grid = Self {
            x_origin,
            z_origin,
            lateral_pitch,
            axial_pitch,
            nx,
            nz,
            y0: 0.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.nz == 0 {
            return Err(PamError::Config(format!(
                "grid must have at least one pixel per axis, got {}x{}",
                self.nx, self.nz
            )));
        }
        if !(self.lateral_pitch > 0.0) || !(self.axial_pitch > 0.0) {
            return Err(PamError::Config("grid pitches must be positive".into()));
        }
        if ![self.x_origin, self.z_origin, self.lateral_pitch, self.axial_pitch, self.y0]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(PamError::Config("grid parameters must be finite".into()));
        }
        Ok(())
    }

    /// Number of pixels `N = nx * nz`.
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.nz);
        j * self.nx + i
    }

    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n % self.nx, n / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_origin + i as f64 * self.lateral_pitch
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_origin + j as f64 * self.axial_pitch
    }

    pub fn position(&self, n: usize) -> [f64; 3] {
        let (i, j) = self.coords(n);
        [self.x(i), self.y0, self.z(j)]
    }

    /// Nearest pixel to a lateral/axial coordinate, if it lies within half a pitch of the grid.
    pub fn nearest_pixel(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x_origin) / self.lateral_pitch).round();
        let fj = ((z - self.z_origin) / self.axial_pitch).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.nz as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }
}

/// Propagation medium and sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub sound_speed: f64,
    pub sampling_frequency: f64,
    pub samples: usize,
}

impl AcquisitionConfig {
    pub fn new(sound_speed: f64, sampling_frequency: f64, samples: usize) -> Result<Self> {
        let acq = Self {
            sound_speed,
            sampling_frequency,
            samples,
        };
        acq.validate()?;
        Ok(acq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sound_speed > 0.0) || !self.sound_speed.is_finite() {
            return Err(PamError::Config(format!(
                "speed of sound must be positive, got {}",
                self.sound_speed
            )));
        }
        if !(self.sampling_frequency > 0.0) || !self.sampling_frequency.is_finite() {
            return Err(PamError::Config(format!(
                "sampling frequency must be positive, got {}",
                self.sampling_frequency
            )));
        }
        if self.samples == 0 {
            return Err(PamError::Config("record length must be at least one sample".into()));
        }
        Ok(())
    }

    /// Time instant of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.sampling_frequency
    }

    pub fn duration(&self) -> f64 {
        self.samples as f64 / self.sampling_frequency
    }
}

/// Integer delays (in samples) between every sensor and every pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayTable {
    sensors: usize,
    nx: usize,
    nz: usize,
    pixels: usize,
    samples: usize,
    delays: Vec<u32>,
}

/// Time of flight in samples, rounded half away from zero.
pub fn delay_samples(distance: f64, sound_speed: f64, sampling_frequency: f64) -> u32 {
    // f64::round rounds half-way cases away from zero
    let d = (distance / sound_speed * sampling_frequency).round();
    d as u32
}

/// Builds the `N_m x N` table of rounded times of flight, including the `y0` offset.
pub fn build_delay_table(
    array: &SensorArray,
    grid: &ImageGrid,
    acq: &AcquisitionConfig,
) -> Result<DelayTable> {
    acq.validate()?;
    grid.validate()?;
    let pixels = grid.len();
    let mut delays = vec![0u32; array.count() * pixels];
    delays
        .par_chunks_mut(pixels)
        .zip(array.positions().par_iter())
        .for_each(|(row, s)| {
            for (n, d) in row.iter_mut().enumerate() {
                let p = grid.position(n);
                let dist = ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2) + (p[2] - s[2]).powi(2))
                    .sqrt();
                *d = delay_samples(dist, acq.sound_speed, acq.sampling_frequency);
            }
        });
    Ok(DelayTable {
        sensors: array.count(),
        nx: grid.nx,
        nz: grid.nz,
        pixels,
        samples: acq.samples,
        delays,
    })
}

impl DelayTable {
    /// Builds a table from raw delays (row-major by sensor).
    pub fn from_raw(
        sensors: usize,
        nx: usize,
        nz: usize,
        samples: usize,
        delays: Vec<u32>,
    ) -> Result<Self> {
        let pixels = nx * nz;
        if delays.len() != sensors * pixels {
            return Err(PamError::Dimension(format!(
                "delay table needs {} entries, got {}",
                sensors * pixels,
                delays.len()
            )));
        }
        Ok(Self {
            sensors,
            nx,
            nz,
            pixels,
            samples,
            delays,
        })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    /// Grid shape `(nx, nz)` the table was built on.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    /// Record length `N_t` the table was built for.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, m: usize, n: usize) -> u32 {
        self.delays[m * self.pixels + n]
    }

    pub fn row(&self, m: usize) -> &[u32] {
        &self.delays[m * self.pixels..(m + 1) * self.pixels]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.delays
    }

    /// Pixels whose emissions reach sensor `m` exactly at sample `k`.
    pub fn contributor_set(&self, m: usize, k: usize) -> Result<Vec<usize>> {
        if m >= self.sensors {
            return Err(PamError::Index {
                what: "sensor",
                index: m,
                len: self.sensors,
            });
        }
        if k >= self.samples {
            return Err(PamError::Index {
                what: "sample",
                index: k,
                len: self.samples,
            });
        }
        Ok(self
            .row(m)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d as usize == k)
            .map(|(n, _)| n)
            .collect())
    }

    pub fn max_delay(&self) -> u32 {
        self.delays.iter().copied().max().unwrap_or(0)
    }
}

/// One-based ordinal `ceil(N_m / 2)` of the central sensor.
///
/// The zero-based index used by the rest of the crate is one less.
pub fn central_sensor_index(count: usize) -> usize {
    count.div_ceil(2)
}

/// Outcome of [`validate_pitch_matching`].
#[derive(Clone, Debug, PartialEq)]
pub enum PitchMatch {
    /// Geometry is shift-invariant. `first_lattice_index` is the (possibly
    /// negative) grid lateral index of the first sensor.
    Matched { first_lattice_index: i64 },
    PitchMismatch { array_pitch: f64, grid_pitch: f64 },
    NonCoplanar { sensor: usize },
    LatticeMisalignment { sensor: usize, offset: f64 },
}

impl PitchMatch {
    pub fn is_pass(&self) -> bool {
        matches!(self, PitchMatch::Matched { .. })
    }
}

impl fmt::Display for PitchMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PitchMatch::Matched { first_lattice_index } => {
                write!(f, "pass (first sensor on lattice index {first_lattice_index})")
            }
            PitchMatch::PitchMismatch {
                array_pitch,
                grid_pitch,
            } => write!(
                f,
                "pitch mismatch: sensor pitch {array_pitch:e} m vs lateral pixel width {grid_pitch:e} m"
            ),
            PitchMatch::NonCoplanar { sensor } => write!(
                f,
                "non-coplanar array: sensor {sensor} depth differs from sensor 0"
            ),
            PitchMatch::LatticeMisalignment { sensor, offset } => write!(
                f,
                "lattice misalignment: sensor {sensor} is {offset:e} m off the grid lattice"
            ),
        }
    }
}

/// Checks the sensor-pitch to pixel-width matching required by the convolutional operators.
pub fn validate_pitch_matching(array: &SensorArray, grid: &ImageGrid) -> PitchMatch {
    let dx = grid.lateral_pitch;
    if (array.pitch() - dx).abs() > LATTICE_TOLERANCE {
        return PitchMatch::PitchMismatch {
            array_pitch: array.pitch(),
            grid_pitch: dx,
        };
    }
    let z0 = array.position(0)[2];
    if let Some(m) = array.positions().iter().position(|p| p[2] != z0) {
        return PitchMatch::NonCoplanar { sensor: m };
    }
    let mut first = 0i64;
    for (m, p) in array.positions().iter().enumerate() {
        let rel = (p[0] - grid.x_origin) / dx;
        let idx = rel.round();
        let offset = (rel - idx) * dx;
        if offset.abs() > LATTICE_TOLERANCE {
            return PitchMatch::LatticeMisalignment { sensor: m, offset };
        }
        if m == 0 {
            first = idx as i64;
        } else if idx as i64 != first + m as i64 {
            // descending sensor order would flip the lateral shift direction
            return PitchMatch::LatticeMisalignment { sensor: m, offset: (idx as i64 - first - m as i64) as f64 * dx };
        }
    }
    PitchMatch::Matched {
        first_lattice_index: first,
    }
}

/// Flat geometry description as it appears in configuration files (SI units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub sensors: usize,
    pub pitch: f64,
    pub first_sensor_x: f64,
    #[serde(default)]
    pub sensor_z: f64,
    pub grid_x_origin: f64,
    pub grid_z_origin: f64,
    pub lateral_pitch: f64,
    pub axial_pitch: f64,
    pub nx: usize,
    pub nz: usize,
    #[serde(default)]
    pub y0: f64,
    pub sound_speed: f64,
    pub sampling_frequency: f64,
    pub samples: usize,
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        let array =
            SensorArray::linear_at_depth(self.sensors, self.pitch, self.first_sensor_x, self.sensor_z)?;
        let grid = ImageGrid::new(
            self.grid_x_origin,
            self.grid_z_origin,
            self.lateral_pitch,
            self.axial_pitch,
            self.nx,
            self.nz,
        )?
        .with_y0(self.y0);
        let acq = AcquisitionConfig::new(self.sound_speed, self.sampling_frequency, self.samples)?;
        Ok(Geometry { array, grid, acq })
    }

    /// Pitch-matched geometry with the array centred on a grid of `nx` pixels,
    /// the grid starting one axial pitch below the array.
    pub fn centered(sensors: usize, nx: usize, nz: usize, samples: usize) -> Self {
        let pitch = 3.0e-4;
        let first = -((sensors as f64 - 1.0) / 2.0).floor() * pitch;
        let grid_x = -((nx as f64 - 1.0) / 2.0).floor() * pitch;
        Self {
            sensors,
            pitch,
            first_sensor_x: first,
            sensor_z: 0.0,
            grid_x_origin: grid_x,
            grid_z_origin: pitch,
            lateral_pitch: pitch,
            axial_pitch: pitch,
            nx,
            nz,
            y0: 0.0,
            sound_speed: 1540.0,
            sampling_frequency: 10.0e6,
            samples,
        }
    }
}

/// Validated array, grid and acquisition triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub array: SensorArray,
    pub grid: ImageGrid,
    pub acq: AcquisitionConfig,
}

impl Geometry {
    pub fn delay_table(&self) -> Result<DelayTable> {
        build_delay_table(&self.array, &self.grid, &self.acq)
    }

    pub fn pitch_matching(&self) -> PitchMatch {
        validate_pitch_matching(&self.array, &self.grid)
    }
}
