//! File formats: a little-endian binary container for cubes and RF records,
//! numeric CSV matrices, and portable graymap images of maps and masks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma};

use crate::error::{PamError, Result};
use crate::eval::{Mask, PowerMap};
use crate::forward::{CavitationCube, RfData};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"PAMD";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Cube,
    Rf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Units {
    #[default]
    Arbitrary,
    Pascal,
}

/// Container header. `dims` is `(nx, nz, nt)` for cubes and `(sensors, nt, 1)` for RF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub kind: DataKind,
    pub units: Units,
    pub dims: [u64; 3],
    pub sampling_frequency: f64,
}

impl Header {
    pub fn values(&self) -> Result<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
            .ok_or_else(|| PamError::Format(format!("dimensions {:?} overflow", self.dims)))
    }

    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u8(match self.kind {
            DataKind::Cube => 0,
            DataKind::Rf => 1,
        })?;
        w.write_u8(match self.units {
            Units::Arbitrary => 0,
            Units::Pascal => 1,
        })?;
        for d in self.dims {
            w.write_u64::<LittleEndian>(d)?;
        }
        w.write_f64::<LittleEndian>(self.sampling_frequency)?;
        Ok(())
    }

    fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(PamError::Format(format!("bad magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(PamError::Format(format!("unsupported container version {version}")));
        }
        let kind = match r.read_u8()? {
            0 => DataKind::Cube,
            1 => DataKind::Rf,
            k => return Err(PamError::Format(format!("unknown data kind {k}"))),
        };
        let units = match r.read_u8()? {
            0 => Units::Arbitrary,
            1 => Units::Pascal,
            u => return Err(PamError::Format(format!("unknown units flag {u}"))),
        };
        let mut dims = [0u64; 3];
        for d in &mut dims {
            *d = r.read_u64::<LittleEndian>()?;
        }
        let sampling_frequency = r.read_f64::<LittleEndian>()?;
        if !(sampling_frequency > 0.0 && sampling_frequency.is_finite()) {
            return Err(PamError::Format(format!("invalid sampling frequency {sampling_frequency}")));
        }
        Ok(Self {
            kind,
            units,
            dims,
            sampling_frequency,
        })
    }
}

fn write_values<T: Scalar>(w: &mut impl Write, values: &[T]) -> Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v.as_f64())?;
    }
    Ok(())
}

fn read_values<T: Scalar>(r: &mut impl Read, count: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(T::of(r.read_f64::<LittleEndian>()?));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(PamError::Format("trailing bytes after data".into()));
    }
    Ok(out)
}

pub fn write_cube<T: Scalar>(w: &mut impl Write, x: &CavitationCube<T>, fs: f64, units: Units) -> Result<()> {
    let (nx, nz, nt) = x.shape();
    Header {
        kind: DataKind::Cube,
        units,
        dims: [nx as u64, nz as u64, nt as u64],
        sampling_frequency: fs,
    }
    .write(w)?;
    write_values(w, x.as_slice())
}

pub fn read_cube<T: Scalar>(r: &mut impl Read) -> Result<(CavitationCube<T>, Header)> {
    let h = Header::read(r)?;
    if h.kind != DataKind::Cube {
        return Err(PamError::Format("expected a cube container, found RF data".into()));
    }
    let values = read_values(r, h.values()?)?;
    let [nx, nz, nt] = h.dims.map(|d| d as usize);
    Ok((CavitationCube::from_vec(nx, nz, nt, values)?, h))
}

pub fn write_rf<T: Scalar>(w: &mut impl Write, y: &RfData<T>, fs: f64, units: Units) -> Result<()> {
    let (m, nt) = y.shape();
    Header {
        kind: DataKind::Rf,
        units,
        dims: [m as u64, nt as u64, 1],
        sampling_frequency: fs,
    }
    .write(w)?;
    write_values(w, y.as_slice())
}

pub fn read_rf<T: Scalar>(r: &mut impl Read) -> Result<(RfData<T>, Header)> {
    let h = Header::read(r)?;
    if h.kind != DataKind::Rf {
        return Err(PamError::Format("expected an RF container, found a cube".into()));
    }
    if h.dims[2] != 1 {
        return Err(PamError::Format(format!("RF container has third dimension {}", h.dims[2])));
    }
    let values = read_values(r, h.values()?)?;
    Ok((RfData::from_vec(h.dims[0] as usize, h.dims[1] as usize, values)?, h))
}

pub fn save_cube<T: Scalar>(path: &Path, x: &CavitationCube<T>, fs: f64, units: Units) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cube(&mut w, x, fs, units)?;
    w.flush()?;
    Ok(())
}

pub fn load_cube<T: Scalar>(path: &Path) -> Result<(CavitationCube<T>, Header)> {
    read_cube(&mut BufReader::new(File::open(path)?))
}

pub fn save_rf<T: Scalar>(path: &Path, y: &RfData<T>, fs: f64, units: Units) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rf(&mut w, y, fs, units)?;
    w.flush()?;
    Ok(())
}

pub fn load_rf<T: Scalar>(path: &Path) -> Result<(RfData<T>, Header)> {
    read_rf(&mut BufReader::new(File::open(path)?))
}

/// Row-major numeric matrix, one row per line, full round-trip precision.
pub fn write_matrix_csv(w: &mut impl Write, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(PamError::Dimension(format!(
            "{rows}x{cols} matrix needs {} values, got {}",
            rows * cols,
            values.len()
        )));
    }
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Returns `(rows, cols, values)`; blank lines are ignored, ragged rows rejected.
pub fn read_matrix_csv(r: impl BufRead) -> Result<(usize, usize, Vec<f64>)> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| PamError::Format(format!("line {}: '{}': {e}", n + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(PamError::Format(format!("line {} has {} fields, expected {c}", n + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// RF as CSV: one line per sensor.
pub fn write_rf_csv<T: Scalar>(w: &mut impl Write, y: &RfData<T>) -> Result<()> {
    let v: Vec<f64> = y.as_slice().iter().map(|v| v.as_f64()).collect();
    write_matrix_csv(w, y.sensors(), y.nt(), &v)
}

/// Cube as CSV: one line per pixel `n = j * nx + i`, time along the line.
pub fn write_cube_csv<T: Scalar>(w: &mut impl Write, x: &CavitationCube<T>) -> Result<()> {
    let v: Vec<f64> = x.as_slice().iter().map(|v| v.as_f64()).collect();
    write_matrix_csv(w, x.pixels(), x.nt(), &v)
}

/// Map as CSV in image layout: `nz` lines (depth) of `nx` values (lateral).
pub fn save_map_csv(path: &Path, map: &PowerMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_csv(&mut w, map.nz(), map.nx(), map.as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn load_map_csv(path: &Path) -> Result<PowerMap> {
    let (nz, nx, v) = read_matrix_csv(BufReader::new(File::open(path)?))?;
    PowerMap::from_vec(nx, nz, v)
}

pub fn save_mask_csv(path: &Path, mask: &Mask) -> Result<()> {
    let v: Vec<f64> = mask.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_csv(&mut w, mask.nz(), mask.nx(), &v)?;
    w.flush()?;
    Ok(())
}

pub fn load_mask_csv(path: &Path) -> Result<Mask> {
    let (nz, nx, v) = read_matrix_csv(BufReader::new(File::open(path)?))?;
    if let Some(bad) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(PamError::Format(format!("mask value {bad} is not 0 or 1")));
    }
    Mask::from_vec(nx, nz, v.into_iter().map(|x| x == 1.0).collect())
}

fn save_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let err = |e: image::ImageError| PamError::Format(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path)?);
    PnmEncoder::new(&mut w)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .map_err(err)?;
    w.flush()?;
    Ok(())
}

fn gray(nx: usize, nz: usize, level: impl Fn(usize) -> f64) -> GrayImage {
    GrayImage::from_fn(nx as u32, nz as u32, |i, j| {
        let v = level(j as usize * nx + i as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

/// 8-bit binary graymap, linear in power, white at the map maximum.
pub fn save_map_pgm(path: &Path, map: &PowerMap) -> Result<()> {
    let max = map.max();
    let v = map.as_slice();
    save_pgm(path, &gray(map.nx(), map.nz(), |n| if max > 0.0 { v[n] / max } else { 0.0 }))
}

/// Graymap of the map in dB re. its maximum, `floor_db` mapped to black.
pub fn save_map_db_pgm(path: &Path, map: &PowerMap, floor_db: f64) -> Result<()> {
    if !(floor_db < 0.0) {
        return Err(PamError::Config(format!("dB floor must be negative, got {floor_db}")));
    }
    let db = map.to_db(floor_db);
    save_pgm(path, &gray(map.nx(), map.nz(), |n| 1.0 - db[n] / floor_db))
}

pub fn save_mask_pgm(path: &Path, mask: &Mask) -> Result<()> {
    let v = mask.as_slice();
    save_pgm(path, &gray(mask.nx(), mask.nz(), |n| if v[n] { 1.0 } else { 0.0 }))
}
