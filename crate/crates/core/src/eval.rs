//! Power maps, the TD-DAS baseline, and CNR / Dice metrics.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::forward::{adjoint_matrix_free, CavitationCube, RfData};
use crate::geometry::DelayTable;
use crate::scalar::Scalar;

/// Non-negative `N_x x N_z` map, stored row-major by depth (`j * nx + i`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerMap {
    nx: usize,
    nz: usize,
    values: Vec<f64>,
    /// Sample range the map integrates over.
    window: Option<(usize, usize)>,
}

impl PowerMap {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self {
            nx,
            nz,
            values: vec![0.0; nx * nz],
            window: None,
        }
    }

    pub fn from_vec(nx: usize, nz: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * nz {
            return Err(PamError::Dimension(format!(
                "power map needs {} values, got {}",
                nx * nz,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(PamError::Metric(format!("power map values must be finite and >= 0, found {v}")));
        }
        Ok(Self {
            nx,
            nz,
            values,
            window: None,
        })
    }

    pub fn with_window(mut self, window: Range<usize>) -> Self {
        self.window = Some((window.start, window.end));
        self
    }

    pub fn window(&self) -> Option<Range<usize>> {
        self.window.map(|(a, b)| a..b)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Pixel `(i, j)` of the maximum (first in scan order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let n = self
            .values
            .iter()
            .enumerate()
            .fold(0, |best, (n, &v)| if v > self.values[best] { n } else { best });
        (n % self.nx, n / self.nx)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        let mut out = Self::from_vec(self.nx, self.nz, self.values.iter().map(|v| alpha * v).collect())?;
        out.window = self.window;
        Ok(out)
    }

    /// `10 log10(value / max)`, floored at `floor_db`.
    pub fn to_db(&self, floor_db: f64) -> Vec<f64> {
        let max = self.max();
        self.values
            .iter()
            .map(|&v| {
                if max > 0.0 && v > 0.0 {
                    (10.0 * (v / max).log10()).max(floor_db)
                } else {
                    floor_db
                }
            })
            .collect()
    }
}

/// Binary `N_x x N_z` pixel set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    nx: usize,
    nz: usize,
    values: Vec<bool>,
}

impl Mask {
    pub fn empty(nx: usize, nz: usize) -> Self {
        Self {
            nx,
            nz,
            values: vec![false; nx * nz],
        }
    }

    pub fn from_vec(nx: usize, nz: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != nx * nz {
            return Err(PamError::Dimension(format!(
                "mask needs {} values, got {}",
                nx * nz,
                values.len()
            )));
        }
        Ok(Self { nx, nz, values })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.values[j * self.nx + i] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn check(&self, other: &Mask) -> Result<()> {
        if (self.nx, self.nz) != (other.nx, other.nz) {
            return Err(PamError::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.nx, self.nz, other.nx, other.nz
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a || *b).collect();
        Ok(Mask { values, ..*self })
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check(other)?;
        Ok(self.values.iter().zip(&other.values).filter(|(a, b)| **a && **b).count())
    }

    pub fn complement(&self) -> Mask {
        Mask {
            values: self.values.iter().map(|v| !v).collect(),
            ..*self
        }
    }

    /// Pixels at Chebyshev distance greater than `margin` from every pixel of `self`.
    pub fn far_from(&self, margin: usize) -> Mask {
        let (nx, nz) = (self.nx, self.nz);
        let r = margin as i64;
        let values = (0..nx * nz)
            .map(|n| {
                let (i, j) = ((n % nx) as i64, (n / nx) as i64);
                !((j - r).max(0)..=(j + r).min(nz as i64 - 1)).any(|jj| {
                    ((i - r).max(0)..=(i + r).min(nx as i64 - 1)).any(|ii| self.values[jj as usize * nx + ii as usize])
                })
            })
            .collect();
        Mask { values, ..*self }
    }

    /// Pixels whose value reaches `threshold` (none when `threshold` is not positive and the map is all zero).
    pub fn above(map: &PowerMap, threshold: f64) -> Mask {
        let any = map.max() > 0.0;
        Mask {
            nx: map.nx,
            nz: map.nz,
            values: map.values.iter().map(|&v| any && v >= threshold).collect(),
        }
    }
}

/// Background for CNR: the complement of the ROI eroded by `erosion` pixels.
/// Pixels outside the image count as background, so the border is not eroded.
pub fn background_mask(roi: &Mask, erosion: usize) -> Mask {
    roi.far_from(erosion)
}

/// `X[i][j] = Σ_k x[i][j][k]²` over the whole record.
pub fn power_map<T: Scalar>(x: &CavitationCube<T>) -> PowerMap {
    power_map_window(x, 0..x.nt()).expect("full record is a valid window")
}

/// Power map integrated over a sample window.
pub fn power_map_window<T: Scalar>(x: &CavitationCube<T>, window: Range<usize>) -> Result<PowerMap> {
    if window.is_empty() || window.end > x.nt() {
        return Err(PamError::Config(format!(
            "window {window:?} is empty or exceeds the record of {} samples",
            x.nt()
        )));
    }
    let values = (0..x.pixels())
        .into_par_iter()
        .map(|n| x.pixel(n)[window.clone()].iter().map(|v| v.as_f64() * v.as_f64()).sum())
        .collect();
    Ok(PowerMap {
        nx: x.nx(),
        nz: x.nz(),
        values,
        window: Some((window.start, window.end)),
    })
}

/// Delay-and-sum signals `s_n[k] = Σ_m y[m][k + δ_{m,n}]` (samples past the record are zero).
pub fn das_signals<T: Scalar>(y: &RfData<T>, table: &DelayTable) -> Result<CavitationCube<T>> {
    adjoint_matrix_free(y, table)
}

/// TD-DAS power map: `Σ_{k in window} s_n[k]²`.
pub fn td_das<T: Scalar>(y: &RfData<T>, table: &DelayTable, window: Range<usize>) -> Result<PowerMap> {
    if window.is_empty() {
        return Err(PamError::Config("TD-DAS window is empty".into()));
    }
    if window.end > y.nt() {
        return Err(PamError::Config(format!(
            "TD-DAS window {window:?} exceeds the record of {} samples",
            y.nt()
        )));
    }
    power_map_window(&das_signals(y, table)?, window)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// `20 log10(|mean_roi - mean_bg| / std_bg)` with the population standard deviation.
pub fn cnr(map: &PowerMap, roi: &Mask, background: &Mask) -> Result<f64> {
    for m in [roi, background] {
        if (m.nx, m.nz) != (map.nx, map.nz) {
            return Err(PamError::Dimension("mask does not match map".into()));
        }
        if m.is_empty() {
            return Err(PamError::Metric("CNR needs non-empty ROI and background".into()));
        }
    }
    if roi.intersection_count(background)? != 0 {
        return Err(PamError::Metric("ROI and background overlap".into()));
    }
    let pick = |m: &Mask| -> Vec<f64> {
        m.values.iter().zip(&map.values).filter(|(b, _)| **b).map(|(_, v)| *v).collect()
    };
    let (roi_v, bg_v) = (pick(roi), pick(background));
    let (mu_roi, _, _) = mean_std(roi_v.iter().copied());
    let (mu_bg, sd_bg, _) = mean_std(bg_v.iter().copied());
    if !(sd_bg > 0.0) {
        return Err(PamError::Metric("background has zero variance".into()));
    }
    Ok(20.0 * ((mu_roi - mu_bg).abs() / sd_bg).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    /// Level in dB (power convention, `10^(dB/10)`) relative to the map maximum.
    RelativeDb(f64),
    Absolute(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::RelativeDb(-6.0)
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, map: &PowerMap) -> f64 {
        match *self {
            ThresholdPolicy::RelativeDb(db) => map.max() * 10f64.powf(db / 10.0),
            ThresholdPolicy::Absolute(t) => t,
        }
    }

    pub fn binarize(&self, map: &PowerMap) -> Mask {
        Mask::above(map, self.threshold(map))
    }
}

/// `2|A ∩ B| / (|A| + |B|)`.
pub fn dice_masks(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    if total == 0 {
        return Err(PamError::Metric("Dice of two empty masks is undefined".into()));
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Dice between the binarized map and the ground truth; an all-zero map scores 0.
pub fn dice(map: &PowerMap, truth: &Mask, policy: ThresholdPolicy) -> Result<f64> {
    if (truth.nx, truth.nz) != (map.nx, map.nz) {
        return Err(PamError::Dimension("ground truth does not match map".into()));
    }
    if truth.is_empty() {
        return Err(PamError::Metric("ground-truth mask is empty".into()));
    }
    if map.max() == 0.0 {
        return Ok(0.0);
    }
    dice_masks(&policy.binarize(map), truth)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub background_erosion: usize,
    pub threshold: ThresholdPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            background_erosion: 2,
            threshold: ThresholdPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub window: usize,
    pub method: String,
    /// `None` when CNR is undefined; see `error`.
    pub cnr_db: Option<f64>,
    pub dice: f64,
    pub error: Option<String>,
}

/// Metrics of one map against its window's ground truth.
pub fn evaluate_map(window: usize, method: &str, map: &PowerMap, truth: &Mask, cfg: &EvalConfig) -> MetricRow {
    let background = background_mask(truth, cfg.background_erosion);
    let (cnr_db, mut error) = match cnr(map, truth, &background) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let dice = match dice(map, truth, cfg.threshold) {
        Ok(d) => d,
        Err(e) => {
            error.get_or_insert_with(|| e.to_string());
            0.0
        }
    };
    MetricRow {
        window,
        method: method.to_string(),
        cnr_db,
        dice,
        error,
    }
}

/// Rows for every `(window, method)`, ordered by window then method name.
pub fn evaluate_windows(methods: &[(String, Vec<PowerMap>)], truth: &[Mask], cfg: &EvalConfig) -> Result<Vec<MetricRow>> {
    for (name, maps) in methods {
        if maps.len() != truth.len() {
            return Err(PamError::Dimension(format!(
                "method '{name}' has {} maps for {} windows",
                maps.len(),
                truth.len()
            )));
        }
    }
    let mut rows: Vec<MetricRow> = methods
        .par_iter()
        .flat_map_iter(|(name, maps)| {
            maps.iter()
                .zip(truth)
                .enumerate()
                .map(|(w, (map, gt))| evaluate_map(w, name, map, gt, cfg))
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by(|a, b| (a.window, &a.method).cmp(&(b.window, &b.method)));
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub cnr_mean: f64,
    pub cnr_std: f64,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub windows: usize,
    /// Windows whose CNR was undefined.
    pub cnr_failures: usize,
}

impl fmt::Display for MethodSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<18} CNR {:.2} ({:.2}) dB   Dice {:.2} ({:.2})",
            self.method, self.cnr_mean, self.cnr_std, self.dice_mean, self.dice_std
        )
    }
}

/// Mean (population std) per method, in first-appearance order.
pub fn summarize(rows: &[MetricRow]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine = rows.iter().filter(|r| r.method == name);
            let (cnr_mean, cnr_std, ok) = mean_std(mine.clone().filter_map(|r| r.cnr_db));
            let (dice_mean, dice_std, windows) = mean_std(mine.map(|r| r.dice));
            MethodSummary {
                method: name.to_string(),
                cnr_mean,
                cnr_std,
                dice_mean,
                dice_std,
                windows,
                cnr_failures: windows - ok,
            }
        })
        .collect()
}

pub fn write_rows_csv(rows: &[MetricRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "window,method,cnr_db,dice,error")?;
    for r in rows {
        let cnr = r.cnr_db.map_or(String::new(), |v| format!("{v:.6}"));
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(w, "{},{},{},{:.6},{}", r.window, r.method, cnr, r.dice, err)?;
    }
    Ok(())
}

pub fn write_summary_csv(summary: &[MethodSummary], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "method,cnr_mean,cnr_std,dice_mean,dice_std,windows,cnr_failures")?;
    for s in summary {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            s.method, s.cnr_mean, s.cnr_std, s.dice_mean, s.dice_std, s.windows, s.cnr_failures
        )?;
    }
    Ok(())
}
