//! Wall-clock timing of the forward operators against record length.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forward::{make_operator, next_smooth_len, CavitationCube, OperatorKind};
use crate::geometry::GeometryConfig;

use crate::error::{PamError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operator: OperatorKind,
    pub nt: usize,
    pub median_seconds: Option<f64>,
    pub min_seconds: Option<f64>,
    pub max_seconds: Option<f64>,
    pub repetitions: usize,
    /// Why the size was skipped, if it was.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub operator: OperatorKind,
    /// Slope of log(time) against log(N_t).
    pub exponent: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<ScalingFit>,
}

impl BenchReport {
    pub fn exponent(&self, op: OperatorKind) -> Option<f64> {
        self.fits.iter().find(|f| f.operator == op).map(|f| f.exponent)
    }

    pub fn median(&self, op: OperatorKind, nt: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.operator == op && r.nt == nt)
            .and_then(|r| r.median_seconds)
    }

    /// `time(slow) / time(fast)` at one size.
    pub fn speedup(&self, slow: OperatorKind, fast: OperatorKind, nt: usize) -> Option<f64> {
        Some(self.median(slow, nt)? / self.median(fast, nt)?)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "operator,nt,median_s,min_s,max_s,repetitions,status")?;
        let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6e}"));
        for r in &self.rows {
            let status = r.skipped.as_deref().map_or("ok".to_string(), |s| format!("skipped: {}", s.replace(',', ";")));
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.operator.name(),
                r.nt,
                f(r.median_seconds),
                f(r.min_seconds),
                f(r.max_seconds),
                r.repetitions,
                status
            )?;
        }
        Ok(())
    }

    pub fn write_fits_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "operator,exponent,points")?;
        for s in &self.fits {
            writeln!(w, "{},{:.4},{}", s.operator.name(), s.exponent, s.points)?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Rough peak working set of one forward application, in bytes.
pub fn memory_estimate(geometry: &GeometryConfig, op: OperatorKind) -> u64 {
    let (n, nt, m) = (
        (geometry.nx * geometry.nz) as u64,
        geometry.samples as u64,
        geometry.sensors as u64,
    );
    let base = 8 * (n * nt + m * nt) + 4 * m * n;
    match op {
        OperatorKind::MatrixFree => base,
        OperatorKind::Conv => base + 8 * (3 * geometry.nx as u64) * nt,
        OperatorKind::Fft => {
            let lx = next_smooth_len(3 * geometry.nx) as u64;
            let lt = next_smooth_len(2 * geometry.samples) as u64;
            base + 16 * lx * (lt / 2 + 1) * (geometry.nz as u64 + 2)
        }
    }
}

fn random_cube(nx: usize, nz: usize, nt: usize, seed: u64) -> Result<CavitationCube<f64>, String> {
    let len = nx * nz * nt;
    let mut values: Vec<f64> = Vec::new();
    values.try_reserve_exact(len).map_err(|e| format!("allocation of {len} samples failed: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.extend((0..len).map(|_| rng.gen_range(-1.0..1.0)));
    CavitationCube::from_vec(nx, nz, nt, values).map_err(|e| e.to_string())
}

/// Times `repetitions` forward applications of each operator at each record length.
pub fn run_bench(
    base: &GeometryConfig,
    sizes: &[usize],
    repetitions: usize,
    operators: &[OperatorKind],
    memory_budget_bytes: u64,
    seed: u64,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(PamError::Config("repetitions must be at least 1".into()));
    }
    if sizes.is_empty() || operators.is_empty() {
        return Err(PamError::Config("need at least one size and one operator".into()));
    }
    let mut rows = Vec::new();
    for &nt in sizes {
        let geometry_cfg = GeometryConfig {
            samples: nt,
            ..base.clone()
        };
        let geometry = geometry_cfg.build()?;
        let table = geometry.delay_table()?;
        let cube = random_cube(geometry_cfg.nx, geometry_cfg.nz, nt, seed ^ nt as u64);
        for &kind in operators {
            let mut row = BenchRow {
                operator: kind,
                nt,
                median_seconds: None,
                min_seconds: None,
                max_seconds: None,
                repetitions,
                skipped: None,
            };
            let need = memory_estimate(&geometry_cfg, kind);
            if need > memory_budget_bytes {
                row.skipped = Some(format!(
                    "needs about {} MiB, budget {} MiB",
                    need >> 20,
                    memory_budget_bytes >> 20
                ));
                log::warn!("bench: skipping {} at N_t={nt}: {}", kind.name(), row.skipped.as_ref().unwrap());
                rows.push(row);
                continue;
            }
            let x = match &cube {
                Ok(x) => x,
                Err(e) => {
                    row.skipped = Some(e.clone());
                    rows.push(row);
                    continue;
                }
            };
            let op = make_operator::<f64>(kind, &geometry, &table)?;
            // one untimed warm-up (page faults, FFT twiddles)
            std::hint::black_box(op.apply(x)?);
            let mut times = Vec::with_capacity(repetitions);
            for _ in 0..repetitions {
                let t = Instant::now();
                let y = op.apply(x)?;
                times.push(t.elapsed().as_secs_f64());
                std::hint::black_box(y);
            }
            row.min_seconds = times.iter().copied().reduce(f64::min);
            row.max_seconds = times.iter().copied().reduce(f64::max);
            row.median_seconds = median(&mut times);
            log::info!("bench: {} N_t={nt}: {:.4} s", kind.name(), row.median_seconds.unwrap());
            rows.push(row);
        }
    }
    let fits = operators
        .iter()
        .filter_map(|&op| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.operator == op)
                .filter_map(|r| Some((r.nt as f64, r.median_seconds?)))
                .collect();
            loglog_slope(&pts).map(|exponent| ScalingFit {
                operator: op,
                exponent,
                points: pts.len(),
            })
        })
        .collect();
    Ok(BenchReport { rows, fits })
}
