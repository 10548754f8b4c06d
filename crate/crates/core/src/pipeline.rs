//! End-to-end reconstruction: RF record -> per-window power maps -> metrics.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::eval::{das_signals, evaluate_windows, power_map_window, summarize, EvalConfig, MethodSummary, MetricRow, PowerMap};
use crate::forward::{make_operator, OperatorKind, RfData};
use crate::geometry::{DelayTable, Geometry};
use crate::scalar::Scalar;
use crate::sim::{simulate, ScenarioSpec};
use crate::solver::{admm_spred, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    TdDas,
    SpRed(OperatorKind),
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SpRed(OperatorKind::Conv),
        Method::SpRed(OperatorKind::Fft),
        Method::SpRed(OperatorKind::MatrixFree),
        Method::TdDas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TdDas => "td-das",
            Method::SpRed(OperatorKind::Conv) => "spred-conv",
            Method::SpRed(OperatorKind::Fft) => "spred-fft",
            Method::SpRed(OperatorKind::MatrixFree) => "spred-matrixfree",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PamError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                PamError::Config(format!("unknown method '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Maps of one method over all windows, plus the solver log when applicable.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub method: Method,
    pub maps: Vec<PowerMap>,
    pub report: Option<SolveReport>,
    pub seconds: f64,
}

/// Reconstructs the whole record once and integrates it over each window.
pub fn reconstruct<T: Scalar>(
    rf: &RfData<T>,
    geometry: &Geometry,
    table: &DelayTable,
    method: Method,
    solver: &SolverConfig,
    windows: &[Range<usize>],
) -> Result<Reconstruction> {
    let start = Instant::now();
    let (cube, report) = match method {
        Method::TdDas => (das_signals(rf, table)?, None),
        Method::SpRed(kind) => {
            let op = make_operator::<T>(kind, geometry, table)?;
            let denoiser = solver.denoiser.build::<T>()?;
            let (x, report) = admm_spred(rf, op.as_ref(), denoiser.as_ref(), solver)?;
            (x, Some(report))
        }
    };
    let maps = windows
        .iter()
        .map(|w| power_map_window(&cube, w.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstruction {
        method,
        maps,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Outcome of running several methods on one scenario.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub reconstructions: Vec<Reconstruction>,
    pub rows: Vec<MetricRow>,
    pub summary: Vec<MethodSummary>,
}

impl Experiment {
    pub fn summary_of(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method.name())
    }

    pub fn maps_of(&self, method: Method) -> Option<&[PowerMap]> {
        self.reconstructions
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.maps.as_slice())
    }
}

/// Simulates `spec`, runs every method, and scores each window.
pub fn run_experiment(
    spec: &ScenarioSpec,
    methods: &[Method],
    solver: &SolverConfig,
    eval: &EvalConfig,
) -> Result<Experiment> {
    let sim = simulate::<f64>(spec)?;
    let windows = sim.truth.windows.clone();
    let mut reconstructions = Vec::with_capacity(methods.len());
    for &m in methods {
        let r = reconstruct(&sim.rf, &sim.geometry, &sim.table, m, solver, &windows)?;
        log::info!("{} finished in {:.1} s", m, r.seconds);
        reconstructions.push(r);
    }
    let named: Vec<(String, Vec<PowerMap>)> = reconstructions
        .iter()
        .map(|r| (r.method.name().to_string(), r.maps.clone()))
        .collect();
    let rows = evaluate_windows(&named, &sim.truth.masks, eval)?;
    let summary = summarize(&rows);
    Ok(Experiment {
        reconstructions,
        rows,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuScore {
    pub mu: f64,
    pub cnr_mean: f64,
    pub dice_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSearch {
    pub best_mu: f64,
    pub scores: Vec<MuScore>,
}

/// Grid search over μ maximizing mean CNR on a validation scenario (ties go to the smaller μ).
pub fn tune_mu(
    validation: &ScenarioSpec,
    grid: &[f64],
    kind: OperatorKind,
    solver: &SolverConfig,
    eval: &EvalConfig,
) -> Result<MuSearch> {
    if grid.is_empty() {
        return Err(PamError::Config("mu grid is empty".into()));
    }
    let sim = simulate::<f64>(validation)?;
    let windows = sim.truth.windows.clone();
    let method = Method::SpRed(kind);
    let mut scores = Vec::with_capacity(grid.len());
    for &mu in grid {
        let cfg = SolverConfig { mu, ..solver.clone() };
        cfg.validate()?;
        let r = reconstruct(&sim.rf, &sim.geometry, &sim.table, method, &cfg, &windows)?;
        let rows = evaluate_windows(&[(method.name().to_string(), r.maps)], &sim.truth.masks, eval)?;
        let s = &summarize(&rows)[0];
        log::info!("mu {mu}: CNR {:.3} dB, Dice {:.3} ({:.1} s)", s.cnr_mean, s.dice_mean, r.seconds);
        scores.push(MuScore {
            mu,
            cnr_mean: s.cnr_mean,
            dice_mean: s.dice_mean,
        });
    }
    let best = scores
        .iter()
        .filter(|s| s.cnr_mean.is_finite())
        .fold(None::<&MuScore>, |best, s| match best {
            Some(b) if b.cnr_mean >= s.cnr_mean => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| PamError::Metric("no mu value produced a finite CNR".into()))?;
    Ok(MuSearch {
        best_mu: best.mu,
        scores,
    })
}
