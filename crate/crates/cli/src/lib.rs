//! Simulation, beamforming, evaluation and benchmarking commands behind the `pam` binary.

pub mod manifest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pam_core::config::ExperimentConfig;
use pam_core::eval::{evaluate_windows, summarize, write_rows_csv, write_summary_csv, Mask, MethodSummary, MetricRow, PowerMap};
use pam_core::forward::{OperatorKind, RfData};
use pam_core::io::{self as pio, Units};
use pam_core::pipeline::{reconstruct, tune_mu, Method, MuSearch};
use pam_core::sim::{noise_seed, simulate};
use pam_core::PamError;

pub use pam_core::bench::{run_bench, BenchReport};
pub use manifest::{Invocation, RunManifest, Seeds, MANIFEST_FILE};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PAM_OUT_DIR";
/// Lower end of the dB-scaled map images.
pub const DB_FLOOR: f64 = -30.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<PamError> for CliError {
    fn from(e: PamError) -> Self {
        match e {
            PamError::Numerical { .. } => CliError::Numerical(e.to_string()),
            PamError::Io(_) | PamError::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `explicit`, else `$PAM_OUT_DIR`, else a usage error.
pub fn resolve_out_dir(explicit: Option<PathBuf>) -> CliResult<PathBuf> {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("no output directory: pass --out or set {OUT_DIR_ENV}")))
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p, overrides).map_err(|e| match e {
            PamError::Io(io) => CliError::io(p, io),
            other => other.into(),
        })?,
        None => ExperimentConfig::with_overrides(overrides)?,
    })
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn seeds(cfg: &ExperimentConfig) -> Seeds {
    Seeds {
        scenario: cfg.scenario.seed,
        noise: noise_seed(&cfg.scenario),
        solver: cfg.solver.seed,
    }
}

fn map_name(w: usize) -> String {
    format!("map_{w:02}")
}

fn mask_name(w: usize) -> String {
    format!("mask_{w:02}")
}

/// Writes the datacube, noisy and clean RF, ground truth and the config snapshot.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunManifest> {
    let start = Instant::now();
    prepare_dir(out)?;
    let truth_dir = out.join("truth");
    prepare_dir(&truth_dir)?;
    let sim = simulate::<f64>(&cfg.scenario)?;
    let fs = cfg.scenario.geometry.sampling_frequency;
    let config = cfg.to_toml_string()?;
    write_text(&out.join("config.toml"), &config)?;
    pio::save_cube(&out.join("cube.pamd"), &sim.cube, fs, Units::Arbitrary)?;
    pio::save_rf(&out.join("rf.pamd"), &sim.rf, fs, Units::Arbitrary)?;
    pio::save_rf(&out.join("rf_clean.pamd"), &sim.clean, fs, Units::Arbitrary)?;

    let path = truth_dir.join("windows.csv");
    let mut w = create(&path)?;
    let line = |w: &mut BufWriter<File>, s: String| writeln!(w, "{s}").map_err(|e| CliError::io(&path, e));
    line(&mut w, "window,start,end,active_clouds".into())?;
    for (i, (range, active)) in sim.truth.windows.iter().zip(&sim.truth.active).enumerate() {
        let ids: Vec<String> = active.iter().map(|c| c.to_string()).collect();
        line(&mut w, format!("{i},{},{},{}", range.start, range.end, ids.join(" ")))?;
    }
    finish(w, &path)?;
    for (i, (mask, reference)) in sim.truth.masks.iter().zip(&sim.truth.reference_maps).enumerate() {
        pio::save_mask_csv(&truth_dir.join(format!("{}.csv", mask_name(i))), mask)?;
        pio::save_mask_pgm(&truth_dir.join(format!("{}.pgm", mask_name(i))), mask)?;
        pio::save_map_csv(&truth_dir.join(format!("reference_{i:02}.csv")), reference)?;
    }

    let mut manifest = RunManifest::new(Invocation::Simulate, config, seeds(cfg));
    manifest.notes.push(format!("{} windows", sim.truth.windows.len()));
    manifest.record_outputs(out)?;
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write_atomic(out)?;
    Ok(manifest)
}

pub fn parse_method(name: &str) -> CliResult<Method> {
    name.parse::<Method>().map_err(|e| CliError::Usage(e.to_string()))
}

fn check_rf_matches(rf: &RfData<f64>, fs: f64, cfg: &ExperimentConfig, path: &Path) -> CliResult<()> {
    let g = &cfg.scenario.geometry;
    if rf.shape() != (g.sensors, g.samples) {
        return Err(CliError::Validation(format!(
            "{} holds {}x{} samples but the configuration describes {} sensors x {} samples",
            path.display(),
            rf.sensors(),
            rf.nt(),
            g.sensors,
            g.samples
        )));
    }
    if (fs - g.sampling_frequency).abs() > 1e-9 * g.sampling_frequency {
        return Err(CliError::Validation(format!(
            "{} was sampled at {fs} Hz, configuration says {} Hz",
            path.display(),
            g.sampling_frequency
        )));
    }
    Ok(())
}

/// Runs the grid search of `cfg.tuning` and returns the chosen μ with the scores.
pub fn run_tuning(cfg: &ExperimentConfig, kind: OperatorKind) -> CliResult<MuSearch> {
    if cfg.tuning.mu_grid.is_empty() {
        return Err(CliError::Validation("tuning requested but tuning.mu_grid is empty".into()));
    }
    let validation = cfg.tuning.validation_scenario(&cfg.scenario)?;
    Ok(tune_mu(&validation, &cfg.tuning.mu_grid, kind, &cfg.solver, &cfg.evaluation)?)
}

/// Reconstructs the record with `method` and writes one power map per window.
pub fn cmd_beamform(rf_path: &Path, method: &str, cfg: &ExperimentConfig, tune: bool, out: &Path) -> CliResult<RunManifest> {
    let start = Instant::now();
    let method = parse_method(method)?;
    let (rf, header) = pio::load_rf::<f64>(rf_path)?;
    check_rf_matches(&rf, header.sampling_frequency, cfg, rf_path)?;
    prepare_dir(out)?;
    let geometry = cfg.scenario.geometry.build()?;
    let table = geometry.delay_table()?;
    let windows = cfg.scenario.windows();

    let mut cfg = cfg.clone();
    let mut notes = Vec::new();
    if let (true, Method::SpRed(kind)) = (tune, method) {
        let t = Instant::now();
        let search = run_tuning(&cfg, kind)?;
        let path = out.join("mu_search.csv");
        let mut w = create(&path)?;
        writeln!(w, "mu,cnr_mean,dice_mean").map_err(|e| CliError::io(&path, e))?;
        for s in &search.scores {
            writeln!(w, "{},{:.6},{:.6}", s.mu, s.cnr_mean, s.dice_mean).map_err(|e| CliError::io(&path, e))?;
        }
        finish(w, &path)?;
        notes.push(format!("tuned mu = {} in {:.1} s", search.best_mu, t.elapsed().as_secs_f64()));
        cfg.solver.mu = search.best_mu;
    }
    let config = cfg.to_toml_string()?;
    write_text(&out.join("config.toml"), &config)?;

    let recon = reconstruct(&rf, &geometry, &table, method, &cfg.solver, &windows)?;
    for (i, map) in recon.maps.iter().enumerate() {
        pio::save_map_csv(&out.join(format!("{}.csv", map_name(i))), map)?;
        pio::save_map_pgm(&out.join(format!("{}.pgm", map_name(i))), map)?;
        pio::save_map_db_pgm(&out.join(format!("{}_db.pgm", map_name(i))), map, DB_FLOOR)?;
    }
    if let Some(report) = &recon.report {
        let path = out.join("solve_report.csv");
        let mut w = create(&path)?;
        report.write_csv(&mut w).map_err(|e| CliError::io(&path, e))?;
        finish(w, &path)?;
        notes.push(format!(
            "lambda {:.6e}, mu {}, operator scale {:.6e}, {} iterations, converged {}",
            report.lambda,
            report.mu,
            report.operator_norm,
            report.len(),
            report.converged
        ));
    }

    let mut manifest = RunManifest::new(
        Invocation::Beamform {
            rf: rf_path.to_path_buf(),
            method: method.name().to_string(),
            tune,
        },
        config,
        seeds(&cfg),
    );
    manifest.add_input(rf_path)?;
    manifest.notes = notes;
    manifest.record_outputs(out)?;
    manifest.timing("reconstruction", recon.seconds);
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write_atomic(out)?;
    Ok(manifest)
}

fn numbered_files(dir: &Path, prefix: &str) -> CliResult<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(idx) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|r| r.parse::<usize>().ok())
        else {
            continue;
        };
        found.push((idx, path));
    }
    found.sort();
    if let Some(gap) = found.iter().enumerate().find(|(i, (idx, _))| i != idx) {
        return Err(CliError::Validation(format!(
            "{}: {prefix}NN.csv files are not numbered 0..n (missing {:02})",
            dir.display(),
            gap.0
        )));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Method label of a maps directory: from its manifest, else the directory name.
fn method_label(dir: &Path) -> String {
    if let Ok(m) = RunManifest::load(&dir.join(MANIFEST_FILE)) {
        if let Invocation::Beamform { method, .. } = m.invocation {
            return method;
        }
    }
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub struct Evaluation {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<MethodSummary>,
    pub manifest: RunManifest,
}

/// Scores each maps directory against the ground-truth masks.
pub fn cmd_evaluate(maps: &[PathBuf], truth: &Path, cfg: &ExperimentConfig, out: &Path) -> CliResult<Evaluation> {
    let start = Instant::now();
    if maps.is_empty() {
        return Err(CliError::Usage("no maps directory given".into()));
    }
    let mask_files = numbered_files(truth, "mask_")?;
    if mask_files.is_empty() {
        return Err(CliError::Validation(format!("{}: no mask_NN.csv files", truth.display())));
    }
    let masks = mask_files
        .iter()
        .map(|p| pio::load_mask_csv(p))
        .collect::<Result<Vec<Mask>, _>>()?;
    let mut methods = Vec::new();
    let mut inputs = mask_files.clone();
    for dir in maps {
        let files = numbered_files(dir, "map_")?;
        if files.is_empty() {
            return Err(CliError::Validation(format!("{}: no map_NN.csv files", dir.display())));
        }
        if files.len() != masks.len() {
            return Err(CliError::Validation(format!(
                "{} has {} maps but the ground truth has {} windows",
                dir.display(),
                files.len(),
                masks.len()
            )));
        }
        let loaded = files
            .iter()
            .map(|p| pio::load_map_csv(p))
            .collect::<Result<Vec<PowerMap>, _>>()?;
        methods.push((method_label(dir), loaded));
        inputs.extend(files);
    }
    let rows = evaluate_windows(&methods, &masks, &cfg.evaluation)?;
    let summary = summarize(&rows);

    prepare_dir(out)?;
    let path = out.join("metrics.csv");
    let mut w = create(&path)?;
    write_rows_csv(&rows, &mut w).map_err(|e| CliError::io(&path, e))?;
    finish(w, &path)?;
    let path = out.join("summary.csv");
    let mut w = create(&path)?;
    write_summary_csv(&summary, &mut w).map_err(|e| CliError::io(&path, e))?;
    finish(w, &path)?;

    let config = cfg.to_toml_string()?;
    let mut manifest = RunManifest::new(
        Invocation::Evaluate {
            maps: maps.to_vec(),
            truth: truth.to_path_buf(),
        },
        config,
        seeds(cfg),
    );
    for p in &inputs {
        manifest.add_input(p)?;
    }
    manifest.record_outputs(out)?;
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write_atomic(out)?;
    Ok(Evaluation { rows, summary, manifest })
}

pub fn parse_operators(names: &[String]) -> CliResult<Vec<OperatorKind>> {
    if names.is_empty() {
        return Ok(OperatorKind::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse::<OperatorKind>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// Times the forward operators over record lengths on the configured geometry.
pub fn cmd_bench(
    cfg: &ExperimentConfig,
    sizes: &[usize],
    repetitions: usize,
    operators: &[String],
    memory_budget_mb: usize,
    out: &Path,
) -> CliResult<(BenchReport, RunManifest)> {
    let start = Instant::now();
    if repetitions == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    if sizes.is_empty() {
        return Err(CliError::Usage("need at least one size".into()));
    }
    let kinds = parse_operators(operators)?;
    let budget = (memory_budget_mb as u64).saturating_mul(1 << 20);
    let report = run_bench(&cfg.scenario.geometry, sizes, repetitions, &kinds, budget, cfg.scenario.seed)?;
    prepare_dir(out)?;
    let path = out.join("bench.csv");
    let mut w = create(&path)?;
    report.write_csv(&mut w).map_err(|e| CliError::io(&path, e))?;
    finish(w, &path)?;
    let path = out.join("scaling.csv");
    let mut w = create(&path)?;
    report.write_fits_csv(&mut w).map_err(|e| CliError::io(&path, e))?;
    finish(w, &path)?;

    let mut manifest = RunManifest::new(
        Invocation::Bench {
            sizes: sizes.to_vec(),
            repetitions,
            operators: kinds.iter().map(|k| k.name().to_string()).collect(),
            memory_budget_mb,
        },
        cfg.to_toml_string()?,
        seeds(cfg),
    );
    manifest.record_outputs(out)?;
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write_atomic(out)?;
    Ok((report, manifest))
}

/// Files whose content depends on wall-clock time.
pub fn is_timing_output(path: &Path) -> bool {
    matches!(
        path.file_name().and_then(|n| n.to_str()),
        Some("solve_report.csv" | "bench.csv" | "scaling.csv")
    )
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub manifest: RunManifest,
    /// Primary outputs with identical bytes.
    pub identical: Vec<PathBuf>,
    /// Primary outputs that differ in bytes but agree numerically to 1e-12.
    pub within_tolerance: Vec<PathBuf>,
    pub mismatched: Vec<(PathBuf, String)>,
}

impl ReplayOutcome {
    pub fn is_reproduced(&self) -> bool {
        self.mismatched.is_empty()
    }
}

fn numeric_content(path: &Path) -> CliResult<Option<Vec<f64>>> {
    let ext = path.extension().and_then(|e| e.to_str());
    Ok(match ext {
        Some("pamd") => {
            let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
            let mut cur = std::io::Cursor::new(bytes);
            match pio::read_rf::<f64>(&mut cur) {
                Ok((y, _)) => Some(y.into_vec()),
                Err(_) => {
                    cur.set_position(0);
                    Some(pio::read_cube::<f64>(&mut cur)?.0.into_vec())
                }
            }
        }
        Some("csv") => {
            let text = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            pio::read_matrix_csv(std::io::BufReader::new(text)).ok().map(|(_, _, v)| v)
        }
        _ => None,
    })
}

fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Re-executes the run described by `manifest_path` into `out` and compares primary outputs.
pub fn cmd_replay(manifest_path: &Path, out: &Path) -> CliResult<ReplayOutcome> {
    let original = RunManifest::load(manifest_path)?;
    let origin = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg = ExperimentConfig::from_toml_str(&original.config, &[])?;
    let replayed = match &original.invocation {
        Invocation::Simulate => cmd_simulate(&cfg, out)?,
        Invocation::Beamform { rf, method, .. } => {
            // the snapshot already carries the tuned μ
            cmd_beamform(rf, method, &cfg, false, out)?
        }
        Invocation::Evaluate { maps, truth } => cmd_evaluate(maps, truth, &cfg, out)?.manifest,
        Invocation::Bench {
            sizes,
            repetitions,
            operators,
            memory_budget_mb,
        } => cmd_bench(&cfg, sizes, *repetitions, operators, *memory_budget_mb, out)?.1,
    };
    let mut outcome = ReplayOutcome {
        manifest: replayed.clone(),
        identical: Vec::new(),
        within_tolerance: Vec::new(),
        mismatched: Vec::new(),
    };
    for rec in original.outputs.iter().filter(|r| !is_timing_output(&r.path)) {
        if matches!(original.invocation, Invocation::Beamform { tune: true, .. })
            && rec.path == Path::new("mu_search.csv")
        {
            continue;
        }
        let Some(new) = replayed.outputs.iter().find(|r| r.path == rec.path) else {
            outcome.mismatched.push((rec.path.clone(), "missing from replay".into()));
            continue;
        };
        if new.sha256 == rec.sha256 {
            outcome.identical.push(rec.path.clone());
            continue;
        }
        let before = numeric_content(&origin.join(&rec.path))?;
        let after = numeric_content(&out.join(&rec.path))?;
        match (before, after) {
            (Some(a), Some(b)) if a.len() == b.len() => {
                let d = relative_difference(&a, &b);
                if d <= 1e-12 {
                    outcome.within_tolerance.push(rec.path.clone());
                } else {
                    outcome.mismatched.push((rec.path.clone(), format!("relative difference {d:.3e}")));
                }
            }
            _ => outcome.mismatched.push((rec.path.clone(), "checksum differs".into())),
        }
    }
    Ok(outcome)
}
