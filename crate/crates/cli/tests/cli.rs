use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pam_cli::{cmd_evaluate, RunManifest, MANIFEST_FILE};
use pam_core::config::ExperimentConfig;
use pam_core::geometry::GeometryConfig;
use pam_core::io::load_map_csv;
use pam_core::sim::{CloudShape, CloudSpec, ScenarioSpec, Waveform};
use pam_core::solver::DenoiserConfig;

fn tiny_config() -> ExperimentConfig {
    let mut geometry = GeometryConfig::centered(16, 20, 14, 240);
    geometry.grid_z_origin = 6e-3;
    let g = geometry.build().unwrap();
    let cloud = |i: usize, j: usize, on: f64, off: f64, seed| CloudSpec {
        center: [g.grid.x(i), g.grid.z(j)],
        radii: [0.6e-3, 0.6e-3],
        shape: CloudShape::Disk,
        amplitude: 1.0,
        t_on: on,
        t_off: off,
        waveform: Waveform::WhiteBurst,
        seed,
    };
    let mut cfg = ExperimentConfig {
        scenario: ScenarioSpec {
            geometry,
            clouds: vec![cloud(5, 4, 0.0, 12e-6, 1), cloud(14, 9, 12e-6, 24e-6, 2)],
            snr_db: 20.0,
            seed: 3,
            window_length: 6e-6,
        },
        ..Default::default()
    };
    cfg.solver.max_iter = 8;
    cfg.solver.cg_max_iter = 5;
    cfg.solver.mu = 1.0;
    cfg.solver.denoiser = DenoiserConfig::Tv {
        weight: 0.02,
        iterations: 5,
        temporal: false,
    };
    cfg.tuning.mu_grid = vec![0.5, 2.0];
    cfg.tuning.time_scale = 0.5;
    cfg
}

struct Workspace {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("tiny.toml");
        fs::write(&config, tiny_config().to_toml_string().unwrap()).unwrap();
        Self { dir, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn pam(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_pam"))
            .args(args)
            .env_remove("PAM_OUT_DIR")
            .output()
            .unwrap()
    }

    /// Runs a command that takes `--config` and `--out`.
    fn run(&self, args: &[&str], out: &str) -> Output {
        let out = self.path(out);
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--config", self.config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        self.pam(&full)
    }

    fn simulate(&self, out: &str) -> PathBuf {
        ok(&self.run(&["simulate"], out));
        self.path(out)
    }

    fn beamform(&self, rf: &Path, method: &str, out: &str) -> PathBuf {
        ok(&self.run(&["beamform", "--rf", rf.to_str().unwrap(), "--method", method], out));
        self.path(out)
    }
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn maps_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with("map_") && name.ends_with(".csv")
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_scenario_files_deterministically() {
    let ws = Workspace::new();
    let a = ws.simulate("a");
    let b = ws.simulate("b");
    for f in ["cube.pamd", "rf.pamd", "rf_clean.pamd", "config.toml", "truth/windows.csv", MANIFEST_FILE] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let windows = fs::read_to_string(a.join("truth/windows.csv")).unwrap();
    assert_eq!(windows.lines().count(), 1 + 4);
    for w in 0..4 {
        assert!(a.join(format!("truth/mask_{w:02}.csv")).is_file());
        assert!(a.join(format!("truth/mask_{w:02}.pgm")).is_file());
    }
    let ma = RunManifest::load(&a.join(MANIFEST_FILE)).unwrap();
    let mb = RunManifest::load(&b.join(MANIFEST_FILE)).unwrap();
    assert!(!ma.outputs.is_empty());
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.seeds, mb.seeds);
}

#[test]
fn simulate_rejects_a_scenario_without_clouds() {
    let ws = Workspace::new();
    let o = ws.run(&["simulate", "--set", "scenario.clouds=[]"], "sim");
    assert_eq!(code(&o), 2);
}

#[test]
fn beamform_produces_one_map_per_window() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let das = ws.beamform(&sim.join("rf.pamd"), "td-das", "das");
    assert_eq!(maps_in(&das).len(), 4);
    assert!(das.join("map_00.pgm").is_file() && das.join("map_00_db.pgm").is_file());
    assert!(das.join(MANIFEST_FILE).is_file());
}

#[test]
fn fft_and_matrix_free_pipelines_agree() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let rf = sim.join("rf.pamd");
    let fft = ws.beamform(&rf, "spred-fft", "fft");
    let mf = ws.beamform(&rf, "spred-matrixfree", "mf");
    assert!(fft.join("solve_report.csv").is_file());
    let (a, b) = (maps_in(&fft), maps_in(&mf));
    assert_eq!(a.len(), 4);
    assert_eq!(a.len(), b.len());
    for (pa, pb) in a.iter().zip(&b) {
        let (ma, mb) = (load_map_csv(pa).unwrap(), load_map_csv(pb).unwrap());
        let diff: f64 = ma.as_slice().iter().zip(mb.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
        let norm: f64 = mb.as_slice().iter().map(|y| y * y).sum();
        let rel = (diff / norm).sqrt();
        assert!(rel <= 1e-5, "{}: relative difference {rel}", pa.display());
    }
}

#[test]
fn unknown_method_is_a_usage_error() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let o = ws.run(&["beamform", "--rf", sim.join("rf.pamd").to_str().unwrap(), "--method", "fd-das"], "x");
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fd-das"));
}

#[test]
fn missing_rf_file_is_an_io_error() {
    let ws = Workspace::new();
    let missing = ws.path("nope.pamd");
    let o = ws.run(&["beamform", "--rf", missing.to_str().unwrap(), "--method", "td-das"], "x");
    assert_eq!(code(&o), 4);
}

#[test]
fn rf_from_another_geometry_is_rejected() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let o = ws.run(
        &[
            "beamform",
            "--rf",
            sim.join("rf.pamd").to_str().unwrap(),
            "--method",
            "td-das",
            "--set",
            "scenario.geometry.samples=200",
        ],
        "x",
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn tuned_beamform_records_the_search() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let rf = sim.join("rf.pamd");
    let o = ws.run(&["beamform", "--rf", rf.to_str().unwrap(), "--method", "spred-matrixfree", "--tune"], "tuned");
    ok(&o);
    let search = fs::read_to_string(ws.path("tuned/mu_search.csv")).unwrap();
    assert_eq!(search.lines().count(), 1 + 2);
    let snapshot = fs::read_to_string(ws.path("tuned/config.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml_str(&snapshot, &[]).unwrap();
    assert!([0.5, 2.0].contains(&cfg.solver.mu));
}

#[test]
fn masks_scored_against_themselves_give_dice_one() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let fake = ws.path("truth-as-maps");
    fs::create_dir_all(&fake).unwrap();
    for w in 0..4 {
        fs::copy(sim.join(format!("truth/mask_{w:02}.csv")), fake.join(format!("map_{w:02}.csv"))).unwrap();
    }
    let e = cmd_evaluate(&[fake], &sim.join("truth"), &tiny_config(), &ws.path("eval")).unwrap();
    assert_eq!(e.rows.len(), 4);
    assert!(e.rows.iter().all(|r| r.dice == 1.0), "{:?}", e.rows);
    let summary = fs::read_to_string(ws.path("eval/summary.csv")).unwrap();
    assert!(summary.starts_with("method,cnr_mean,cnr_std,dice_mean,dice_std"));
}

#[test]
fn evaluate_reports_one_row_per_window_and_method() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let das = ws.beamform(&sim.join("rf.pamd"), "td-das", "das");
    let truth = sim.join("truth");
    let o = ws.run(
        &["evaluate", "--maps", das.to_str().unwrap(), "--truth", truth.to_str().unwrap()],
        "eval",
    );
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("td-das"));
    let metrics = fs::read_to_string(ws.path("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 4);
}

#[test]
fn evaluate_rejects_empty_and_mismatched_map_sets() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let truth = sim.join("truth");
    let empty = ws.path("empty");
    fs::create_dir_all(&empty).unwrap();
    let o = ws.run(&["evaluate", "--maps", empty.to_str().unwrap(), "--truth", truth.to_str().unwrap()], "e1");
    assert_eq!(code(&o), 2);

    let das = ws.beamform(&sim.join("rf.pamd"), "td-das", "das");
    fs::remove_file(das.join("map_03.csv")).unwrap();
    let o = ws.run(&["evaluate", "--maps", das.to_str().unwrap(), "--truth", truth.to_str().unwrap()], "e2");
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("3 maps"));
}

#[test]
fn bench_writes_timings_and_fits() {
    let ws = Workspace::new();
    let o = ws.run(&["bench", "--sizes", "64,128", "--repetitions", "1"], "bench");
    ok(&o);
    let csv = fs::read_to_string(ws.path("bench/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
    let fits = fs::read_to_string(ws.path("bench/scaling.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 3);
}

#[test]
fn bench_usage_errors_and_memory_budget() {
    let ws = Workspace::new();
    let o = ws.run(&["bench", "--sizes", "64", "--repetitions", "0"], "b0");
    assert_eq!(code(&o), 2);
    let o = ws.run(&["bench", "--sizes", "64", "--operators", "dense"], "b1");
    assert_eq!(code(&o), 2);

    let o = ws.run(
        &["bench", "--sizes", "64", "--repetitions", "1", "--operators", "fft", "--memory-budget-mb", "0"],
        "b2",
    );
    ok(&o);
    let csv = fs::read_to_string(ws.path("b2/bench.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("skipped"));
}

#[test]
fn replay_reproduces_simulate_and_beamform() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let spred = ws.beamform(&sim.join("rf.pamd"), "spred-fft", "spred");
    for dir in [&sim, &spred] {
        let again = ws.path(&format!("replay-{}", dir.file_name().unwrap().to_string_lossy()));
        let o = ws.pam(&[
            "replay",
            dir.join(MANIFEST_FILE).to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ]);
        ok(&o);
        assert!(String::from_utf8_lossy(&o.stdout).contains(" 0 mismatched"));
    }
}

#[test]
fn replay_detects_tampered_outputs() {
    let ws = Workspace::new();
    let sim = ws.simulate("sim");
    let mut m = RunManifest::load(&sim.join(MANIFEST_FILE)).unwrap();
    let rf = m.outputs.iter_mut().find(|f| f.path == Path::new("truth/windows.csv")).unwrap();
    rf.sha256 = "0".repeat(64);
    m.write_atomic(&sim).unwrap();
    let o = ws.pam(&["replay", sim.join(MANIFEST_FILE).to_str().unwrap(), "--out", ws.path("again").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let ws = Workspace::new();
    let target = ws.path("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_pam"))
        .args(["simulate", "--config", ws.config.to_str().unwrap()])
        .env("PAM_OUT_DIR", &target)
        .output()
        .unwrap();
    ok(&o);
    assert!(target.join("rf.pamd").is_file());

    let o = ws.pam(&["simulate", "--config", ws.config.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_cap_is_accepted_and_validated() {
    let ws = Workspace::new();
    ok(&ws.run(&["--threads", "1", "simulate"], "t1"));
    assert_eq!(code(&ws.run(&["--threads", "0", "simulate"], "t0")), 2);
}

#[test]
fn config_prints_the_effective_configuration() {
    let ws = Workspace::new();
    let o = ws.pam(&["config", "--config", ws.config.to_str().unwrap(), "--set", "solver.mu=7"]);
    ok(&o);
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8_lossy(&o.stdout), &[]).unwrap();
    assert_eq!(cfg.solver.mu, 7.0);
    assert_eq!(cfg.scenario.geometry.samples, 240);
}
