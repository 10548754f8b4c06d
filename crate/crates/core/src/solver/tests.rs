use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::forward::{build_kernel, FftOperator, MatrixFreeOperator};
use crate::geometry::{DelayTable, Geometry, GeometryConfig};

fn geometry() -> (Geometry, DelayTable) {
    let g = GeometryConfig::centered(8, 16, 12, 64).build().unwrap();
    let t = g.delay_table().unwrap();
    (g, t)
}

fn random_cube(g: &Geometry, seed: u64) -> CavitationCube<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nz, nt) = (g.grid.nx, g.grid.nz, g.acq.samples);
    CavitationCube::from_vec(nx, nz, nt, (0..nx * nz * nt).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Sparse source: a few pixels with short random bursts.
fn sparse_source(g: &Geometry, seed: u64) -> CavitationCube<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = CavitationCube::zeros(g.grid.nx, g.grid.nz, g.acq.samples);
    for _ in 0..4 {
        let (i, j) = (rng.gen_range(2..g.grid.nx - 2), rng.gen_range(2..g.grid.nz - 2));
        for k in 5..25 {
            x.set(i, j, k, rng.gen_range(-1.0..1.0));
        }
    }
    x
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt() / norm_sq(b).sqrt().max(f64::MIN_POSITIVE)
}

#[test]
fn soft_threshold_examples() {
    assert_eq!(soft_threshold_scalar(5.0, 2.0), 3.0);
    assert_eq!(soft_threshold_scalar(-1.0, 2.0), 0.0);
    assert_eq!(soft_threshold_scalar(-5.0, 2.0), -3.0);
    let (g, _) = geometry();
    let x = random_cube(&g, 1);
    assert_eq!(soft_threshold(&x, 0.0).unwrap(), x);
    assert!(matches!(soft_threshold(&x, -1.0), Err(PamError::Config(_))));
}

proptest! {
    #[test]
    fn soft_threshold_minimizes_prox_objective(v in -10.0f64..10.0, tau in 0.0f64..5.0) {
        let u = soft_threshold_scalar(v, tau);
        let obj = |u: f64| 0.5 * (u - v).powi(2) + tau * u.abs();
        let best = (-20_000..=20_000).map(|i| i as f64 * 1e-3).map(obj).fold(f64::INFINITY, f64::min);
        prop_assert!(obj(u) <= best + 1e-9);
    }

    #[test]
    fn quantile_is_monotone_in_level(mut v in proptest::collection::vec(-100.0f64..100.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ql = quantile(&mut v.clone(), lo).unwrap();
        let qh = quantile(&mut v, hi).unwrap();
        prop_assert!(ql <= qh);
    }
}

#[test]
fn quantile_order_statistics() {
    let mut v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
    assert_eq!(quantile(&mut v, 0.5).unwrap(), 50.5);
    assert_eq!(quantile(&mut v, 0.0).unwrap(), 1.0);
    assert_eq!(quantile(&mut v, 1.0).unwrap(), 100.0);
    assert!((quantile(&mut v, 0.95).unwrap() - 95.05).abs() < 1e-12);
    assert!(quantile(&mut [], 0.5).is_err());
}

#[test]
fn lambda_heuristic_cases() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t.clone());
    let zero = RfData::<f64>::zeros(8, 64);
    assert_eq!(lambda_heuristic(&zero, &op, 0.95).unwrap(), 0.0);
    assert!(matches!(lambda_heuristic(&zero, &op, 1.0), Err(PamError::Config(_))));
    assert!(lambda_heuristic(&RfData::<f64>::zeros(0, 0), &op, 0.5).is_err());

    let y = LinearOperator::<f64>::apply(&op, &sparse_source(&g, 3)).unwrap();
    let lam = lambda_heuristic(&y, &op, 0.95).unwrap();
    let mut mags: Vec<f64> = LinearOperator::<f64>::adjoint(&op, &y).unwrap().as_slice().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let h = 0.95 * (mags.len() - 1) as f64;
    let lo = h.floor() as usize;
    let oracle = mags[lo] + (h - lo as f64) * (mags[lo + 1] - mags[lo]);
    assert_eq!(lam, oracle);
}

#[test]
fn cg_recovers_known_solution() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let x_star = random_cube(&g, 11);
    let ax = LinearOperator::<f64>::adjoint(&op, &op.apply(&x_star).unwrap()).unwrap();
    let mut rhs = ax;
    rhs.as_mut_slice().iter_mut().zip(x_star.as_slice()).for_each(|(r, x)| *r += x);
    let (x, out) = cg_normal_equations(&op, &rhs, 1.0, 1e-10, 1000).unwrap();
    assert!(out.converged, "{out:?}");
    assert!(rel(x.as_slice(), x_star.as_slice()) < 1e-8);
}

#[test]
fn cg_zero_rhs_and_large_shift() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let zero = CavitationCube::<f64>::zeros(16, 12, 64);
    let (x, out) = cg_normal_equations(&op, &zero, 1.0, 1e-6, 10).unwrap();
    assert!(x.as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(out.iterations, 0);

    let rhs = random_cube(&g, 2);
    let sigma = 1e8;
    let (x, _) = cg_normal_equations(&op, &rhs, sigma, 1e-12, 20).unwrap();
    let scaled: Vec<f64> = rhs.as_slice().iter().map(|v| v / sigma).collect();
    assert!(rel(x.as_slice(), &scaled) < 1e-6);

    assert!(cg_normal_equations(&op, &rhs, -1.0, 1e-6, 10).is_err());
    assert!(cg_normal_equations(&op, &rhs, 1.0, 0.0, 10).is_err());
    assert!(cg_normal_equations(&op, &rhs, 1.0, 1e-6, 0).is_err());
}

#[test]
fn cg_warm_start_from_solution_takes_no_steps() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let rhs = random_cube(&g, 4);
    let (mut x, _) = cg_normal_equations(&op, &rhs, 0.5, 1e-10, 500).unwrap();
    let out = cg_normal_equations_warm(&op, &rhs, 0.5, 1e-8, 50, &mut x).unwrap();
    assert_eq!(out.iterations, 0);
}

#[test]
fn zero_data_gives_zero_image() {
    let (_, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = RfData::<f64>::zeros(8, 64);
    for mu in [0.0, 1.0] {
        let cfg = SolverConfig {
            lambda: Some(0.5),
            mu,
            ..Default::default()
        };
        let (x, report) = admm_spred(&y, &op, &Identity, &cfg).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
        assert!(report.converged);
        assert_eq!(report.len(), 1);
    }
}

#[test]
fn unregularized_run_matches_least_squares() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 5)).unwrap();
    let cfg = SolverConfig {
        lambda: Some(0.0),
        mu: 0.0,
        max_iter: 6000,
        tol: 1e-9,
        cg_tol: 1e-12,
        cg_max_iter: 200,
        normalize: Normalization::Columns,
        ..Default::default()
    };
    let (x, report) = admm_spred(&y, &op, &Identity, &cfg).unwrap();
    let b = LinearOperator::<f64>::adjoint(&op, &y).unwrap();
    let (x_ls, _) = cg_normal_equations(&op, &b, 1e-12, 1e-12, 5000).unwrap();
    let d = rel(x.as_slice(), x_ls.as_slice());
    assert!(d <= 1e-4, "relative difference {d}, {} iterations", report.len());
}

#[test]
fn fidelity_drops_tenfold_with_small_lambda() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 6)).unwrap();
    let lam = lambda_heuristic(&y, &op, 0.95).unwrap();
    let cfg = SolverConfig {
        lambda: Some(0.01 * lam),
        mu: 0.0,
        denoiser: DenoiserConfig::Identity,
        normalize: Normalization::Columns,
        ..Default::default()
    };
    let (x, report) = admm_spred(&y, &op, &Identity, &cfg).unwrap();
    assert!(report.final_fidelity() * 10.0 <= report.initial_fidelity);
    // the tracked fidelity agrees with a direct evaluation
    let direct = 0.5 * relative_misfit(&y, &op, &x).unwrap() * norm_sq(y.as_slice());
    assert!((direct - report.final_fidelity()).abs() <= 1e-8 * report.initial_fidelity);
    let first = report.iterations[0].primal;
    assert!(report.iterations.last().unwrap().primal <= 0.1 * first);
}

#[test]
fn operator_choice_does_not_change_the_solution() {
    let (g, t) = geometry();
    let k = build_kernel(&t, &g.array, &g.grid, &g.acq).unwrap();
    let mf = MatrixFreeOperator::new(t);
    let fft = FftOperator::<f64>::new(k);
    let y = mf.apply(&sparse_source(&g, 7)).unwrap();
    let cfg = SolverConfig {
        mu: 0.5,
        max_iter: 15,
        cg_tol: 1e-10,
        ..Default::default()
    };
    let den = cfg.denoiser.build::<f64>().unwrap();
    let (a, _) = admm_spred(&y, &mf, den.as_ref(), &cfg).unwrap();
    let (b, _) = admm_spred(&y, &fft, den.as_ref(), &cfg).unwrap();
    let d = rel(b.as_slice(), a.as_slice());
    assert!(d <= 1e-5, "{d}");
}

#[test]
fn l1_path_is_scale_equivariant() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 8)).unwrap();
    let alpha = 3.5;
    let ya = RfData::from_vec(8, 64, y.as_slice().iter().map(|v| alpha * v).collect()).unwrap();
    let cfg = SolverConfig {
        lambda: Some(0.2),
        max_iter: 40,
        ..Default::default()
    };
    let (x, _) = admm_spred(&y, &op, &Identity, &cfg).unwrap();
    let cfg_a = SolverConfig {
        lambda: Some(0.2 * alpha),
        ..cfg
    };
    let (xa, _) = admm_spred(&ya, &op, &Identity, &cfg_a).unwrap();
    let scaled: Vec<f64> = x.as_slice().iter().map(|v| alpha * v).collect();
    let d = rel(xa.as_slice(), &scaled);
    assert!(d <= cfg_a.tol, "{d}");
}

#[test]
fn solver_rejects_bad_input() {
    let (_, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let wrong = RfData::<f64>::zeros(4, 64);
    assert!(matches!(admm_spred(&wrong, &op, &Identity, &SolverConfig::default()), Err(PamError::Dimension(_))));
    for cfg in [
        SolverConfig { rho: 0.0, ..Default::default() },
        SolverConfig { tol: 0.0, ..Default::default() },
        SolverConfig { max_iter: 0, ..Default::default() },
        SolverConfig { mu: -1.0, ..Default::default() },
        SolverConfig { lambda: Some(-1.0), ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(PamError::Config(_))));
    }
}

struct Shrinker;

impl Denoiser<f64> for Shrinker {
    fn name(&self) -> String {
        "bad".into()
    }

    fn denoise(&self, _: &CavitationCube<f64>) -> Result<CavitationCube<f64>> {
        Ok(CavitationCube::zeros(2, 2, 2))
    }
}

#[test]
fn denoiser_shape_mismatch_is_reported() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 9)).unwrap();
    let cfg = SolverConfig { mu: 1.0, ..Default::default() };
    assert!(matches!(admm_spred(&y, &op, &Shrinker, &cfg), Err(PamError::Dimension(_))));
}

#[test]
fn report_csv_has_one_row_per_iteration() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 10)).unwrap();
    let cfg = SolverConfig { max_iter: 5, tol: 1e-12, ..Default::default() };
    let (_, report) = admm_spred(&y, &op, &Identity, &cfg).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), report.len() + 1);
    assert!(text.starts_with("iteration,objective,fidelity,primal,dual,seconds"));
}

fn all_denoisers() -> Vec<DenoiserConfig> {
    vec![
        DenoiserConfig::Identity,
        DenoiserConfig::Gaussian { sigma_spatial: 1.0, sigma_temporal: 0.7 },
        DenoiserConfig::Tv { weight: 0.3, iterations: 20, temporal: false },
        DenoiserConfig::Tv { weight: 0.3, iterations: 20, temporal: true },
        DenoiserConfig::Median { radius: 1 },
    ]
}

#[test]
fn denoisers_fix_zero_and_keep_shape() {
    let (g, _) = geometry();
    let zero = CavitationCube::<f64>::zeros(16, 12, 64);
    let x = random_cube(&g, 12);
    for cfg in all_denoisers() {
        let d = cfg.build::<f64>().unwrap();
        assert_eq!(d.denoise(&zero).unwrap(), zero, "{cfg:?}");
        let a = d.denoise(&x).unwrap();
        assert_eq!(a.shape(), x.shape());
        assert_eq!(a, d.denoise(&x).unwrap(), "deterministic");
    }
}

#[test]
fn gaussian_preserves_constants() {
    let c = CavitationCube::from_vec(5, 4, 9, vec![2.5; 180]).unwrap();
    let d = GaussianSmooth::new(1.5, 2.0).unwrap();
    let out = Denoiser::<f64>::denoise(&d, &c).unwrap();
    assert!(out.as_slice().iter().all(|v| (v - 2.5).abs() < 1e-12));
}

#[test]
fn gaussian_spreads_an_impulse_with_unit_mass() {
    let mut x = CavitationCube::<f64>::zeros(9, 9, 9);
    x.set(4, 4, 4, 1.0);
    let out = Denoiser::<f64>::denoise(&GaussianSmooth::new(1.0, 1.0).unwrap(), &x).unwrap();
    let total: f64 = out.as_slice().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(out.get(4, 4, 4) < 1.0 && out.get(3, 4, 4) > 0.0 && out.get(4, 4, 5) > 0.0);
    assert_eq!(out.get(3, 4, 4), out.get(5, 4, 4));
}

#[test]
fn tv_reduces_variation_of_a_noisy_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (nx, nz, nt) = (12, 10, 6);
    let v = (0..nx * nz * nt)
        .map(|idx| {
            let i = (idx / nt) % nx;
            let step = if i < nx / 2 { 0.0 } else { 1.0 };
            step + 0.2 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let x = CavitationCube::from_vec(nx, nz, nt, v).unwrap();
    for temporal in [false, true] {
        let tv = TvDenoise { weight: 0.2, iterations: 50, temporal };
        let out = tv.denoise(&x).unwrap();
        assert!(tv.total_variation(&out) < 0.5 * tv.total_variation(&x));
        // the step survives
        assert!(out.get(nx - 1, 5, 3) - out.get(0, 5, 3) > 0.5);
    }
}

#[test]
fn median_removes_isolated_spike() {
    let mut x = CavitationCube::from_vec(5, 5, 5, vec![1.0; 125]).unwrap();
    x.set(2, 2, 2, 50.0);
    let out = Denoiser::<f64>::denoise(&Median3d { radius: 1 }, &x).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 1.0));
}

#[test]
fn denoiser_parameters_are_validated() {
    for cfg in [
        DenoiserConfig::Gaussian { sigma_spatial: -1.0, sigma_temporal: 0.0 },
        DenoiserConfig::Tv { weight: 0.0, iterations: 5, temporal: false },
        DenoiserConfig::Tv { weight: 1.0, iterations: 0, temporal: false },
        DenoiserConfig::Median { radius: 0 },
    ] {
        assert!(cfg.build::<f64>().is_err(), "{cfg:?}");
    }
}

#[test]
fn solver_config_round_trips_through_toml() {
    let cfg = SolverConfig {
        lambda: Some(0.3),
        mu: 2.0,
        denoiser: DenoiserConfig::Tv { weight: 0.1, iterations: 10, temporal: false },
        ..Default::default()
    };
    let text = toml::to_string(&cfg).unwrap();
    let back: SolverConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: SolverConfig = toml::from_str("mu = 3.0").unwrap();
    assert_eq!(partial.rho, 0.25);
    assert!(toml::from_str::<SolverConfig>("nonsense = 1").is_err());
}

#[test]
fn operator_norm_bounds() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let s = operator_norm::<f64>(&op, 200, 1e-9, 1).unwrap();
    // Rayleigh lower bound from the all-ones cube
    let ones = CavitationCube::from_vec(16, 12, 64, vec![1.0; 16 * 12 * 64]).unwrap();
    let lower = norm_sq(op.apply(&ones).unwrap().as_slice()).sqrt() / norm_sq(ones.as_slice()).sqrt();
    assert!(s >= lower * (1.0 - 1e-9), "{s} < {lower}");
    for seed in 0..5 {
        let v = random_cube(&g, 50 + seed);
        let av = norm_sq(op.apply(&v).unwrap().as_slice()).sqrt();
        assert!(av <= s * norm_sq(v.as_slice()).sqrt() * (1.0 + 1e-6));
    }
    // a second seed agrees
    let s2 = operator_norm::<f64>(&op, 200, 1e-9, 2).unwrap();
    assert!((s - s2).abs() <= 1e-6 * s);
}

#[test]
fn scaled_operator_scales_both_directions() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let sc = ScaledOperator::new(&op, 0.5);
    let x = random_cube(&g, 60);
    let y = RfData::from_vec(8, 64, random_cube(&g, 61).as_slice()[..512].to_vec()).unwrap();
    let a = LinearOperator::<f64>::apply(&op, &x).unwrap();
    let b = sc.apply(&x).unwrap();
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(a, b)| 0.5 * a == *b));
    let lhs = dot(sc.apply(&x).unwrap().as_slice(), y.as_slice());
    let rhs = dot(x.as_slice(), sc.adjoint(&y).unwrap().as_slice());
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn normalization_does_not_change_least_squares_fit() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let y = op.apply(&sparse_source(&g, 14)).unwrap();
    let base = SolverConfig { lambda: Some(0.0), max_iter: 400, tol: 1e-9, cg_tol: 1e-12, cg_max_iter: 100, normalize: Normalization::Columns, ..Default::default() };
    let (a, ra) = admm_spred(&y, &op, &Identity, &base).unwrap();
    assert!(ra.operator_norm > 1.0);
    assert!(relative_misfit(&y, &op, &a).unwrap() < 1e-8);
}

#[test]
fn rms_column_norm_matches_delay_count() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t.clone());
    // ‖A‖_F² counts every in-record (sensor, pixel, time) hit
    let nt = g.acq.samples;
    let fro_sq: usize = (0..t.sensors())
        .flat_map(|m| t.row(m).iter().map(move |&d| nt.saturating_sub(d as usize)))
        .sum();
    let oracle = (fro_sq as f64 / (t.pixels() * nt) as f64).sqrt();
    let est = rms_column_norm::<f64>(&op, 3).unwrap();
    assert!((est - oracle).abs() <= 0.1 * oracle, "{est} vs {oracle}");
}

#[test]
fn default_sparse_run_reduces_primal_residual_tenfold() {
    let (g, t) = geometry();
    let op = MatrixFreeOperator::new(t);
    let mut y = op.apply(&sparse_source(&g, 21)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    y.as_mut_slice().iter_mut().for_each(|v| *v += 0.1 * rng.gen_range(-1.0..1.0));
    let (_, report) = admm_spred(&y, &op, &Identity, &SolverConfig::default()).unwrap();
    assert_eq!(report.len(), report.iterations.len());
    let first = report.iterations[0].primal;
    assert!(report.iterations.last().unwrap().primal <= 0.1 * first);
    assert!(report.operator_norm > 1.0);
}
