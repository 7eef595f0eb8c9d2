use homog::cell::{solve_cell, CellOptions};
use homog::effective::{homogenized_initial, reconstruct, solve_homogenized};
use homog::factorize::{nested_map, tile};
use homog::fine::{solve_factorized, FineOptions};
use homog::fixtures;
use homog::grid::PeriodicGrid;
use homog::validate::{convergence_study, StudyConfig};

/// Periodized Gaussian of variance `var` centred at `c`, on the unit torus.
fn heat_kernel_bump(x: f64, c: f64, var: f64, mass: f64) -> f64 {
    (-20..=20)
        .map(|k| {
            let dx = x - c - k as f64;
            (-dx * dx / (2.0 * var)).exp()
        })
        .sum::<f64>()
        * mass
        / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn constant_drift_reconstruction_is_the_moving_heat_kernel() {
    let (b0, d0, sigma) = (0.5, 0.7, 0.1);
    let spec = fixtures::constant_drift(b0, d0);
    let grid = PeriodicGrid::new(1, 256, 1.0).unwrap();
    let eps = 0.0625;
    let sol = solve_cell(&spec, 16, &CellOptions::default()).unwrap();
    let model = &sol.model;
    let v0 = homogenized_initial(&spec.initial_data, &model.init_weights, &grid);
    let times = [0.0, 0.004, 0.01];
    let hom = solve_homogenized(&v0, &grid, &model.dispersion, &times).unwrap();
    let mass = sigma * (2.0 * std::f64::consts::PI).sqrt();
    for &t in &times {
        let u = reconstruct(&hom, &sol.eigenpair, model.lambda, &model.b_star, eps, t).unwrap();
        let centre = 0.5 + b0 * t / eps;
        let var = sigma * sigma + 2.0 * d0 * t;
        for (p, value) in u[0].iter().enumerate() {
            let exact = heat_kernel_bump(grid.position(p)[0], centre, var, mass);
            assert!((value - exact).abs() < 1e-10, "t={t} p={p}: {value} vs {exact}");
        }
    }
}

#[test]
fn reconstruction_at_time_zero_is_phi_times_v0() {
    let spec = fixtures::two_species();
    let grid = PeriodicGrid::new(1, 256, 1.0).unwrap();
    let eps = 0.125;
    let sol = solve_cell(&spec, 32, &CellOptions::default()).unwrap();
    let model = &sol.model;
    let v0 = homogenized_initial(&spec.initial_data, &model.init_weights, &grid);
    let hom = solve_homogenized(&v0, &grid, &model.dispersion, &[0.0]).unwrap();
    let u = reconstruct(&hom, &sol.eigenpair, model.lambda, &model.b_star, eps, 0.0).unwrap();
    let phi = tile(&sol.eigenpair.phi, &nested_map(&grid, 32, eps).unwrap());
    for a in 0..2 {
        for p in 0..grid.len() {
            assert!((u[a][p] - phi[a][p] * v0[p]).abs() < 1e-14);
        }
    }
    // All species start from the same bump, so v0 = (Σ weights) · bump.
    let total: f64 = model.init_weights.iter().sum();
    let bump = spec.initial_data[0].eval(&grid.position(100), 1.0);
    assert!((v0[100] - total * bump).abs() < 1e-12);
}

#[test]
fn implicit_euler_is_first_order_in_time() {
    let spec = fixtures::two_species();
    let grid = PeriodicGrid::new(1, 128, 1.0).unwrap();
    let eps = 0.125;
    let pair = solve_cell(&spec, 16, &CellOptions::default()).unwrap().eigenpair;
    let t = 0.005;
    let run = |dt: f64| {
        let opts = FineOptions {
            dt,
            checkpoints: vec![],
            ..FineOptions::standard(eps, t)
        };
        solve_factorized(&spec, &pair, eps, &grid, &opts).unwrap().final_fields().concat()
    };
    // Start below the stiff transient so the ratio sits in the asymptotic regime.
    let dt = eps * eps / 160.0;
    let (a, b, c) = (run(dt), run(dt / 2.0), run(dt / 4.0));
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let order = (diff(&a, &b) / diff(&b, &c)).log2();
    assert!((order - 1.0).abs() < 0.15, "observed order {order}");
}

#[test]
fn oscillating_pairing_decays_with_eps() {
    let spec = fixtures::two_species();
    let report = convergence_study("two_species", &spec, &spec.epsilons, &StudyConfig::for_spec(&spec), 3).unwrap();
    let pairing: Vec<f64> = report.runs.iter().map(|r| r.oscillating_pairing.abs()).collect();
    assert!(pairing.windows(2).all(|w| w[1] < 0.5 * w[0]), "{pairing:?}");
    let rel: Vec<f64> = report
        .runs
        .iter()
        .map(|r| (r.mean_pairing - r.mean_pairing_limit).abs() / r.mean_pairing_limit.abs())
        .collect();
    assert!(rel.iter().all(|&r| r < 0.1), "{rel:?}");
    assert!(rel[2] < rel[0], "{rel:?}");
}

#[test]
fn two_dimensional_pipeline_runs() {
    let spec = fixtures::cellular_2d();
    let config = StudyConfig {
        m: 64,
        ..StudyConfig::for_spec(&spec)
    };
    let run = homog::validate::run_eps(&spec, 0.125, &config).unwrap();
    assert_eq!(run.cell_n, 8);
    assert!(run.worst_energy_increase <= 1e-12);
    assert!(run.min_fine >= -1e-12 && run.min_factorized >= -1e-12);
    assert!(run.final_error.is_finite() && run.final_error < 0.5, "{}", run.final_error);
}
