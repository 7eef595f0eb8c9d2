mod common;

use common::{bessel_i0, bordered_solve, max_abs_diff, simpson};
use homog::cell::{corrector_rhs, dispersion, solve_cell, solve_correctors, CellOptions, CorrectorOptions};
use homog::fixtures;
use homog::Error;
use std::f64::consts::TAU;

/// Potential of `b = sin 2πy`: `b = Φ'` with `Φ = −cos(2πy)/2π`.
fn potential(y: f64) -> f64 {
    -(TAU * y).cos() / TAU
}

#[test]
fn sin_adjoint_matches_closed_form() {
    // φ ≡ 1 and φ* = e^{−Φ} / ⟨e^{−Φ}⟩, with ⟨e^{±Φ}⟩ = I0(1/2π).
    let i0 = bessel_i0(1.0 / TAU);
    let mut errors = Vec::new();
    for n in [128, 256] {
        let sol = solve_cell(&fixtures::sin_convection(), n, &CellOptions::default()).unwrap();
        let pair = &sol.eigenpair;
        assert!(pair.phi[0].iter().all(|v| (v - 1.0).abs() < 1e-9));
        let exact: Vec<f64> = (0..n).map(|i| (-potential(i as f64 / n as f64)).exp() / i0).collect();
        errors.push(max_abs_diff(&pair.phi_star[0], &exact));
    }
    assert!(errors[1] < 1e-4, "{errors:?}");
    assert!(errors[0] / errors[1] > 3.5, "second order expected: {errors:?}");
}

#[test]
fn sin_corrector_matches_dense_solve() {
    let sol = solve_cell(&fixtures::sin_convection(), 512, &CellOptions::default()).unwrap();
    let f = corrector_rhs(&sol.operator, &sol.model.b_star, 0);
    let oracle = bordered_solve(&sol.operator.matrix, &f);
    let gap = max_abs_diff(&sol.correctors.flat(0), &oracle);
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn sin_corrector_and_dispersion_closed_forms() {
    // With b̃ = 0: D̃(ω' + 1) is constant, so ω' = e^{Φ}/⟨e^{Φ}⟩ − 1 and
    // 𝒟 = 1 / (⟨e^{Φ}⟩⟨e^{−Φ}⟩).
    let i0 = bessel_i0(1.0 / TAU);
    let n = 256;
    let sol = solve_cell(&fixtures::sin_convection(), n, &CellOptions::default()).unwrap();
    let mut exact: Vec<f64> = (0..n)
        .map(|i| simpson(|s| potential(s).exp() / i0 - 1.0, i as f64 / n as f64, 400))
        .collect();
    let mean = exact.iter().sum::<f64>() / n as f64;
    exact.iter_mut().for_each(|v| *v -= mean);
    let gap = max_abs_diff(&sol.correctors.omega[0][0], &exact);
    assert!(gap < 1e-4, "{gap}");
    assert!(sol.model.b_star[0].abs() < 1e-12);
    // Second-order convergence of 𝒟; Richardson extrapolation of n = 128 and
    // n = 256 removes the leading h² term.
    let exact = 1.0 / (i0 * i0);
    let d256 = sol.model.dispersion[0][0];
    let d128 = solve_cell(&fixtures::sin_convection(), 128, &CellOptions::default())
        .unwrap()
        .model
        .dispersion[0][0];
    assert!((d256 - exact).abs() < 1e-6);
    assert!(((d128 - exact) / (d256 - exact) - 4.0).abs() < 0.1);
    let extrapolated = (4.0 * d256 - d128) / 3.0;
    assert!((extrapolated - exact).abs() < 1e-9, "{extrapolated} vs {exact}");
    assert!(d256 < 1.0, "a periodic gradient drift reduces diffusion in 1D");
}

#[test]
fn constant_examples() {
    let opts = CellOptions::default();
    let drift = solve_cell(&fixtures::constant_drift(0.5, 0.7), 64, &opts).unwrap();
    assert!(drift.correctors.omega.iter().flatten().flatten().all(|v| v.abs() < 1e-12));
    assert!((drift.model.b_star[0] - 0.5).abs() < 1e-12);
    assert!((drift.model.dispersion[0][0] - 0.7).abs() < 1e-12);
    assert!((drift.model.init_weights[0] - 1.0).abs() < 1e-12);

    let pair = solve_cell(&fixtures::constant_pair(), 64, &opts).unwrap();
    assert!(pair.correctors.omega.iter().flatten().flatten().all(|v| v.abs() < 1e-10));
    assert!((pair.model.dispersion[0][0] - 2.0).abs() < 1e-12);
    for w in &pair.model.init_weights {
        assert!((w - 0.5).abs() < 1e-12);
    }
}

#[test]
fn gauge_invariance() {
    let spec = fixtures::two_species();
    let base = solve_cell(&spec, 64, &CellOptions::default()).unwrap();
    for seed in 1..=5 {
        let opts = CellOptions {
            corrector: CorrectorOptions { seed, ..CorrectorOptions::default() },
            ..CellOptions::default()
        };
        let other = solve_cell(&spec, 64, &opts).unwrap();
        assert!((other.model.dispersion[0][0] - base.model.dispersion[0][0]).abs() < 1e-9);
    }
    let mut shifted = base.correctors.clone();
    shifted.omega.iter_mut().flatten().flatten().for_each(|v| *v += 3.7);
    let d = dispersion(&base.operator, &shifted, &base.model.b_star).unwrap();
    assert!((d.matrix[0][0] - base.model.dispersion[0][0]).abs() < 1e-12);
}

#[test]
fn incompatible_rhs_is_rejected() {
    let sol = solve_cell(&fixtures::two_species(), 64, &CellOptions::default()).unwrap();
    let perturbed = vec![sol.model.b_star[0] + 1e-6];
    assert!(matches!(
        solve_correctors(&sol.operator, &perturbed, &CorrectorOptions::default()),
        Err(Error::CompatibilityViolation { .. })
    ));
}

#[test]
fn identical_species_share_correctors() {
    // Two copies of the sin-convection species, symmetrically coupled.
    let mut spec = fixtures::constant_pair();
    let single = fixtures::sin_convection();
    spec.rho = vec![single.rho[0].clone(); 2];
    spec.b = vec![single.b[0].clone(); 2];
    spec.diffusion = vec![single.diffusion[0].clone(); 2];
    let sol = solve_cell(&spec, 64, &CellOptions::default()).unwrap();
    let w = &sol.correctors.omega[0];
    assert!(max_abs_diff(&w[0], &w[1]) < 1e-9);
    let single_sol = solve_cell(&single, 64, &CellOptions::default()).unwrap();
    assert!((sol.model.dispersion[0][0] - single_sol.model.dispersion[0][0]).abs() < 1e-9);
}

#[test]
fn quotient_energy_is_coercive() {
    for (name, spec) in fixtures::named() {
        let n = if spec.dimension == 2 { 16 } else { 64 };
        let sol = solve_cell(&spec, n, &CellOptions::default()).unwrap();
        let g = sol.operator.grid;
        for i in 0..g.d {
            let w = sol.correctors.flat(i);
            let (s, c) = sol.operator.edge_form(&w, None, &w, None);
            let mut norm = 0.0;
            for a in 0..spec.species {
                let wa = &sol.correctors.omega[i][a];
                for p in 0..g.len() {
                    for k in 0..g.d {
                        let mut e = [0isize; 2];
                        e[k] = 1;
                        norm += ((wa[g.shift(p, e)] - wa[p]) / g.h).powi(2) * g.cell_volume();
                    }
                    for b in 0..spec.species {
                        norm += (wa[p] - sol.correctors.omega[i][b][p]).powi(2) * g.cell_volume();
                    }
                }
            }
            if norm > 1e-20 {
                let ratio = (s + c) / norm;
                assert!(ratio > 0.0, "{name}: {ratio}");
            }
        }
    }
}

#[test]
fn structural_identities_on_all_fixtures() {
    for (name, spec) in fixtures::named() {
        let n = if spec.dimension == 2 { 32 } else { 64 };
        let sol = solve_cell(&spec, n, &CellOptions::default()).unwrap();
        let d = &sol.model.diagnostics;
        assert!((d.normalization - 1.0).abs() < 1e-12, "{name}");
        assert!(d.lambda_gap < 1e-12, "{name}: {}", d.lambda_gap);
        assert!(d.fredholm_residual.iter().all(|f| f.abs() < 1e-10), "{name}");
        assert!(d.corrector_residual.iter().all(|r| *r < 1e-10), "{name}: {:?}", d.corrector_residual);
        assert!(d.spd_margin > 0.0, "{name}");
        assert!(d.dispersion_asymmetry < 1e-12, "{name}");
        assert!(d.dispersion_route_gap < 1e-9, "{name}");
        assert!(sol.model.init_weights.iter().all(|w| *w > 0.0), "{name}");
        assert!(sol.operator.column_defect() < 1e-10, "{name}");
    }
}
